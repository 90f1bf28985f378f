//! Subcommand implementations. Each validates its parameters, runs, and
//! returns records tagged with a grid-coordinate sort key.

use std::fmt;
use std::path::Path;

use bcube_core::distortion::{average_distortion, identity_distortion, EmbeddingReport};
use bcube_core::extremal::{extremal_search, ExtremalBudget, MAX_SEARCH_D, MAX_SEARCH_N};
use bcube_core::inequality::{
    check_exact_size, effective_alpha, sharpness_scan, verify_corollary, verify_theorem, MAX_EXACT_JOINT_DIM,
};
use bcube_core::io::{read_cube_function, read_manifest, read_poisson_function};
use bcube_core::mc::substream;
use bcube_core::poisson::{
    binomial_limit_experiment, check_cutoff, scaling_limit_demo, verify_poisson_corollary, verify_poisson_theorem,
    MAX_STRUCTURED_DIM,
};
use bcube_core::quadrature::integrate_time;
use bcube_core::semigroup::{
    apply_pt, delta_abs_moment, delta_conditional_mean, delta_moment_bound, dirichlet_form, dirichlet_form_gradient,
    one_d_kernel, verify_dipt,
};
use bcube_core::{
    BiasedMeasure, CubeFunction, Error, EvalMode, KernelParams, McSpec, NormSpec, PoissonFunction, QuadratureSpec,
    Record,
};
use clap::ValueEnum;
use rand::Rng;
use rayon::prelude::*;

use crate::config::Settings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    VerifyIdentities,
    VerifyDeltaBound,
    VerifyTheorem,
    VerifyCorollary,
    SharpnessScan,
    ExtremalSearch,
    PoissonVerify,
    BinomialLimit,
    ScalingLimit,
    Distortion,
    QuadratureSelftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyIdentities => "verify-identities",
            Command::VerifyDeltaBound => "verify-delta-bound",
            Command::VerifyTheorem => "verify-theorem",
            Command::VerifyCorollary => "verify-corollary",
            Command::SharpnessScan => "sharpness-scan",
            Command::ExtremalSearch => "extremal-search",
            Command::PoissonVerify => "poisson-verify",
            Command::BinomialLimit => "binomial-limit",
            Command::ScalingLimit => "scaling-limit",
            Command::Distortion => "distortion",
            Command::QuadratureSelftest => "quadrature-selftest",
        }
    }
}

/// Why a run could not produce its records.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    /// A parameter is missing or out of range; exit status 2.
    Usage { field: String, reason: String },
    /// The computation itself failed; exit status 1.
    Runtime(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage { field, reason } => write!(f, "invalid `{field}`: {reason}"),
            Failure::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

fn usage(field: &str, reason: impl Into<String>) -> Failure {
    Failure::Usage {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { name, reason } => usage(name, reason),
            Error::DimensionTooLarge { .. } => usage("n", e.to_string()),
            Error::CutoffMassTooLarge { .. } => usage("cutoff", e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

/// One output row: sort key, JSON record and CSV cells.
#[derive(Debug, Clone)]
pub struct Row {
    pub key: Vec<f64>,
    pub record: Record,
    pub csv: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub csv_header: Vec<&'static str>,
    pub rows: Vec<Row>,
}

impl Report {
    fn new(csv_header: Vec<&'static str>, mut rows: Vec<Row>) -> Self {
        rows.sort_by(|a, b| {
            a.key
                .iter()
                .zip(&b.key)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or_else(|| a.key.len().cmp(&b.key.len()))
        });
        Report { csv_header, rows }
    }
}

fn cells(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}

/// Typed access to the merged settings with per-command defaults.
struct Ctx<'a> {
    s: &'a Settings,
}

impl Ctx<'_> {
    fn seed(&self, why: &str) -> Outcome<u64> {
        self.s.seed.ok_or_else(|| usage("seed", format!("required for {why}")))
    }

    fn alphas(&self, default: &[f64], below_half: bool) -> Outcome<Vec<f64>> {
        let grid = self.s.alpha.clone().unwrap_or_else(|| default.to_vec());
        if grid.is_empty() {
            return Err(usage("alpha", "empty grid"));
        }
        for &a in &grid {
            if !(a.is_finite() && a > 0.0 && a < 1.0) {
                return Err(usage("alpha", format!("{a} is not in (0, 1)")));
            }
            if below_half && a >= 0.5 {
                return Err(usage("alpha", format!("{a} is not below 1/2")));
            }
        }
        Ok(grid)
    }

    /// Moment exponents; with `typed` they must also be valid type exponents.
    fn ps(&self, default: &[f64], typed: bool) -> Outcome<Vec<f64>> {
        let grid = self.s.p.clone().unwrap_or_else(|| default.to_vec());
        if grid.is_empty() {
            return Err(usage("p", "empty grid"));
        }
        for &p in &grid {
            if !(p.is_finite() && p >= 1.0) {
                return Err(usage("p", format!("{p} is not >= 1")));
            }
            if typed && p > 2.0 {
                return Err(usage("p", format!("{p} is above 2, the largest possible type")));
            }
        }
        Ok(grid)
    }

    fn times(&self, default: &[f64]) -> Outcome<Vec<f64>> {
        let grid = self.s.t.clone().unwrap_or_else(|| default.to_vec());
        if grid.is_empty() {
            return Err(usage("t", "empty grid"));
        }
        for &t in &grid {
            if !(t.is_finite() && t > 0.0) {
                return Err(usage("t", format!("{t} is not > 0")));
            }
        }
        Ok(grid)
    }

    /// `ℓ_q` with type exponent `p`; `q` defaults to `p`.
    fn norm(&self, p: f64) -> Outcome<NormSpec> {
        Ok(NormSpec::new(self.s.q.unwrap_or(p), p, self.s.type_constant.unwrap_or(1.0))?)
    }

    fn quad(&self, default_tolerance: f64) -> Outcome<QuadratureSpec> {
        let spec = QuadratureSpec::with_tolerance(self.s.tolerance.unwrap_or(default_tolerance));
        spec.validate()?;
        Ok(spec)
    }

    fn dim(&self, name: &str, value: Option<usize>, default: usize, max: usize) -> Outcome<usize> {
        let v = value.unwrap_or(default);
        if v == 0 || v > max {
            return Err(usage(name, format!("{v} is not in 1..={max}")));
        }
        Ok(v)
    }

    fn count(&self, name: &str, value: Option<usize>, default: usize) -> Outcome<usize> {
        let v = value.unwrap_or(default);
        if v == 0 {
            return Err(usage(name, "must be positive"));
        }
        Ok(v)
    }

    /// Exact unless `mode = "mc"` or a sample count is given.
    fn mode(&self, what: &str) -> Outcome<EvalMode> {
        let mc = match self.s.mode.as_deref() {
            None => self.s.samples.is_some(),
            Some("exact") => false,
            Some("mc") => true,
            Some(other) => return Err(usage("mode", format!("`{other}` is neither `exact` nor `mc`"))),
        };
        if !mc {
            return Ok(EvalMode::Exact);
        }
        let seed = self.seed(&format!("Monte Carlo {what}"))?;
        let spec = McSpec::new(self.s.samples.unwrap_or(20_000), seed, self.s.batches.unwrap_or(20))?;
        Ok(EvalMode::MonteCarlo(spec))
    }

    fn reject(&self, name: &str, present: bool, command: Command) -> Outcome<()> {
        if present {
            return Err(usage(name, format!("not used by {}", command.name())));
        }
        Ok(())
    }
}

const FUNCTION_SALT: u64 = 0x0f0f_5eed;

/// Uniform `[−1, 1]` tables; function `k` draws from its own stream.
fn random_cube_function(n: usize, d: usize, seed: u64, k: usize) -> Outcome<CubeFunction> {
    let mut rng = substream(seed ^ FUNCTION_SALT, k as u64, 0);
    Ok(CubeFunction::from_fn(n, d, |_, o| {
        o.iter_mut().for_each(|v| *v = rng.random_range(-1.0..=1.0))
    })?)
}

fn random_poisson_function(m: usize, k: usize, d: usize, seed: u64) -> Outcome<PoissonFunction> {
    let mut rng = substream(seed ^ FUNCTION_SALT, 0, 0);
    Ok(PoissonFunction::from_fn(m, k, d, |_, o| {
        o.iter_mut().for_each(|v| *v = rng.random_range(-1.0..=1.0))
    })?)
}

fn file_error(path: &Path, e: Error) -> Failure {
    match e {
        Error::Io(_) | Error::Parse { .. } => usage("input", format!("{}: {e}", path.display())),
        other => other.into(),
    }
}

/// Test functions: the `input` table, or `functions` random tables.
fn cube_functions(ctx: &Ctx, command: Command, max_n: usize) -> Outcome<Vec<(String, CubeFunction)>> {
    if let Some(path) = &ctx.s.input {
        ctx.reject("n", ctx.s.n.is_some(), command)?;
        let f = read_cube_function(path).map_err(|e| file_error(path, e))?;
        if f.dim_n() > max_n {
            return Err(usage("input", format!("dimension {} exceeds {max_n}", f.dim_n())));
        }
        return Ok(vec![(path.display().to_string(), f)]);
    }
    let n = ctx.dim("n", ctx.s.n, 4, max_n)?;
    let d = ctx.dim("d", ctx.s.d, 2, 64)?;
    let count = ctx.count("functions", ctx.s.functions, 1)?;
    let seed = ctx.s.seed.unwrap_or(0);
    (0..count)
        .map(|k| Ok((format!("random:{seed}:{k}"), random_cube_function(n, d, seed, k)?)))
        .collect()
}

pub fn run(command: Command, s: &Settings) -> Outcome<Report> {
    let ctx = Ctx { s };
    match command {
        Command::VerifyIdentities => verify_identities(&ctx),
        Command::VerifyDeltaBound => verify_delta_bound(&ctx),
        Command::VerifyTheorem => theorem(&ctx),
        Command::VerifyCorollary => corollary(&ctx),
        Command::SharpnessScan => sharpness(&ctx),
        Command::ExtremalSearch => extremal(&ctx),
        Command::PoissonVerify => poisson_verify(&ctx),
        Command::BinomialLimit => binomial_limit(&ctx),
        Command::ScalingLimit => scaling_limit(&ctx),
        Command::Distortion => distortion(&ctx),
        Command::QuadratureSelftest => quadrature_selftest(&ctx),
    }
}

const IDENTITY_MAX_N: usize = 8;

/// `P_t f(x) = Σ_y Π_i k_t(x_i, y_i) f(y)`, summed over every pair.
fn apply_pt_brute(f: &CubeFunction, params: &KernelParams) -> Vec<f64> {
    let n = f.dim_n();
    let d = f.dim_d();
    let sign = |x: usize, i: usize| if x >> i & 1 == 1 { 1.0 } else { -1.0 };
    let mut out = vec![0.0; f.len() * d];
    for x in 0..f.len() {
        for y in 0..f.len() {
            let w: f64 = (0..n).map(|i| one_d_kernel(params, sign(x, i), sign(y, i))).product();
            for c in 0..d {
                out[x * d + c] += w * f.row(y)[c];
            }
        }
    }
    out
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst residual over the identity checks at one `(α, t)`, and its name.
fn identity_residual(f: &CubeFunction, g: &CubeFunction, alpha: f64, t: f64) -> Outcome<(f64, &'static str)> {
    let mut worst = (0.0, "none");
    let mut track = |r: f64, what: &'static str| {
        if r > worst.0 || r.is_nan() {
            worst = (r, what);
        }
    };
    let n = f.dim_n();
    let measure = BiasedMeasure::new(alpha, n)?;
    let params = KernelParams::new(alpha, t)?;
    let pf = apply_pt(f, &params)?;

    track(apply_pt(f, &KernelParams::new(alpha, 0.0)?)?.max_abs_diff(f), "t = 0 identity");
    for x in [-1.0, 1.0] {
        let row: f64 = [-1.0, 1.0].iter().map(|&y| one_d_kernel(&params, x, y)).sum();
        track((row - 1.0).abs(), "kernel row sum");
        let mu = |s: f64| if s > 0.0 { alpha } else { 1.0 - alpha };
        track(
            (mu(x) * one_d_kernel(&params, x, -x) - mu(-x) * one_d_kernel(&params, -x, x)).abs(),
            "detailed balance",
        );
    }
    track(max_diff(&pf.expect(&measure)?, &f.expect(&measure)?), "stationarity");
    track(max_diff(pf.values(), &apply_pt_brute(f, &params)), "P_t against the full kernel");
    let half = KernelParams::new(alpha, 0.5 * t)?;
    track(apply_pt(&apply_pt(f, &half)?, &half)?.max_abs_diff(&pf), "semigroup property");
    for i in 0..n {
        let da = f.derivative_dalpha(i, alpha)?;
        let dp = f.derivative_partial(i)?;
        for x in 0..f.len() {
            let s = 1.0 - 2.0 * alpha + if x >> i & 1 == 1 { 1.0 } else { -1.0 };
            let want: Vec<f64> = dp.row(x).iter().map(|v| s * v).collect();
            track(max_diff(da.row(x), &want), "D_i^alpha identity");
        }
        track(verify_dipt(f, &params, i)?, "D_i P_t representation");
    }
    let e1 = dirichlet_form(f, g, alpha)?;
    let e2 = dirichlet_form_gradient(f, g, alpha)?;
    track((e1 - e2).abs(), "Dirichlet form");
    Ok(worst)
}

fn verify_identities(ctx: &Ctx) -> Outcome<Report> {
    let alphas = ctx.alphas(&[0.05, 0.1, 0.25, 0.49], false)?;
    let times = ctx.times(&[0.1, 1.0, 3.0])?;
    let n = ctx.dim("n", ctx.s.n, 4, IDENTITY_MAX_N)?;
    let d = ctx.dim("d", ctx.s.d, 2, 16)?;
    let count = ctx.count("functions", ctx.s.functions, 10)?;
    let tolerance = ctx.s.tolerance.unwrap_or(1e-12);
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(usage("tolerance", format!("{tolerance} is not > 0")));
    }
    let seed = ctx.s.seed.unwrap_or(0);
    let fs = (0..2 * count)
        .map(|k| random_cube_function(n, d, seed, k))
        .collect::<Outcome<Vec<_>>>()?;
    let grid: Vec<(f64, f64)> = alphas.iter().flat_map(|&a| times.iter().map(move |&t| (a, t))).collect();
    let rows = grid
        .par_iter()
        .map(|&(alpha, t)| {
            let mut worst = (0.0, "none");
            for pair in fs.chunks(2) {
                let r = identity_residual(&pair[0], &pair[1], alpha, t)?;
                if r.0 > worst.0 || r.0.is_nan() {
                    worst = r;
                }
            }
            let mut record = Record::new(Command::VerifyIdentities.name())
                .param("alpha", alpha)
                .param("t", t)
                .param("n", n)
                .param("d", d)
                .param("functions", count)
                .param("seed", seed)
                .sides(worst.0, tolerance);
            record.pass = worst.0 <= tolerance;
            record.notes = format!("largest residual from {}", worst.1);
            Ok(Row {
                key: vec![alpha, t],
                csv: cells(&[alpha, t, worst.0]),
                record,
            })
        })
        .collect::<Outcome<Vec<_>>>()?;
    Ok(Report::new(vec!["alpha", "t", "residual"], rows))
}

fn verify_delta_bound(ctx: &Ctx) -> Outcome<Report> {
    let alphas = ctx.alphas(&[0.01, 0.05, 0.1, 0.25, 0.4, 0.49], true)?;
    let times = ctx.times(&[0.001, 0.01, 0.1, 1.0, 3.0, 10.0])?;
    let ps = ctx.ps(&[1.0, 1.5, 2.0], false)?;
    let mut rows = Vec::new();
    for &alpha in &alphas {
        for &t in &times {
            let params = KernelParams::new(alpha, t)?;
            for &p in &ps {
                let bound = delta_moment_bound(alpha, t, p)?;
                let mut moment = 0.0f64;
                let mut mean = 0.0f64;
                for x in [-1.0, 1.0] {
                    moment = moment.max(delta_abs_moment(&params, p, x)?);
                    mean = mean.max(delta_conditional_mean(&params, x)?.abs());
                }
                let mut record = Record::new(Command::VerifyDeltaBound.name())
                    .param("alpha", alpha)
                    .param("t", t)
                    .param("p", p)
                    .sides(moment, bound);
                record.pass = moment <= bound * (1.0 + 1e-12) && mean <= 1e-14;
                record.notes = format!("max |E_x delta| = {mean:.3e}");
                rows.push(Row {
                    key: vec![alpha, t, p],
                    csv: cells(&[alpha, t, p, moment, bound, moment / bound]),
                    record,
                });
            }
        }
    }
    Ok(Report::new(vec!["alpha", "t", "p", "lhs", "rhs", "ratio"], rows))
}

fn scan_row(key: Vec<f64>, function: &str, alpha: f64, p: f64, record: Record) -> Row {
    let cells = vec![
        function.to_string(),
        alpha.to_string(),
        p.to_string(),
        record.lhs.unwrap_or(f64::NAN).to_string(),
        record.rhs.unwrap_or(f64::NAN).to_string(),
        record.ratio.unwrap_or(f64::NAN).to_string(),
    ];
    Row {
        key,
        record,
        csv: cells,
    }
}

const INEQUALITY_CSV: [&str; 6] = ["function", "alpha", "p", "lhs", "rhs", "ratio"];

fn theorem(ctx: &Ctx) -> Outcome<Report> {
    let alphas = ctx.alphas(&[0.1], false)?;
    let ps = ctx.ps(&[1.5], true)?;
    let mode = ctx.mode("verify-theorem")?;
    let quad = ctx.quad(1e-8)?;
    let max_n = match mode {
        EvalMode::Exact => MAX_EXACT_JOINT_DIM,
        EvalMode::MonteCarlo(_) => 20,
    };
    let fs = cube_functions(ctx, Command::VerifyTheorem, max_n)?;
    if matches!(mode, EvalMode::Exact) {
        for (_, f) in &fs {
            check_exact_size(f.dim_n())?;
        }
    }
    let norms = ps.iter().map(|&p| ctx.norm(p)).collect::<Outcome<Vec<_>>>()?;
    let grid: Vec<(usize, f64, usize)> = (0..fs.len())
        .flat_map(|k| {
            let np = ps.len();
            alphas.iter().flat_map(move |&a| (0..np).map(move |j| (k, a, j)))
        })
        .collect();
    let rows = grid
        .par_iter()
        .map(|&(k, alpha, j)| {
            let (name, f) = &fs[k];
            let rep = verify_theorem(f, alpha, ps[j], &norms[j], &quad, &mode)?;
            let record = rep.to_record(Command::VerifyTheorem.name()).param("function", name.as_str());
            Ok(scan_row(vec![k as f64, alpha, ps[j]], name, alpha, ps[j], record))
        })
        .collect::<Outcome<Vec<_>>>()?;
    Ok(Report::new(INEQUALITY_CSV.to_vec(), rows))
}

fn corollary(ctx: &Ctx) -> Outcome<Report> {
    let alphas = ctx.alphas(&[0.1], false)?;
    let ps = ctx.ps(&[1.5], true)?;
    ctx.reject("samples", ctx.s.samples.is_some(), Command::VerifyCorollary)?;
    let fs = cube_functions(ctx, Command::VerifyCorollary, 20)?;
    let norms = ps.iter().map(|&p| ctx.norm(p)).collect::<Outcome<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (k, (name, f)) in fs.iter().enumerate() {
        for &alpha in &alphas {
            for (&p, norm) in ps.iter().zip(&norms) {
                let rep = verify_corollary(f, alpha, p, norm)?;
                let record = rep.to_record(Command::VerifyCorollary.name()).param("function", name.as_str());
                rows.push(scan_row(vec![k as f64, alpha, p], name, alpha, p, record));
            }
        }
    }
    Ok(Report::new(INEQUALITY_CSV.to_vec(), rows))
}

fn sharpness(ctx: &Ctx) -> Outcome<Report> {
    let alphas = ctx.alphas(&[0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.45], true)?;
    let ps = ctx.ps(&[1.0, 1.5, 2.0], false)?;
    let n = ctx.dim("n", ctx.s.n, 8, usize::MAX)?;
    let mut rows = Vec::new();
    for &p in &ps {
        for r in sharpness_scan(p, n, &alphas)? {
            let mut record = Record::new(Command::SharpnessScan.name())
                .param("alpha", r.alpha)
                .param("p", r.p)
                .param("n", n)
                .param("order_ratio", r.order_ratio)
                .sides(r.lhs, r.rhs);
            record.pass = r.within_band && r.lhs <= r.rhs;
            record.notes = "lhs: scaled identity in closed form; rhs: 32 alpha^(1/p)".into();
            rows.push(Row {
                key: vec![r.alpha, r.p],
                csv: cells(&[r.alpha, r.p, r.lhs, r.rhs, r.ratio]),
                record,
            });
        }
    }
    Ok(Report::new(vec!["alpha", "p", "lhs", "rhs", "ratio"], rows))
}

fn extremal(ctx: &Ctx) -> Outcome<Report> {
    let seed = ctx.seed("extremal-search")?;
    let alphas = ctx.alphas(&[0.1], false)?;
    let ps = ctx.ps(&[2.0], true)?;
    let n = ctx.dim("n", ctx.s.n, 3, MAX_SEARCH_N)?;
    let d = ctx.dim("d", ctx.s.d, 3, MAX_SEARCH_D)?;
    let budget = ExtremalBudget::from_evaluations(ctx.count("budget", ctx.s.budget, 2000)?)?;
    let mut rows = Vec::new();
    for &alpha in &alphas {
        for &p in &ps {
            let norm = ctx.norm(p)?;
            let res = extremal_search(n, d, alpha, p, &norm, budget, seed)?;
            let bound = 32.0 * norm.type_constant * effective_alpha(alpha).0.powf(1.0 / p);
            let mut record = Record::new(Command::ExtremalSearch.name())
                .param("alpha", alpha)
                .param("p", p)
                .param("q", norm.q)
                .param("T", norm.type_constant)
                .param("n", n)
                .param("d", d)
                .param("seed", seed)
                .param("restarts", budget.restarts)
                .param("steps", budget.steps)
                .param("evaluations", res.evaluations)
                .param("warm_start_ratio", res.warm_start_ratio)
                .sides(res.ratio, bound);
            record.pass = res.ratio <= bound && res.ratio >= res.warm_start_ratio * (1.0 - 1e-12);
            record.notes = "lhs: best ratio found; rhs: corollary constant 32 T min(alpha, 1 - alpha)^(1/p)".into();
            rows.push(Row {
                key: vec![alpha, p],
                csv: cells(&[alpha, p, res.ratio, bound, res.ratio / bound]),
                record,
            });
        }
    }
    Ok(Report::new(vec!["alpha", "p", "lhs", "rhs", "ratio"], rows))
}

fn poisson_function(ctx: &Ctx, default_random: bool) -> Outcome<(String, PoissonFunction)> {
    if let Some(path) = &ctx.s.input {
        let f = read_poisson_function(path).map_err(|e| file_error(path, e))?;
        check_cutoff(f.dim_m(), f.cutoff())?;
        return Ok((path.display().to_string(), f));
    }
    let m = ctx.dim("m", ctx.s.m, if default_random { 2 } else { 1 }, 8)?;
    let k = ctx.s.cutoff.unwrap_or(12);
    if k < 2 {
        return Err(usage("cutoff", format!("{k} is below 2")));
    }
    check_cutoff(m, k)?;
    let d = ctx.dim("d", ctx.s.d, 1, 16)?;
    if default_random {
        let seed = ctx.s.seed.unwrap_or(0);
        Ok((format!("random:{seed}"), random_poisson_function(m, k, d, seed)?))
    } else {
        // the indicator of the origin, an equality case at p = 1
        let f = PoissonFunction::from_fn(m, k, d, |x, o| {
            let v = if x.iter().all(|&xi| xi == 0) { 1.0 } else { 0.0 };
            o.iter_mut().for_each(|c| *c = v);
        })?;
        Ok(("indicator".into(), f))
    }
}

fn poisson_verify(ctx: &Ctx) -> Outcome<Report> {
    let (name, f) = poisson_function(ctx, true)?;
    let ps = ctx.ps(&[1.5], true)?;
    let mode = ctx.mode("poisson-verify")?;
    let quad = ctx.quad(1e-8)?;
    let mut rows = Vec::new();
    for &p in &ps {
        let norm = ctx.norm(p)?;
        let checks = [
            ("corollary", verify_poisson_corollary(&f, p, &norm)?),
            ("theorem", verify_poisson_theorem(&f, p, &norm, &quad, &mode)?),
        ];
        for (kind, (label, rep)) in checks.into_iter().enumerate() {
            let record = rep
                .to_record(Command::PoissonVerify.name())
                .param("function", name.as_str())
                .param("inequality", label);
            let csv = vec![
                p.to_string(),
                label.to_string(),
                rep.lhs.to_string(),
                rep.rhs.to_string(),
                rep.ratio.to_string(),
            ];
            rows.push(Row {
                key: vec![p, kind as f64],
                record,
                csv,
            });
        }
    }
    Ok(Report::new(vec!["p", "inequality", "lhs", "rhs", "ratio"], rows))
}

fn binomial_limit(ctx: &Ctx) -> Outcome<Report> {
    let mut ns = ctx.s.n_list.clone().unwrap_or_else(|| vec![16, 64, 256, 1024]);
    ns.sort_unstable();
    ns.dedup();
    if ns.first().map_or(true, |&n| n < 2) {
        return Err(usage("n_list", "needs sizes of at least 2"));
    }
    let times = ctx.times(&[1.0])?;
    let cutoff = ctx.s.cutoff.unwrap_or(40);
    let mut rows = Vec::new();
    for &t in &times {
        let table = binomial_limit_experiment(&ns, t, cutoff)?;
        let mut previous: Option<f64> = None;
        for r in table {
            let mut record = Record::new(Command::BinomialLimit.name())
                .param("n", r.n)
                .param("t", r.t)
                .param("cutoff", cutoff)
                .param("outside_mass", r.outside_mass);
            record.lhs = Some(r.tv_distance);
            record.error_estimate = Some(r.outside_mass);
            record.pass = previous.map_or(true, |prev| r.tv_distance <= prev);
            record.notes = match previous {
                Some(prev) => format!("TV must not exceed {prev:.6e}, its value at the previous n"),
                None => "first size of the sweep".into(),
            };
            previous = Some(r.tv_distance);
            rows.push(Row {
                key: vec![t, r.n as f64],
                csv: cells(&[r.n as f64, r.t, r.tv_distance]),
                record,
            });
        }
    }
    Ok(Report::new(vec!["n", "t", "tv_distance"], rows))
}

fn scaling_limit(ctx: &Ctx) -> Outcome<Report> {
    let (name, f) = poisson_function(ctx, false)?;
    let ps = ctx.ps(&[2.0], true)?;
    let mode = ctx.mode("scaling-limit")?;
    let quad = ctx.quad(1e-8)?;
    let mut ns = ctx.s.n_list.clone().unwrap_or_else(|| vec![4, 8, 16]);
    ns.sort_unstable();
    ns.dedup();
    for &n in &ns {
        if n < 2 || f.dim_m() * n > MAX_STRUCTURED_DIM {
            return Err(usage(
                "n_list",
                format!("{n} is outside 2..={} for m = {}", MAX_STRUCTURED_DIM / f.dim_m(), f.dim_m()),
            ));
        }
    }
    let mut rows = Vec::new();
    for &p in &ps {
        let norm = ctx.norm(p)?;
        let rep = scaling_limit_demo(&f, &ns, p, &norm, &quad, &mode)?;
        let base = |n: f64| {
            Record::new(Command::ScalingLimit.name())
                .param("function", name.as_str())
                .param("p", p)
                .param("side", if n.is_finite() { "cube" } else { "poisson" })
                .param("method", serde_json::to_value(mode.method()).expect("enum"))
        };
        let rhs = &rep.poisson_rhs;
        let slack = rhs.quadrature_error + 3.0 * rhs.mc_error;
        let mut record = base(f64::INFINITY).sides(rep.poisson_lhs, rhs.value);
        record.error_estimate = Some(rhs.quadrature_error + rhs.mc_error);
        record.pass = rep.poisson_lhs <= rhs.value * (1.0 + 1e-6) + slack;
        record.notes = "the Poisson inequality itself".into();
        rows.push(Row {
            key: vec![p, f64::INFINITY],
            csv: cells(&[p, f64::INFINITY, rep.poisson_lhs, rhs.value, 0.0, 0.0, 0.0]),
            record,
        });
        for r in &rep.rows {
            let mut record = base(r.n as f64)
                .param("plus_part", r.plus_part)
                .param("lhs_gap", r.lhs_gap)
                .param("rhs_gap", r.rhs_gap)
                .sides(r.cube_lhs, r.cube_rhs);
            record.params.insert("n".into(), r.n.into());
            record.pass = r.cube_lhs <= r.cube_rhs * (1.0 + 1e-6) + quad.tolerance;
            record.notes = "cube inequality for the structured function at alpha = 1/n".into();
            rows.push(Row {
                key: vec![p, r.n as f64],
                csv: cells(&[p, r.n as f64, r.cube_lhs, r.cube_rhs, r.plus_part, r.lhs_gap, r.rhs_gap]),
                record,
            });
        }
    }
    Ok(Report::new(vec!["p", "n", "lhs", "rhs", "plus_part", "lhs_gap", "rhs_gap"], rows))
}

fn embedding_row(source: &str, index: usize, rep: &EmbeddingReport) -> Row {
    let alpha = rep.params.get("alpha").and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
    let n = rep.params.get("n").and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
    let mut record = Record::new(Command::Distortion.name()).sides(rep.lower_bound.value, rep.distortion);
    record.params = rep.params.clone();
    record.params.insert("source".into(), source.into());
    record.params.insert("lipschitz".into(), rep.lipschitz.into());
    record.params.insert("avg_displacement".into(), rep.avg_displacement.into());
    record.params.insert("avg_hamming".into(), rep.avg_hamming.into());
    record.pass = rep.consistent();
    record.notes = rep.notes.join("; ");
    Row {
        key: vec![index as f64, n, alpha],
        csv: vec![
            source.to_string(),
            n.to_string(),
            alpha.to_string(),
            rep.distortion.to_string(),
            rep.lower_bound.value.to_string(),
        ],
        record,
    }
}

fn distortion(ctx: &Ctx) -> Outcome<Report> {
    let mut rows = Vec::new();
    if let Some(path) = &ctx.s.manifest {
        ctx.reject("input", ctx.s.input.is_some(), Command::Distortion)?;
        let entries = read_manifest(path).map_err(|e| match e {
            Error::Io(_) | Error::Parse { .. } => usage("manifest", format!("{}: {e}", path.display())),
            other => other.into(),
        })?;
        for (k, entry) in entries.iter().enumerate() {
            let f = read_cube_function(&entry.path).map_err(|e| file_error(&entry.path, e))?;
            for &alpha in &entry.alphas {
                let rep = average_distortion(&f, alpha, &entry.norm)?;
                rows.push(embedding_row(&entry.path.display().to_string(), k, &rep));
            }
        }
    } else if let Some(path) = &ctx.s.input {
        let f = read_cube_function(path).map_err(|e| file_error(path, e))?;
        let alphas = ctx.alphas(&[0.25], false)?;
        for &p in &ctx.ps(&[2.0], true)? {
            let norm = ctx.norm(p)?;
            for &alpha in &alphas {
                rows.push(embedding_row(&path.display().to_string(), 0, &average_distortion(&f, alpha, &norm)?));
            }
        }
    } else {
        let alphas = ctx.alphas(&[0.25], false)?;
        let ns = ctx.s.n_list.clone().unwrap_or_else(|| vec![4, 16, 64, 256]);
        for &n in &ns {
            for &alpha in &alphas {
                rows.push(embedding_row("identity", 0, &identity_distortion(n, alpha)?));
            }
        }
    }
    Ok(Report::new(vec!["source", "n", "alpha", "distortion", "lower_bound"], rows))
}

fn quadrature_selftest(ctx: &Ctx) -> Outcome<Report> {
    let quad = ctx.quad(1e-10)?;
    let alphas = ctx.alphas(&[0.05, 0.1, 0.25, 0.45], false)?;
    let ps = ctx.ps(&[1.0, 1.5, 2.0], false)?;
    let accept = quad.tolerance.max(1e-8);
    let mut rows = Vec::new();
    let mut push = |key: Vec<f64>, label: &str, alpha: f64, p: f64, value: f64, error: f64, exact: f64| {
        let mut record = Record::new(Command::QuadratureSelftest.name())
            .param("integral", label)
            .param("tolerance", quad.tolerance)
            .sides(value, exact);
        if label == "corollary" {
            record = record.param("alpha", alpha).param("p", p);
        }
        record.error_estimate = Some(error);
        record.pass = (value - exact).abs() <= accept;
        record.notes = format!("|value - exact| = {:.3e}", (value - exact).abs());
        rows.push(Row {
            key,
            csv: vec![
                label.to_string(),
                alpha.to_string(),
                p.to_string(),
                value.to_string(),
                exact.to_string(),
                (value - exact).abs().to_string(),
            ],
            record,
        });
    };
    for &alpha in &alphas {
        for &p in &ps {
            // ∫ (2α)^{1/p−1} e^{−t} (1 − e^{−t})^{1/p−1} dt = p (2α)^{1/p−1}
            let c = (2.0 * alpha).powf(1.0 / p - 1.0);
            let r = integrate_time(|t| Ok(c * (-t).exp() * (-(-t).exp_m1()).powf(1.0 / p - 1.0)), &quad)?;
            push(vec![0.0, alpha, p], "corollary", alpha, p, r.value, r.error, p * c);
        }
    }
    // ∫ e^{−t} (1 − e^{−t})^{−1/2} dt = 2
    let r = integrate_time(|t| Ok((-t).exp() / (-(-t).exp_m1()).sqrt()), &quad)?;
    push(vec![1.0], "poisson", f64::NAN, f64::NAN, r.value, r.error, 2.0);
    Ok(Report::new(vec!["integral", "alpha", "p", "value", "exact", "abs_error"], rows))
}
