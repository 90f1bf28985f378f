//! Run configuration: a flat TOML file merged with command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

/// A scalar or a list, so `alpha = 0.1` and `alpha = [0.1, 0.2]` both parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Grid<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Grid::One(v) => vec![v.clone()],
            Grid::Many(v) => v.clone(),
        }
    }
}

/// Parameters shared by every subcommand. Each is optional; commands fill in
/// their own defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Master seed; required by any command that samples.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON-lines report path (default: stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Optional CSV table path.
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    /// Quadrature tolerance.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    /// Monte Carlo samples per estimate; implies `--mode mc` unless a mode is given.
    #[arg(long, global = true)]
    pub samples: Option<u64>,
    /// Batches for the batch-means error bar.
    #[arg(long, global = true)]
    pub batches: Option<u64>,
    /// `exact` or `mc`.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Cube dimension.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Poisson lattice dimension.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Target dimension.
    #[arg(long, global = true)]
    pub d: Option<usize>,
    /// Bias, or a comma-separated grid.
    #[arg(long, global = true, value_delimiter = ',', num_args = 1..)]
    #[serde(default, with = "grid_opt")]
    pub alpha: Option<Vec<f64>>,
    /// Moment exponent, or a comma-separated grid.
    #[arg(long, global = true, value_delimiter = ',', num_args = 1..)]
    #[serde(default, with = "grid_opt")]
    pub p: Option<Vec<f64>>,
    /// Exponent of the target ℓ_q norm (default: p).
    #[arg(long, global = true)]
    pub q: Option<f64>,
    /// Type constant of the target space.
    #[arg(long = "type-constant", global = true)]
    pub type_constant: Option<f64>,
    /// Time, or a comma-separated grid.
    #[arg(long, global = true, value_delimiter = ',', num_args = 1..)]
    #[serde(default, with = "grid_opt")]
    pub t: Option<Vec<f64>>,
    /// Comma-separated list of sizes for the limit experiments.
    #[arg(long = "n-list", global = true, value_delimiter = ',', num_args = 1..)]
    #[serde(default, with = "grid_opt")]
    pub n_list: Option<Vec<usize>>,
    /// Truncation `K` of the Poisson lattice, or the support box of the TV computation.
    #[arg(long, global = true)]
    pub cutoff: Option<usize>,
    /// Number of random test functions.
    #[arg(long, global = true)]
    pub functions: Option<usize>,
    /// Evaluation budget of the extremal search.
    #[arg(long, global = true)]
    pub budget: Option<usize>,
    /// Function table to test instead of a random one.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Embedding manifest for `distortion`.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

mod grid_opt {
    use super::Grid;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Serialize + Clone, S: Serializer>(v: &Option<Vec<T>>, s: S) -> Result<S::Ok, S::Error> {
        v.serialize(s)
    }

    pub fn deserialize<'de, T: Deserialize<'de> + Clone, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<T>>, D::Error> {
        Ok(Option::<Grid<T>>::deserialize(d)?.map(|g| g.values()))
    }
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),*) => {
        $(if $top.$field.is_some() { $base.$field = $top.$field.clone(); })*
    };
}

impl Settings {
    /// `self` with every field set in `flags` replaced.
    pub fn overlaid(mut self, flags: &Settings) -> Settings {
        overlay!(
            self, flags, seed, out, csv, tolerance, samples, batches, mode, n, m, d, alpha, p, q, type_constant, t,
            n_list, cutoff, functions, budget, input, manifest
        );
        self
    }

    /// Paths in a config file are relative to the file.
    fn rebase(mut self, base: &Path) -> Settings {
        for path in [&mut self.out, &mut self.csv, &mut self.input, &mut self.manifest].into_iter().flatten() {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        self
    }
}

/// Reads a config file. Unknown keys are rejected.
pub fn load(path: &Path) -> Result<Settings, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let settings: Settings = toml::from_str(&text).map_err(|e| format!("{}: {}", path.display(), e.message()))?;
    Ok(settings.rebase(path.parent().unwrap_or(Path::new("."))))
}
