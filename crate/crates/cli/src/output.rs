//! JSON-lines and CSV emission.
//!
//! The first JSON line is a header holding the timestamp and the resolved
//! settings; everything after it depends only on the settings.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;

use crate::commands::{Command, Report};
use crate::config::Settings;

pub fn header(command: Command, settings: &Settings) -> String {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut settings = serde_json::to_value(settings).expect("settings serialize");
    if let Some(map) = settings.as_object_mut() {
        map.retain(|_, v| !v.is_null());
    }
    json!({
        "header": {
            "command": command.name(),
            "version": env!("CARGO_PKG_VERSION"),
            "timestamp": timestamp,
            "settings": settings,
        }
    })
    .to_string()
}

fn write_lines(out: &mut dyn Write, command: Command, settings: &Settings, report: &Report) -> io::Result<()> {
    writeln!(out, "{}", header(command, settings))?;
    for row in &report.rows {
        writeln!(out, "{}", row.record.to_json_line())?;
    }
    out.flush()
}

pub fn write(command: Command, settings: &Settings, report: &Report) -> io::Result<()> {
    match &settings.out {
        Some(path) => write_lines(&mut BufWriter::new(File::create(path)?), command, settings, report)?,
        None => write_lines(&mut io::stdout().lock(), command, settings, report)?,
    }
    if let Some(path) = &settings.csv {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&report.csv_header)?;
        for row in &report.rows {
            w.write_record(&row.csv)?;
        }
        w.flush()?;
    }
    Ok(())
}
