//! CSV emission: training curves (`epoch,episodes,env_steps,avg_reward,
//! loss`), the teacher's Q-value log (`step,q0,q1`), and the coding
//! report. All files use LF line endings and plain decimal numbers.

use std::fs;
use std::path::Path;

use sdn_core::coding::{CodingReport, ValueRange};
use sdn_core::stats::EpisodeStats;

use crate::CliError;

pub const CURVE_HEADER: &str = "epoch,episodes,env_steps,avg_reward,loss";
pub const QLOG_HEADER: &str = "step,q0,q1";

/// Rounds to at most `digits` significant digits; the shortest plain
/// decimal rendering of the result.
pub fn format_sig(v: f64, digits: u32) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    let factor = 10f64.powi(digits as i32 - 1 - mag);
    format!("{}", (v * factor).round() / factor)
}

fn write_file(path: &Path, contents: &str) -> Result<usize, CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)
                .map_err(|e| CliError::Runtime(format!("create {}: {e}", dir.display())))?;
        }
    }
    fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("write {}: {e}", path.display())))?;
    Ok(contents.len())
}

/// Writes a training curve; returns the byte count.
pub fn emit_curve(rows: &[EpisodeStats], path: &Path) -> Result<usize, CliError> {
    if rows.is_empty() {
        return Err(CliError::Runtime(format!(
            "refusing to write an empty curve to {}",
            path.display()
        )));
    }
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch,
            r.episodes,
            r.env_steps,
            format_sig(r.avg_reward, 6),
            format_sig(r.loss, 6)
        ));
    }
    write_file(path, &out)
}

/// Writes the sampled Q-value log consumed by `analyze-coding`.
pub fn emit_qlog(rows: &[(usize, f64, f64)], path: &Path) -> Result<usize, CliError> {
    if rows.is_empty() {
        return Err(CliError::Runtime(format!(
            "refusing to write an empty Q-value log to {}",
            path.display()
        )));
    }
    let mut out = String::from(QLOG_HEADER);
    out.push('\n');
    for (step, q0, q1) in rows {
        out.push_str(&format!("{step},{q0},{q1}\n"));
    }
    write_file(path, &out)
}

/// Reads a `step,q0,q1` log back into memory.
pub fn read_qlog(path: &Path) -> Result<Vec<(usize, f64, f64)>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == QLOG_HEADER => {}
        other => {
            return Err(CliError::Runtime(format!(
                "{}: expected header `{QLOG_HEADER}`, found {:?}",
                path.display(),
                other.unwrap_or_default()
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let parse_err = || {
            CliError::Runtime(format!("{}: malformed row {} `{line}`", path.display(), i + 2))
        };
        let step = cells.next().and_then(|c| c.trim().parse().ok()).ok_or_else(parse_err)?;
        let q0 = cells.next().and_then(|c| c.trim().parse().ok()).ok_or_else(parse_err)?;
        let q1 = cells.next().and_then(|c| c.trim().parse().ok()).ok_or_else(parse_err)?;
        if cells.next().is_some() {
            return Err(parse_err());
        }
        rows.push((step, q0, q1));
    }
    if rows.is_empty() {
        return Err(CliError::Runtime(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

/// Writes the coding report as a one-row CSV next to its input range.
pub fn emit_coding_csv(
    range: &ValueRange,
    report: &CodingReport,
    path: &Path,
) -> Result<usize, CliError> {
    let mut out = String::from(
        "x_min,x_max,acc_x,acc_fr,step,required_timesteps,lossless_product\n",
    );
    out.push_str(&format!(
        "{},{},{},{},{},{},{}\n",
        range.x_min,
        range.x_max,
        range.acc_x,
        report.acc_fr,
        report.step,
        report.required_timesteps,
        report.lossless_product
    ));
    write_file(path, &out)
}
