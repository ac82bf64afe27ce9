//! Error curves and their on-disk form.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub t: usize,
    pub noise_fraction: f64,
    pub mean_error: f64,
    /// Standard error of the mean over trials.
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorCurve {
    pub rows: Vec<ErrorRow>,
}

impl ErrorCurve {
    /// Mean and standard error of `errors`, added as one row.
    pub fn push(&mut self, t: usize, noise_fraction: f64, errors: &[f64]) {
        let n = errors.len();
        let mean = if n == 0 { f64::NAN } else { errors.iter().sum::<f64>() / n as f64 };
        let stderr = if n < 2 {
            0.0
        } else {
            let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        self.rows.push(ErrorRow {
            t,
            noise_fraction,
            mean_error: mean,
            stderr,
            trials: n,
        });
    }

    pub fn get(&self, t: usize, noise_fraction: f64) -> Option<&ErrorRow> {
        self.rows
            .iter()
            .find(|r| r.t == t && r.noise_fraction == noise_fraction)
    }

    /// Rows grouped by noise fraction (in first-seen order), ascending `T`
    /// within each group.
    pub fn sorted_rows(&self) -> Vec<&ErrorRow> {
        let mut levels: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !levels.contains(&r.noise_fraction) {
                levels.push(r.noise_fraction);
            }
        }
        let mut out = Vec::with_capacity(self.rows.len());
        for level in levels {
            let mut group: Vec<&ErrorRow> = self.rows.iter().filter(|r| r.noise_fraction == level).collect();
            group.sort_by_key(|r| r.t);
            out.extend(group);
        }
        out
    }
}

/// Six significant digits, shortest form.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    rounded.to_string()
}

pub const CSV_HEADER: &str = "T,noise_fraction,mean_error,stderr,trials";

pub fn format_csv(curve: &ErrorCurve) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in curve.sorted_rows() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.t,
            sig6(r.noise_fraction),
            sig6(r.mean_error),
            sig6(r.stderr),
            r.trials
        );
    }
    out
}

/// Gnuplot script drawing one error-bar line per noise fraction.
pub fn format_gplot(curve: &ErrorCurve) -> String {
    let mut levels: Vec<String> = Vec::new();
    for r in curve.sorted_rows() {
        let l = sig6(r.noise_fraction);
        if !levels.contains(&l) {
            levels.push(l);
        }
    }
    let mut out = String::new();
    out.push_str("set datafile separator ','\n");
    out.push_str("set key top right\n");
    out.push_str("set xlabel 'number of samples T'\n");
    out.push_str("set ylabel 'mean topology error'\n");
    out.push_str("set yrange [0:*]\n");
    let plots: Vec<String> = levels
        .iter()
        .map(|l| {
            format!(
                "'errors.csv' every ::1 using 1:(strcol(2) eq '{l}' ? $3 : 1/0):4 with yerrorlines title 'noise {l}'"
            )
        })
        .collect();
    let _ = writeln!(out, "plot {}", plots.join(", \\\n     "));
    out
}

/// Writes `errors.csv` and `errors.gplot` into `outdir`, creating it if
/// needed.
pub fn emit_results(curve: &ErrorCurve, outdir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let outdir = outdir.as_ref();
    if curve.rows.is_empty() {
        return Err(Error::InvalidArgument("error curve has no rows".into()));
    }
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let csv = outdir.join("errors.csv");
    let plot = outdir.join("errors.gplot");
    fs::write(&csv, format_csv(curve)).map_err(|e| Error::io(&csv, e))?;
    fs::write(&plot, format_gplot(curve)).map_err(|e| Error::io(&plot, e))?;
    Ok(vec![csv, plot])
}
