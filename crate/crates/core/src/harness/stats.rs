//! Trial aggregation: geometric statistics for errors, arithmetic for
//! counts and condition numbers, plus the CSV writers.

use std::io::Write as _;
use std::path::Path;

use super::config::Strategy;

/// Errors are clamped here before taking logs so exact recoveries do not
/// blow up the geometric statistics.
pub const ERROR_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone)]
pub struct TrialStats {
    pub n: usize,
    pub m: usize,
    pub strategy: Strategy,
    pub err_gmean: f64,
    pub err_gstd: f64,
    pub cond_mean: f64,
    pub cond_std: f64,
}

pub fn geometric_mean_std(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty());
    let logs: Vec<f64> = values.iter().map(|&v| v.max(ERROR_FLOOR).ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let var = if logs.len() > 1 {
        logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (logs.len() - 1) as f64
    } else {
        0.0
    };
    (mean.exp(), var.sqrt().exp())
}

pub fn arithmetic_mean_std(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty());
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

impl TrialStats {
    pub fn from_trials(
        n: usize,
        m: usize,
        strategy: Strategy,
        errors: &[f64],
        conds: &[f64],
    ) -> Self {
        let (err_gmean, err_gstd) = geometric_mean_std(errors);
        // Infinite condition numbers (rank-deficient draws) are clipped to
        // a large sentinel so means stay finite and visibly enormous.
        let clipped: Vec<f64> = conds.iter().map(|&c| c.min(1e308)).collect();
        let (cond_mean, cond_std) = arithmetic_mean_std(&clipped);
        Self {
            n,
            m,
            strategy,
            err_gmean,
            err_gstd,
            cond_mean,
            cond_std,
        }
    }
}

pub fn write_stats_csv(path: &Path, rows: &[TrialStats]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "n,m,strategy,err_gmean,err_gstd,cond_mean,cond_std")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e}",
            r.n, r.m, r.strategy, r.err_gmean, r.err_gstd, r.cond_mean, r.cond_std
        )?;
    }
    Ok(())
}
