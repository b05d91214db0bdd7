//! Minimum-sample scaling search: for each basis size, the smallest
//! nested sample count whose weighted design matrix is conditioned below
//! a tolerance. Searches increment the draw one sample at a time and
//! track the condition number through the accumulated sample Gram, whose
//! extreme eigenvalues are estimated by warm-started power iterations and
//! confirmed exactly before a passage is accepted.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use super::stats::{arithmetic_mean_std, median};
use super::{strategy_measures, HarnessError, StrategyMeasures};
use crate::measure::{monte_carlo_grid, sample_atoms_with, DiscreteMeasure, RngSpec};
use crate::operators::{evaluate_block, ChannelBasis, ChannelKind, ChannelOperator};
use crate::polybasis::{hyperbolic_cross, sobolev_tensor_basis, BasisEvalTable};

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub strategy: String,
    pub m_mean: f64,
    pub m_std: f64,
    pub m_median: f64,
    pub censored: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingTrialRecord {
    pub n: usize,
    pub strategy: String,
    pub trial: usize,
    pub min_m: usize,
    pub censored: bool,
}

#[derive(Debug, Clone)]
pub struct ScalingOutcome {
    pub rows: Vec<ScalingRow>,
    pub per_trial: Vec<ScalingTrialRecord>,
}

/// First-passage search for `cond(A(m)) <= tol` over nested draws.
/// Returns the passing `m` and whether the cap censored the search.
pub fn min_m_for_cond(
    op: &ChannelOperator,
    table: &BasisEvalTable,
    measure: &DiscreteMeasure,
    tol: f64,
    m_max: usize,
    rng_spec: RngSpec,
) -> Result<(usize, bool), HarnessError> {
    let n = table.n_basis();
    let d1 = op.output_dim();
    let m_lo = n.div_ceil(d1).max(1);
    let mut rng = rng_spec.rng();
    let mut gram: DMatrix<f64> = DMatrix::zeros(n, n);
    let mut warm: Option<(DVector<f64>, DVector<f64>)> = None;
    let small = n <= 8;
    for m in 1..=m_max {
        let atom = sample_atoms_with(measure, 1, &mut rng)[0];
        let nu = measure.nu_at(atom);
        let block = evaluate_block(op, atom, &ChannelBasis::Poly(table))?.expect_real();
        // cond(A(m))^2 = cond(sum (1/nu_i) B_i^T B_i); the 1/m factor
        // cancels in the ratio.
        gram.gemm_tr(1.0 / nu, &block, &block, 1.0);
        if m < m_lo {
            continue;
        }
        let chol = match gram.clone().cholesky() {
            Some(c) => c,
            None => continue,
        };
        if small || warm.is_none() {
            let (cond, vmax, vmin) = exact_cond(&gram);
            if cond <= tol {
                return Ok((m, false));
            }
            warm = Some((vmax, vmin));
            continue;
        }
        let (vmax, vmin) = warm.as_mut().unwrap();
        // Rayleigh quotients of warm-started iterates bracket the true
        // condition number from below, so a passage is never missed.
        let mut est_max = 0.0;
        for _ in 0..2 {
            let y = &gram * &*vmax;
            let norm = y.norm();
            if norm > 0.0 {
                *vmax = y / norm;
            }
            est_max = vmax.dot(&(&gram * &*vmax));
        }
        let mut est_min = f64::INFINITY;
        for _ in 0..2 {
            let y = chol.solve(&*vmin);
            let norm = y.norm();
            if norm > 0.0 {
                *vmin = y / norm;
            }
            est_min = vmin.dot(&(&gram * &*vmin));
        }
        if est_min <= 0.0 {
            continue;
        }
        let est_cond = (est_max / est_min).sqrt();
        if est_cond <= tol * 1.05 {
            let (cond, wmax, wmin) = exact_cond(&gram);
            if cond <= tol {
                return Ok((m, false));
            }
            warm = Some((wmax, wmin));
        }
    }
    Ok((m_max, true))
}

fn exact_cond(gram: &DMatrix<f64>) -> (f64, DVector<f64>, DVector<f64>) {
    let eig = SymmetricEigen::new(gram.clone());
    let mut imax = 0;
    let mut imin = 0;
    for i in 0..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[imax] {
            imax = i;
        }
        if eig.eigenvalues[i] < eig.eigenvalues[imin] {
            imin = i;
        }
    }
    let lmax = eig.eigenvalues[imax];
    let lmin = eig.eigenvalues[imin];
    let cond = if lmin > 0.0 {
        (lmax / lmin).sqrt()
    } else {
        f64::INFINITY
    };
    (
        cond,
        eig.eigenvectors.column(imax).clone_owned(),
        eig.eigenvectors.column(imin).clone_owned(),
    )
}

pub fn run_scaling(cfg: &ExperimentConfig) -> Result<ScalingOutcome, HarnessError> {
    let d = cfg.dim;
    let root = RngSpec::new(cfg.seed);
    let grid = Arc::new(monte_carlo_grid(
        super::polyreg::grid_dist(cfg.family, d),
        cfg.grid_points(),
        root.substream(&[1]),
    )?);
    let op = ChannelOperator::new(ChannelKind::GradAugmented { value_scale: 1.0 }, grid.clone());
    let orders = cfg.orders_or_default(ExperimentKind::Scaling);
    let mut rows = Vec::new();
    let mut per_trial = Vec::new();
    for (oi, &p) in orders.iter().enumerate() {
        let set = hyperbolic_cross(d, p)?;
        let n = set.len();
        let table = sobolev_tensor_basis(&set, &grid, cfg.family)?;
        for (si, &strategy) in cfg.strategies.iter().enumerate() {
            let measure = match strategy_measures(strategy, &op, &table, &grid)? {
                StrategyMeasures::Single(mu) => mu,
                StrategyMeasures::PerElement(_) => {
                    return Err(HarnessError::Config(
                        "the scaling search supports single-measure strategies only".into(),
                    ))
                }
            };
            let mut mins = Vec::with_capacity(cfg.trials);
            let mut censored = 0usize;
            for trial in 0..cfg.trials {
                let rng = root.substream(&[4, oi as u64, trial as u64, si as u64]);
                let (m, cens) =
                    min_m_for_cond(&op, &table, &measure, cfg.cond_tol, cfg.m_max, rng)?;
                if cens {
                    censored += 1;
                }
                mins.push(m as f64);
                per_trial.push(ScalingTrialRecord {
                    n,
                    strategy: strategy.to_string(),
                    trial,
                    min_m: m,
                    censored: cens,
                });
            }
            let (m_mean, m_std) = arithmetic_mean_std(&mins);
            rows.push(ScalingRow {
                n,
                strategy: strategy.to_string(),
                m_mean,
                m_std,
                m_median: median(&mins),
                censored,
                trials: cfg.trials,
            });
        }
    }
    Ok(ScalingOutcome { rows, per_trial })
}

pub fn write_outputs(
    cfg: &ExperimentConfig,
    outcome: &ScalingOutcome,
    dir: &Path,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join("scaling.csv"))?);
    writeln!(out, "n,strategy,m_mean,m_std,m_median,censored,trials")?;
    for r in &outcome.rows {
        writeln!(
            out,
            "{},{},{:.6e},{:.6e},{:.6e},{},{}",
            r.n, r.strategy, r.m_mean, r.m_std, r.m_median, r.censored, r.trials
        )?;
    }
    drop(out);
    let trace = serde_json::json!({
        "experiment": "scaling",
        "config": cfg,
        "rows": outcome.rows,
        "trials": outcome.per_trial,
    });
    std::fs::write(dir.join("trace.json"), serde_json::to_string_pretty(&trace)?)?;
    if cfg.plot {
        let mut series = Vec::new();
        for &strategy in &cfg.strategies {
            let rows: Vec<&ScalingRow> = outcome
                .rows
                .iter()
                .filter(|r| r.strategy == strategy.to_string())
                .collect();
            if rows.is_empty() {
                continue;
            }
            series.push(super::plot::Series {
                label: strategy.to_string(),
                xs: rows.iter().map(|r| r.n as f64).collect(),
                ys: rows.iter().map(|r| r.m_mean).collect(),
                band: Some((
                    rows.iter().map(|r| (r.m_mean - r.m_std).max(1.0)).collect(),
                    rows.iter().map(|r| r.m_mean + r.m_std).collect(),
                )),
            });
        }
        super::plot::write_plot(
            &dir.join("plot_scaling.svg"),
            "minimum m for cond(A) <= tol",
            "n",
            "m",
            &series,
            false,
            true,
        )?;
    }
    Ok(())
}
