//! Adaptive collocation experiment on the Poisson fixture: repeated
//! seeded runs of the adaptive loop, per-iteration error statistics and
//! sample point clouds.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::stats::{geometric_mean_std, median};
use super::HarnessError;
use crate::cas::{
    cas_run, TrainableModel, AdaptConfig, CasSchedule, CasTrace, ChannelSchedule, PoissonCollocationModel,
    TanhFeatures, TestSpec,
};
use crate::measure::{monte_carlo_grid, GridDist, RngSpec};

#[derive(Debug, Clone, Serialize)]
pub struct CasRow {
    pub iteration: usize,
    pub m_interior: usize,
    pub err_median: f64,
    pub err_gmean: f64,
    pub err_gstd: f64,
    /// Median total-variation distance of the interior measure to the
    /// first iteration's measure.
    pub tv_to_first_median: f64,
    pub trials: usize,
}

pub struct CasOutcome {
    pub rows: Vec<CasRow>,
    pub traces: Vec<CasTrace>,
}

pub fn build_model(cfg: &ExperimentConfig, trial: u64) -> Result<PoissonCollocationModel, HarnessError> {
    let c = &cfg.cas;
    let root = RngSpec::new(cfg.seed);
    let interior = Arc::new(monte_carlo_grid(
        GridDist::UniformInterval,
        c.interior_grid,
        root.substream(&[20, trial]),
    )?);
    let features = TanhFeatures::random(c.n_features, c.feature_scale, root.substream(&[21, trial]));
    Ok(PoissonCollocationModel::new(
        features,
        interior,
        c.target,
        c.boundary_lambda,
        AdaptConfig {
            steps: c.adapt_steps,
            step_size: c.adapt_step_size,
        },
    )?)
}

pub fn test_spec(cfg: &ExperimentConfig) -> TestSpec {
    let c = &cfg.cas;
    let n = c.test_points;
    let points: Vec<f64> = (0..n)
        .map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64)
        .collect();
    let truth = points.iter().map(|&x| c.target.solution(x)).collect();
    TestSpec { points, truth }
}

pub fn schedule(cfg: &ExperimentConfig) -> CasSchedule {
    let c = &cfg.cas;
    CasSchedule {
        per_channel: vec![
            ChannelSchedule::Growing(c.interior_schedule.clone()),
            ChannelSchedule::Full,
        ],
        iterations: c.iterations,
    }
}

pub fn run_cas_experiment(cfg: &ExperimentConfig) -> Result<CasOutcome, HarnessError> {
    let c = &cfg.cas;
    let root = RngSpec::new(cfg.seed);
    let test = test_spec(cfg);
    let sched = schedule(cfg);
    let mut traces = Vec::with_capacity(c.trials);
    for trial in 0..c.trials {
        let mut model = build_model(cfg, trial as u64)?;
        let trace = cas_run(
            &mut model,
            &sched,
            crate::christoffel::DEFAULT_DELTA_TOL,
            root.substream(&[22, trial as u64]),
            &test,
        )?;
        traces.push(trace);
    }
    let mut rows = Vec::new();
    for l in 0..c.iterations {
        let errs: Vec<f64> = traces.iter().map(|t| t.iterations[l].test_error).collect();
        let tvs: Vec<f64> = traces
            .iter()
            .map(|t| {
                t.iterations[0].measures[0].total_variation(&t.iterations[l].measures[0])
            })
            .collect();
        let (gmean, gstd) = geometric_mean_std(&errs);
        rows.push(CasRow {
            iteration: l + 1,
            m_interior: c.interior_schedule[l],
            err_median: median(&errs),
            err_gmean: gmean,
            err_gstd: gstd,
            tv_to_first_median: median(&tvs),
            trials: c.trials,
        });
    }
    Ok(CasOutcome { rows, traces })
}

pub fn write_outputs(
    cfg: &ExperimentConfig,
    outcome: &CasOutcome,
    dir: &Path,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join("cas.csv"))?);
    writeln!(
        out,
        "iteration,m_interior,err_median,err_gmean,err_gstd,tv_to_first_median,trials"
    )?;
    for r in &outcome.rows {
        writeln!(
            out,
            "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{}",
            r.iteration, r.m_interior, r.err_median, r.err_gmean, r.err_gstd,
            r.tv_to_first_median, r.trials
        )?;
    }
    drop(out);
    // Point cloud of the first trial's interior samples per iteration,
    // for density plots.
    if let Some(trace) = outcome.traces.first() {
        let model = build_model(cfg, 0)?;
        let grid = model.channel_grid(0).clone();
        let mut out =
            std::io::BufWriter::new(std::fs::File::create(dir.join("cas_points.csv"))?);
        writeln!(out, "iteration,x")?;
        for (l, it) in trace.iterations.iter().enumerate() {
            for &atom in &it.sample_atoms[0] {
                writeln!(out, "{},{:.17e}", l + 1, grid.point(atom)[0])?;
            }
        }
    }
    let trace_json: Vec<serde_json::Value> = outcome
        .traces
        .iter()
        .map(|t| {
            let iterations: Vec<serde_json::Value> = t
                .iterations
                .iter()
                .map(|it| {
                    serde_json::json!({
                        "test_error": it.test_error,
                        "ranks": it.ranks,
                        "fit_residual": it.fit_residual,
                        "fit_cond": it.fit_cond,
                        "m_per_channel": it.sample_atoms.iter().map(Vec::len).collect::<Vec<_>>(),
                    })
                })
                .collect();
            serde_json::json!({ "iterations": iterations })
        })
        .collect();
    let trace = serde_json::json!({
        "experiment": "cas",
        "config": cfg,
        "rows": outcome.rows,
        "runs": trace_json,
    });
    std::fs::write(dir.join("trace.json"), serde_json::to_string_pretty(&trace)?)?;
    if cfg.plot {
        let series = vec![super::plot::Series {
            label: "cas".into(),
            xs: outcome.rows.iter().map(|r| r.m_interior as f64).collect(),
            ys: outcome.rows.iter().map(|r| r.err_gmean).collect(),
            band: Some((
                outcome.rows.iter().map(|r| r.err_gmean / r.err_gstd).collect(),
                outcome.rows.iter().map(|r| r.err_gmean * r.err_gstd).collect(),
            )),
        }];
        super::plot::write_plot(
            &dir.join("plot_cas.svg"),
            "relative test error vs interior samples",
            "m",
            "error",
            &series,
            false,
            true,
        )?;
    }
    Ok(())
}
