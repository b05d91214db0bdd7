use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cs4ml::harness::{
    config::{ExperimentConfig, ExperimentKind, Preset},
    polyreg, props, run_cas, run_fourier, scaling, HarnessError,
};

#[derive(Parser)]
#[command(name = "cs4ml", version, about = "Christoffel-sampling experiment driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gradient-augmented polynomial regression error/conditioning sweep.
    Polyreg(RunArgs),
    /// Minimum-sample scaling search for a conditioning threshold.
    Scaling(RunArgs),
    /// Subsampled-Fourier recovery with a synthetic generative model.
    Fourier(RunArgs),
    /// Adaptive collocation on the Poisson fixture.
    Cas(RunArgs),
    /// Randomised property suite for the Christoffel machinery.
    Props(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scale preset.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn load_config(args: &RunArgs, kind: ExperimentKind) -> Result<ExperimentConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .map_err(|e| format!("invalid config {}: {e}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(preset) = args.preset {
        cfg.preset = preset;
    }
    if args.plot {
        cfg.plot = true;
    }
    cfg.validate(kind)?;
    Ok(cfg)
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<ExitCode, HarnessError> {
    let cfg = match load_config(args, kind) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return Ok(ExitCode::from(EXIT_CONFIG));
        }
    };
    let dir = cfg.out_dir(kind);
    match kind {
        ExperimentKind::Polyreg => {
            let out = polyreg::run_polyreg(&cfg)?;
            polyreg::write_outputs(&cfg, &out, &dir)?;
            for row in &out.stats {
                println!(
                    "n={:<4} m={:<5} {:<16} err_gmean={:.3e} cond_mean={:.3e}",
                    row.n, row.m, row.strategy.to_string(), row.err_gmean, row.cond_mean
                );
            }
        }
        ExperimentKind::Scaling => {
            let out = scaling::run_scaling(&cfg)?;
            scaling::write_outputs(&cfg, &out, &dir)?;
            for row in &out.rows {
                println!(
                    "n={:<4} {:<16} min_m mean={:.1} median={:.1} censored={}/{}",
                    row.n, row.strategy, row.m_mean, row.m_median, row.censored, row.trials
                );
            }
        }
        ExperimentKind::Fourier => {
            let out = run_fourier::run_fourier(&cfg)?;
            run_fourier::write_outputs(&cfg, &out, &dir)?;
            println!(
                "surrogate constants: C_MCS={:.4e} C_CS={:.4e}",
                out.constants.0, out.constants.1
            );
            for row in &out.rows {
                println!(
                    "m={:<5} {:<16} psnr median={:.2} mean={:.2} std={:.2}",
                    row.m, row.strategy, row.psnr_median, row.psnr_mean, row.psnr_std
                );
            }
        }
        ExperimentKind::Cas => {
            let out = run_cas::run_cas_experiment(&cfg)?;
            run_cas::write_outputs(&cfg, &out, &dir)?;
            for row in &out.rows {
                println!(
                    "iter={:<2} m={:<5} err median={:.3e} gmean={:.3e} tv_to_first={:.3e}",
                    row.iteration, row.m_interior, row.err_median, row.err_gmean,
                    row.tv_to_first_median
                );
            }
        }
        ExperimentKind::Props => {
            let out = props::run_props(&cfg)?;
            props::write_outputs(&cfg, &out, &dir)?;
            let mut all_ok = true;
            for r in &out {
                println!(
                    "{:<28} instances={:<5} violations={:<3} worst={:.3e} [{}]",
                    r.property,
                    r.instances,
                    r.violations,
                    r.worst_discrepancy,
                    if r.passed() { "pass" } else { "FAIL" }
                );
                all_ok &= r.passed();
            }
            if !all_ok {
                return Ok(ExitCode::from(EXIT_NUMERICAL));
            }
        }
    }
    println!("wrote outputs to {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Polyreg(a) => (ExperimentKind::Polyreg, a),
        Command::Scaling(a) => (ExperimentKind::Scaling, a),
        Command::Fourier(a) => (ExperimentKind::Fourier, a),
        Command::Cas(a) => (ExperimentKind::Cas, a),
        Command::Props(a) => (ExperimentKind::Props, a),
    };
    match run(kind, args) {
        Ok(code) => code,
        Err(HarnessError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("numerical failure: {e}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
