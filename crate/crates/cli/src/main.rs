use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use or_cli::config::{load_config, seed_from_env};
use or_cli::output::write_bundle;
use or_cli::pipeline::{configured_stages, run_pipeline, Stage};
use or_cli::compare_runs;

/// Escape rates, pressure and the variational inequality for maps with holes.
#[derive(Parser)]
#[command(name = "or-verify", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Escape-rate estimate, route cross-checks and hole sweep.
    Escape(RunArgs),
    /// Ulam approximation of the transfer operator.
    Ulam(RunArgs),
    /// Young-tower eigenvalue, Gibbs measure, Gurevich and Abramov checks.
    Tower(RunArgs),
    /// Pressure of candidate measures against the escape rate.
    Pressure(RunArgs),
    /// Dynamical-ball masses and the triangle check.
    Balls(RunArgs),
    /// Lorentz-gas escape, stationarity and reversibility.
    Billiard(RunArgs),
    /// Every stage present in the config.
    Verify(RunArgs),
    /// Compare two or more result bundles.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// Overrides `workers`.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides `seed` and OR_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides any config key, e.g. `--set escape.n_max=80`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct CompareArgs {
    /// Result directories or summary files.
    paths: Vec<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn run(args: &RunArgs, stages: Option<Vec<Stage>>) -> anyhow::Result<u8> {
    let mut set = args.set.clone();
    if let Some(w) = args.workers {
        set.push(format!("workers={w}"));
    }
    let cfg = load_config(&args.config, &set)?;
    let seed = match args.seed {
        Some(s) => Some(s),
        None => seed_from_env()?,
    };
    let cfg = cfg.resolve(seed, None);
    cfg.validate()?;
    let stages = stages.unwrap_or_else(|| configured_stages(&cfg));
    let bundle = run_pipeline(&cfg, &stages);
    write_bundle(&bundle, &args.out_dir, cfg.outputs.csv).with_context(|| format!("writing {}", args.out_dir.display()))?;
    let s = &bundle.summary;
    for st in &s.stages {
        if let Some(m) = &st.message {
            eprintln!("{}: {:?}: {m}", st.stage.name(), st.status);
        }
    }
    let h = &s.headline;
    let show = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.6}"));
    println!(
        "{}: rho {} eigenvalue {} P_nu_hat {} verdict {:?}",
        s.name,
        show(h.rho),
        show(h.eigenvalue),
        show(h.p_nu_hat),
        s.verdict
    );
    Ok(s.exit_code() as u8)
}

fn compare(args: &CompareArgs) -> anyhow::Result<u8> {
    let c = compare_runs(&args.paths)?;
    let text = serde_json::to_string_pretty(&c)? + "\n";
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("compare.json"), &text)?;
        std::fs::write(dir.join("compare.csv"), c.write_csv()?)?;
    }
    print!("{text}");
    Ok(if c.rho_consistent == Some(false) { 2 } else { 0 })
}

fn main() -> ExitCode {
    // clap's own usage errors exit 2, which is reserved for violations
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Escape(a) => run(a, Some(vec![Stage::Escape])),
        Command::Ulam(a) => run(a, Some(vec![Stage::Ulam])),
        Command::Tower(a) => run(a, Some(vec![Stage::Tower])),
        Command::Pressure(a) => run(a, Some(vec![Stage::Pressure])),
        Command::Balls(a) => run(a, Some(vec![Stage::Balls])),
        Command::Billiard(a) => run(a, Some(vec![Stage::Billiard])),
        Command::Verify(a) => run(a, None),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
