mod args;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Short machine-readable class of a failure.
fn error_kind(e: &anyhow::Error) -> &'static str {
    use divrank::Error as E;
    match e.downcast_ref::<E>() {
        Some(E::InvalidRanking(_)) => "invalid-ranking",
        Some(E::DegenerateQuery { .. }) => "degenerate-query",
        Some(E::DimensionMismatch { .. }) => "dimension-mismatch",
        Some(E::SizeGuard { .. }) => "size-guard",
        Some(E::InvalidParameter(_)) | Some(E::EmptyGrid) => "invalid-parameter",
        Some(E::QpNonConvergence { .. }) => "qp-nonconvergence",
        Some(E::Schema { .. }) => "schema",
        Some(E::Parse { .. }) => "parse",
        Some(E::Compatibility(_)) => "compatibility",
        Some(E::Io(_)) => "io",
        Some(E::Json(_)) => "json",
        None if e.downcast_ref::<std::io::Error>().is_some() => "io",
        None => "error",
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = config::load(cli.config.as_deref())?;
    if let Some(n) = cli.threads.or(cfg.threads) {
        if n == 0 {
            anyhow::bail!(divrank::Error::InvalidParameter("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Synth(a) => commands::synth(a, &cfg),
        Command::FeatureExtract(a) => commands::feature_extract(a, &cfg),
        Command::BuildTargets(a) => commands::build_targets(a, &cfg),
        Command::Train(a) => commands::train(a, &cfg),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a, &cfg),
        Command::Baseline(a) => commands::baseline(a, &cfg),
        Command::SweepC(a) => commands::sweep_c(a, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("divrank: error[usage]: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("divrank: error[{}]: {}", error_kind(&e), one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
