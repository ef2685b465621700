//! Command-line surface: `generate`, `run`, `eval`, and `gradcheck`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use crate::config::{RunConfig, StrategyPreset};
use crate::data::{generate_synthetic, load_dataset, save_dataset, SyntheticSpec};
use crate::diagnostics::{network_gradient_check, op_gradient_check};
use crate::engine::{run_stream, write_run_log};
use crate::error::Error;
use crate::metrics::{load_pairs, save_pairs, write_metrics_csv, MetricReport};
use crate::model::save_checkpoint;
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

const USAGE: &str = "\
usage: driftcast <command> [options]

commands:
  generate --out <dir> [--locations N] [--days D] [--interval-minutes M]
           [--drift-rate R] [--drift-heterogeneity B] [--noise-std S]
           [--graph-degree G] [--seed S]
      synthesize a drifting dataset directory

  run --config <file> [--strategy <preset>] [--out <dir>]
      warm up, then stream the online phase and write reports
      presets: dost frozen no-hibernate full er erh smur no-reset
               no-via shared-adapter

  eval --ledger <file>
      rescore a stored ledger file and print the summary

  gradcheck [--seed S]
      run the finite-difference suites and report the max relative error
";

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Numeric(_) | Error::Tape(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args(args: &[String]) -> i32 {
    let mut args = args.iter().map(String::as_str);
    let Some(command) = args.next() else {
        eprint!("{USAGE}");
        return EXIT_USAGE;
    };
    let rest: Vec<&str> = args.collect();
    let result = match command {
        "generate" => cmd_generate(&rest),
        "run" => cmd_run(&rest),
        "eval" => cmd_eval(&rest),
        "gradcheck" => cmd_gradcheck(&rest),
        "--help" | "-h" | "help" => {
            print!("{USAGE}");
            return EXIT_OK;
        }
        other => {
            eprintln!("unknown command '{other}'");
            eprint!("{USAGE}");
            return EXIT_USAGE;
        }
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("{msg}");
            eprint!("{USAGE}");
            EXIT_USAGE
        }
        Err(CliError::Run(err)) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

type CliResult = std::result::Result<i32, CliError>;

/// Split `--key value` pairs; rejects anything else.
fn parse_flags(args: &[&str]) -> std::result::Result<Vec<(String, String)>, CliError> {
    let mut flags = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(key) = arg.strip_prefix("--") else {
            return Err(CliError::Usage(format!("unexpected argument '{arg}'")));
        };
        let Some(value) = it.next() else {
            return Err(CliError::Usage(format!("flag --{key} needs a value")));
        };
        flags.push((key.to_string(), value.to_string()));
    }
    Ok(flags)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("bad value '{value}' for --{key}")))
}

fn cmd_generate(args: &[&str]) -> CliResult {
    let mut spec = SyntheticSpec::reference(0);
    let mut out: Option<PathBuf> = None;
    for (key, value) in parse_flags(args)? {
        match key.as_str() {
            "out" => out = Some(PathBuf::from(value)),
            "locations" => spec.n_locations = parse_num(&key, &value)?,
            "days" => spec.days = parse_num(&key, &value)?,
            "interval-minutes" => spec.interval_minutes = parse_num(&key, &value)?,
            "drift-rate" => spec.drift_rate = parse_num(&key, &value)?,
            "drift-heterogeneity" => spec.drift_heterogeneity = parse_num(&key, &value)?,
            "noise-std" => spec.noise_std = parse_num(&key, &value)?,
            "graph-degree" => spec.graph_degree = parse_num(&key, &value)?,
            "seed" => spec.seed = parse_num(&key, &value)?,
            other => return Err(CliError::Usage(format!("unknown flag --{other}"))),
        }
    }
    let out = out.ok_or_else(|| CliError::Usage("generate requires --out <dir>".into()))?;
    let dataset = generate_synthetic(&spec)?;
    save_dataset(&out, &dataset.frame, &dataset.adjacency)?;
    println!(
        "wrote {} steps x {} locations to {}",
        dataset.frame.n_steps(),
        dataset.frame.meta.n_locations,
        out.display()
    );
    Ok(EXIT_OK)
}

fn cmd_run(args: &[&str]) -> CliResult {
    let mut config_path: Option<PathBuf> = None;
    let mut preset: Option<StrategyPreset> = None;
    let mut out_override: Option<PathBuf> = None;
    for (key, value) in parse_flags(args)? {
        match key.as_str() {
            "config" => config_path = Some(PathBuf::from(value)),
            "strategy" => {
                preset =
                    Some(StrategyPreset::parse(&value).ok_or_else(|| {
                        CliError::Usage(format!("unknown strategy preset '{value}'"))
                    })?)
            }
            "out" => out_override = Some(PathBuf::from(value)),
            other => return Err(CliError::Usage(format!("unknown flag --{other}"))),
        }
    }
    let config_path =
        config_path.ok_or_else(|| CliError::Usage("run requires --config <file>".into()))?;
    let mut config = RunConfig::load(&config_path)?;
    if let Some(preset) = preset {
        preset.apply(&mut config);
        println!("strategy preset: {}", preset.name());
    }
    let dataset_dir = config
        .dataset_dir
        .clone()
        .ok_or_else(|| CliError::Run(Error::Config("config has no dataset_dir".into())))?;
    let (frame, adjacency) = load_dataset(&dataset_dir)?;
    let settings = config.run_settings(&frame.meta);
    let output = run_stream(&frame, &adjacency, &settings)?;

    println!(
        "warm-up: {} epochs, best epoch {} (validation mae {:.6})",
        output.warmup.epochs_run, output.warmup.best_epoch, output.warmup.best_val_mae
    );
    print!("{}", output.report.summary());

    let out_dir = out_override
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("driftcast-out"));
    std::fs::create_dir_all(&out_dir).map_err(Error::Io)?;
    write_metrics_csv(&output.pairs, &out_dir.join("metrics.csv"))?;
    write_run_log(&output.records, &out_dir.join("run_log.csv"))?;
    save_pairs(
        &output.pairs,
        output.report.unresolved,
        &out_dir.join("ledger.csv"),
    )?;
    save_checkpoint(&output.net, &out_dir.join("model.ckpt"))?;
    println!("reports written to {}", out_dir.display());
    Ok(EXIT_OK)
}

fn cmd_eval(args: &[&str]) -> CliResult {
    let mut ledger: Option<PathBuf> = None;
    for (key, value) in parse_flags(args)? {
        match key.as_str() {
            "ledger" => ledger = Some(PathBuf::from(value)),
            other => return Err(CliError::Usage(format!("unknown flag --{other}"))),
        }
    }
    let ledger = ledger.ok_or_else(|| CliError::Usage("eval requires --ledger <file>".into()))?;
    let (pairs, unresolved, horizon) = load_pairs(&ledger)?;
    let report = MetricReport::from_pairs(&pairs, horizon, unresolved);
    print!("{}", report.summary());
    Ok(EXIT_OK)
}

fn cmd_gradcheck(args: &[&str]) -> CliResult {
    let mut seed = 5u64;
    for (key, value) in parse_flags(args)? {
        match key.as_str() {
            "seed" => seed = parse_num(&key, &value)?,
            other => return Err(CliError::Usage(format!("unknown flag --{other}"))),
        }
    }
    let ops = op_gradient_check(seed)?;
    println!(
        "op suite:      max relative error {:.3e} over {} inputs ({} coordinates)",
        ops.max_relative_error, ops.parameters_checked, ops.coordinates_checked
    );
    let network = network_gradient_check(seed)?;
    println!(
        "network suite: max relative error {:.3e} over {} parameters ({} coordinates)",
        network.max_relative_error, network.parameters_checked, network.coordinates_checked
    );
    let worst = ops.max_relative_error.max(network.max_relative_error);
    if worst < 1e-4 {
        println!("gradcheck passed (threshold 1e-4)");
        Ok(EXIT_OK)
    } else {
        eprintln!("gradcheck FAILED: max relative error {worst:.3e} >= 1e-4");
        Ok(EXIT_NUMERIC)
    }
}
