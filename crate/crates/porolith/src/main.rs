use std::path::{Path, PathBuf};
use std::process::ExitCode;

use porolith::config::{parse_config, Scenario};
use porolith::coupling::run_simulation;
use porolith::output::fmt_float;
use porolith::scenario::{sweep_eta, verify_scenario, write_sweep_csv};

const USAGE: &str = "\
porolith - two-grid staggered Biot solver

USAGE:
    porolith run <config>
    porolith verify <scenario>          scenarios: single_cell, uniaxial, eta_sweep
    porolith sweep-eta <config> [--from F] [--to T] [--points N]

The output directory from the config can be overridden with the
POROLITH_OUTPUT_DIR environment variable.
";

fn resolve_out_dir(from_config: &Path) -> PathBuf {
    match std::env::var_os("POROLITH_OUTPUT_DIR") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => from_config.to_path_buf(),
    }
}

fn cmd_run(config_path: &str) -> ExitCode {
    let cfg = match parse_config(Path::new(config_path)) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let out_dir = resolve_out_dir(&cfg.output_dir);
    match run_simulation(&cfg, &out_dir) {
        Ok(summary) => {
            println!("run complete: {} steps in {}", summary.steps_completed, out_dir.display());
            println!("  gamma                = {}", fmt_float(summary.gamma));
            println!("  worst norm ratio     = {}", fmt_float(summary.worst_ratio));
            println!("  coupling iterations  = {}", summary.total_iterations);
            println!("  worst mass imbalance = {}", fmt_float(summary.worst_mass_residual));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("partial artifacts (if any) are in {}", out_dir.display());
            ExitCode::FAILURE
        }
    }
}

fn cmd_verify(name: &str) -> ExitCode {
    let Some(scenario) = Scenario::parse(name) else {
        eprintln!("error: unknown scenario `{name}`");
        eprintln!("{USAGE}");
        return ExitCode::from(2);
    };
    match verify_scenario(scenario) {
        Ok(report) => {
            let mut ok = true;
            for check in &report.checks {
                let status = if check.ok { "PASS" } else { "FAIL" };
                println!("{status}  {} ({})", check.label, check.detail);
                ok &= check.ok;
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_sweep(config_path: &str, rest: &[String]) -> ExitCode {
    let mut from = 1.0f64;
    let mut to = 2.0f64;
    let mut points = 5usize;
    let mut it = rest.iter();
    while let Some(flag) = it.next() {
        let value = it.next();
        let parsed = match (flag.as_str(), value) {
            ("--from", Some(v)) => v.parse::<f64>().map(|x| from = x).is_ok(),
            ("--to", Some(v)) => v.parse::<f64>().map(|x| to = x).is_ok(),
            ("--points", Some(v)) => v.parse::<usize>().map(|x| points = x).is_ok(),
            _ => false,
        };
        if !parsed {
            eprintln!("error: bad sweep argument `{flag}`");
            eprintln!("{USAGE}");
            return ExitCode::from(2);
        }
    }
    let cfg = match parse_config(Path::new(config_path)) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let out_dir = resolve_out_dir(&cfg.output_dir);
    match sweep_eta(&cfg, from, to, points) {
        Ok(sweep) => {
            if let Err(e) = std::fs::create_dir_all(&out_dir) {
                eprintln!("error: cannot create {}: {e}", out_dir.display());
                return ExitCode::FAILURE;
            }
            let csv = out_dir.join("sweep_eta.csv");
            if let Err(e) = write_sweep_csv(&csv, &sweep) {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
            println!("factor  gamma  total_iterations  worst_ratio");
            for p in &sweep {
                println!(
                    "{}  {}  {}  {}",
                    fmt_float(p.factor),
                    fmt_float(p.gamma),
                    p.total_iterations,
                    fmt_float(p.worst_ratio)
                );
            }
            println!("written {}", csv.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.split_first() {
        Some((cmd, rest)) => match (cmd.as_str(), rest) {
            ("run", [config]) => cmd_run(config),
            ("verify", [name]) => cmd_verify(name),
            ("sweep-eta", [config, opts @ ..]) => cmd_sweep(config, opts),
            _ => {
                eprintln!("{USAGE}");
                ExitCode::from(2)
            }
        },
        None => {
            eprintln!("{USAGE}");
            ExitCode::from(2)
        }
    }
}
