//! `arraymem` command-line front end.
//!
//! Exit status: 0 on success, 1 on numerical failure (or a failed `validate`
//! check), 2 on configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use arraymem::config::{parse_value, RunConfig};
use arraymem::run::run;
use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "arraymem", version, about = "Photon storage and retrieval efficiency of atomic arrays")]
struct Cli {
    /// efficiency | scan-waist | optimal-waist | holes | disorder | finite-time | isotropic | validate
    command: String,

    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Atoms per side of the square array.
    #[arg(long = "N", value_name = "N")]
    n: Option<usize>,

    /// Lattice constant in wavelengths.
    #[arg(long)]
    d: Option<f64>,

    /// Beam waist in wavelengths.
    #[arg(long)]
    w0: Option<f64>,

    /// Use the waist that minimizes the error of the perfect array.
    #[arg(long)]
    optimize_waist: bool,

    /// Atom model: two-level or isotropic.
    #[arg(long)]
    model: Option<String>,

    /// Detection window in units of the single-atom lifetime.
    #[arg(long = "Td", value_name = "TD")]
    t_d: Option<f64>,

    /// Monte Carlo samples per point.
    #[arg(long)]
    samples: Option<usize>,

    /// Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads (0 = available parallelism).
    #[arg(long)]
    workers: Option<usize>,

    /// Override any config path, e.g. `--set study.N_list=[6,10]`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
}

fn overrides(cli: &Cli) -> Result<Vec<(String, toml::Value)>, String> {
    let mut out = vec![("command".to_string(), toml::Value::String(cli.command.clone()))];
    let mut push = |path: &str, value: toml::Value| out.push((path.to_string(), value));
    if let Some(n) = cli.n {
        push("geometry.N", toml::Value::Integer(n as i64));
    }
    if let Some(d) = cli.d {
        push("geometry.d", toml::Value::Float(d));
    }
    if let Some(m) = &cli.model {
        push("geometry.model", toml::Value::String(m.clone()));
    }
    if let Some(w0) = cli.w0 {
        push("mode.w0", toml::Value::Float(w0));
    }
    if cli.optimize_waist {
        push("mode.optimize_waist", toml::Value::Boolean(true));
    }
    if let Some(t) = cli.t_d {
        push("study.Td", toml::Value::Float(t));
    }
    if let Some(s) = cli.samples {
        push("study.samples", toml::Value::Integer(s as i64));
    }
    if let Some(s) = cli.seed {
        let v = i64::try_from(s).map_err(|_| format!("seed {s} exceeds the config integer range"))?;
        push("study.seed", toml::Value::Integer(v));
    }
    if let Some(o) = &cli.out {
        push("output", toml::Value::String(o.display().to_string()));
    }
    if let Some(w) = cli.workers {
        push("workers", toml::Value::Integer(w as i64));
    }
    for item in &cli.set {
        let (path, value) = item.split_once('=').ok_or_else(|| format!("--set expects PATH=VALUE, got `{item}`"))?;
        push(path.trim(), parse_value(value.trim()));
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = match overrides(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let config = match RunConfig::load(cli.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&config) {
        Ok(report) => {
            println!("{}", report.summary);
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
