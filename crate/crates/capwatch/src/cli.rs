//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid config or failed check, 2 I/O or usage
//! error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::ConfigFile;
use crate::report::{format_sig, metrics_json, series_csv, series_svg};
use crate::scenarios::{self, builtin, builtin_manifest, effective_seed, ConfigViolation, Overrides};
use crate::verify::{render_table, verify_scenario, VerifyOptions};
use crate::Scenario;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_IO: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "capwatch",
    version,
    about = "Simulate how well a test suite tracks dangerous capabilities"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Emit {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a config file; violations go to stderr as JSON.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every scenario in a config and write result files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "capwatch-out")]
        out: PathBuf,
        #[arg(long, env = "CAPWATCH_SEED")]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',', default_value = "csv,json")]
        emit: Vec<Emit>,
        /// Ensemble path count (adds an ensemble where none is configured).
        #[arg(long)]
        paths: Option<usize>,
        /// Spacing of the y_t grid.
        #[arg(long)]
        grid: Option<f64>,
    },
    /// Compare closed forms with the Bernoulli-grid oracle.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        /// Oracle grid step.
        #[arg(long, default_value_t = 1e-3)]
        grid: f64,
        #[arg(long, env = "CAPWATCH_SEED")]
        seed: Option<u64>,
        #[arg(long, hide = true, default_value_t = 0.0, allow_negative_numbers = true)]
        perturb_analytic: f64,
    },
    /// Print built-in scenarios as a config file.
    DumpBuiltin {
        /// Names to include; all when omitted.
        names: Vec<String>,
    },
}

enum LoadError {
    Io(String),
    Invalid(Vec<ConfigViolation>),
}

fn load(path: &Path) -> Result<Vec<Scenario>, LoadError> {
    let text = fs::read_to_string(path).map_err(|e| LoadError::Io(format!("cannot read {}: {e}", path.display())))?;
    let config: ConfigFile = serde_json::from_str(&text).map_err(|e| {
        LoadError::Invalid(vec![ConfigViolation {
            scenario: None,
            field: "$".into(),
            message: e.to_string(),
        }])
    })?;
    scenarios::resolve(&config).map_err(LoadError::Invalid)
}

fn report_load_error(e: LoadError) -> u8 {
    match e {
        LoadError::Io(msg) => {
            eprintln!("error: {msg}");
            EXIT_IO
        }
        LoadError::Invalid(violations) => {
            let doc = json!({ "valid": false, "violations": violations });
            eprintln!("{}", serde_json::to_string_pretty(&doc).expect("serialisable"));
            EXIT_FAILURE
        }
    }
}

pub fn execute(cli: Cli) -> u8 {
    match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(s) => {
                println!("valid: {} scenario(s)", s.len());
                EXIT_OK
            }
            Err(e) => report_load_error(e),
        },
        Command::Run {
            config,
            out,
            seed,
            emit,
            paths,
            grid,
        } => {
            let scenarios = match load(&config) {
                Ok(s) => s,
                Err(e) => return report_load_error(e),
            };
            let overrides = Overrides { paths, grid };
            let scenarios: Vec<Scenario> = scenarios.iter().map(|s| overrides.apply(s)).collect();
            let bad: Vec<ConfigViolation> = scenarios.iter().flat_map(scenarios::validate_scenario).collect();
            if !bad.is_empty() {
                return report_load_error(LoadError::Invalid(bad));
            }
            run_command(&scenarios, &out, seed, &emit)
        }
        Command::Verify {
            config,
            draws,
            grid,
            seed,
            perturb_analytic,
        } => {
            let scenarios = match load(&config) {
                Ok(s) => s,
                Err(e) => return report_load_error(e),
            };
            if draws == 0 || !(grid > 0.0) {
                eprintln!("error: --draws must be positive and --grid must be > 0");
                return EXIT_IO;
            }
            verify_command(&scenarios, draws, grid, seed, perturb_analytic)
        }
        Command::DumpBuiltin { names } => {
            let manifest = if names.is_empty() {
                builtin_manifest()
            } else {
                let mut scenarios = Vec::new();
                for n in &names {
                    match builtin(n) {
                        Ok(s) => scenarios.push(s),
                        Err(e) => {
                            eprintln!("error: {e}");
                            return EXIT_FAILURE;
                        }
                    }
                }
                ConfigFile {
                    schema_version: crate::config::SCHEMA_VERSION,
                    builtins: Vec::new(),
                    scenarios,
                }
            };
            println!("{}", serde_json::to_string_pretty(&manifest).expect("serialisable"));
            EXIT_OK
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "never".into(), format_sig)
}

fn run_command(scenarios: &[Scenario], out: &Path, seed: Option<u64>, emit: &[Emit]) -> u8 {
    if let Err(e) = fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_IO;
    }
    let results = scenarios::run_all(scenarios, |s| effective_seed(s, seed));
    let mut status = EXIT_OK;
    for result in results {
        let r = match result {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {e}");
                status = status.max(EXIT_FAILURE);
                continue;
            }
        };
        let mut files: Vec<(String, String)> = Vec::new();
        if emit.contains(&Emit::Csv) {
            files.push((format!("{}.series.csv", r.name), series_csv(&r)));
        }
        if emit.contains(&Emit::Json) {
            files.push((format!("{}.metrics.json", r.name), metrics_json(&r)));
        }
        if emit.contains(&Emit::Svg) {
            files.push((format!("{}.svg", r.name), series_svg(&r)));
        }
        for (file, body) in files {
            let path = out.join(file);
            if let Err(e) = fs::write(&path, body) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return EXIT_IO;
            }
        }
        println!(
            "{}: C={} conditional_lag={} final_bias_magnitude={}",
            r.name,
            format_sig(r.metrics.miss_probability),
            opt(r.metrics.conditional_lag),
            format_sig(r.metrics.final_bias_magnitude)
        );
    }
    status
}

fn verify_command(scenarios: &[Scenario], draws: usize, grid: f64, seed: Option<u64>, perturb: f64) -> u8 {
    let mut rows = Vec::new();
    let mut status = EXIT_OK;
    for s in scenarios {
        let opts = VerifyOptions {
            draws,
            grid_step: grid,
            seed: effective_seed(s, seed),
            perturb_analytic: perturb,
        };
        match verify_scenario(s, &opts) {
            Ok(Some(r)) => rows.extend(r),
            Ok(None) => eprintln!("{}: skipped (rates are built during the run)", s.name),
            Err(e) => {
                eprintln!("error: {e}");
                status = EXIT_FAILURE;
            }
        }
    }
    print!("{}", render_table(&rows));
    if rows.is_empty() {
        eprintln!("error: nothing to verify");
        return EXIT_FAILURE;
    }
    if rows.iter().any(|r| !r.pass) {
        status = EXIT_FAILURE;
    }
    status
}
