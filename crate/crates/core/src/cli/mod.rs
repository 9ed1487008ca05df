//! Command-line driver.
//!
//! Exit codes: 0 success, 1 failed self-check or I/O error, 2 invalid
//! configuration or domain error, 3 no closed-form reference, 4 solver
//! breakdown.

pub mod config;
pub mod converge;
pub mod selfcheck;
pub mod simulate;
pub mod svg;

use clap::{Args, Parser, Subcommand};
use config::{FileConfig, InitialKind, TestFunction};
use serde::Serialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::reference::{BesselBranch, DEFAULT_STEHFEST_TERMS};
use crate::specfun::{self, MLParams};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Domain(String),
    #[error("no closed-form reference: {0}")]
    NoClosedForm(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Domain(_) => 2,
            Self::NoClosedForm(_) => 3,
            Self::Solver(_) => 4,
            Self::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "abfrac",
    version,
    about = "Atangana-Baleanu fractional calculus toolkit and leaky aquifer solver"
)]
pub struct Cli {
    /// JSON config file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory for CSV, SVG and manifest files.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Also write SVG figures.
    #[arg(long, global = true)]
    pub plot: bool,
    /// Print machine-readable JSON to stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the Mittag-Leffler function E_{alpha,beta}(z).
    Ml(MlArgs),
    /// Convergence study of the AB trapezoid rule against closed forms.
    Converge(ConvergeArgs),
    /// Simulate radial flow in a leaky aquifer.
    Simulate(SimulateArgs),
    /// Run the built-in invariant suite.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Args)]
pub struct MlArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub beta: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub z: f64,
    #[arg(long, default_value_t = 1e-15)]
    pub tol: f64,
}

#[derive(Debug, Args, Default)]
pub struct ConvergeArgs {
    /// Integrand with a known AB integral.
    #[arg(long, value_enum)]
    pub function: Option<TestFunction>,
    /// Fractional order(s), comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub alpha: Vec<f64>,
    /// Final time T.
    #[arg(long, allow_hyphen_values = true)]
    pub horizon: Option<f64>,
    /// Step counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
}

#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    /// Fractional order(s), comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub alpha: Vec<f64>,
    /// Final time T.
    #[arg(long, allow_hyphen_values = true)]
    pub horizon: Option<f64>,
    /// Number of radial intervals M.
    #[arg(long)]
    pub m: Option<usize>,
    /// Number of time steps N.
    #[arg(long)]
    pub n: Option<usize>,
    /// Storage coefficient S.
    #[arg(long, allow_hyphen_values = true)]
    pub storage: Option<f64>,
    /// Hydraulic conductivity K.
    #[arg(long, allow_hyphen_values = true)]
    pub conductivity: Option<f64>,
    /// Aquifer thickness D.
    #[arg(long, allow_hyphen_values = true)]
    pub thickness: Option<f64>,
    /// Leakage parameter c.
    #[arg(long, allow_hyphen_values = true)]
    pub leakage: Option<f64>,
    /// Head at the well face.
    #[arg(long, allow_hyphen_values = true)]
    pub phi_c: Option<f64>,
    /// Head at r = 1.
    #[arg(long, allow_hyphen_values = true)]
    pub outer: Option<f64>,
    /// Initial profile kind (custom profiles need a config file).
    #[arg(long, value_enum)]
    pub initial: Option<InitialKind>,
    /// Value for `--initial constant`.
    #[arg(long, allow_hyphen_values = true, requires = "initial")]
    pub initial_value: Option<f64>,
    /// Time steps to export, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Vec<usize>,
    /// Treat the newest step explicitly in the memory sum.
    #[arg(long)]
    pub history_lag: bool,
}

#[derive(Debug, Args, Default)]
pub struct SelfcheckArgs {
    /// Stehfest terms for the inversion checks (even, 8..=18).
    #[arg(long)]
    pub stehfest_terms: Option<usize>,
    /// Bessel branch used in the classical-limit cross-check.
    #[arg(long)]
    pub branch: Option<BesselBranch>,
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

/// Files produced by a command, written only after everything succeeded.
struct Outputs {
    files: Vec<(String, String)>,
}

impl Outputs {
    fn write(
        self,
        dir: &Path,
        command: &str,
        config: &impl Serialize,
    ) -> Result<Vec<String>, CliError> {
        let mut names: Vec<String> = self.files.iter().map(|(n, _)| n.clone()).collect();
        names.push("run_manifest.json".into());
        let manifest = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "outputs": names,
        });
        let manifest = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        for (name, body) in self
            .files
            .iter()
            .chain([&("run_manifest.json".to_string(), manifest)])
        {
            let path = dir.join(name);
            std::fs::write(&path, body)
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(names)
    }
}

fn load_config(cli: &Cli) -> Result<FileConfig, CliError> {
    match &cli.config {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    }
}

fn cmd_ml(cli: &Cli, args: &MlArgs) -> Result<u8, CliError> {
    let p = MLParams::new(args.alpha, args.beta).map_err(|e| CliError::Domain(e.to_string()))?;
    let v = specfun::mittag_leffler(p, args.z, args.tol)
        .map_err(|e| CliError::Domain(e.to_string()))?;
    if cli.json {
        let out =
            serde_json::json!({"alpha": args.alpha, "beta": args.beta, "z": args.z, "value": v});
        println!("{out}");
    } else {
        println!("{}", fmt_float(v));
    }
    Ok(0)
}

fn cmd_converge(cli: &Cli, args: &ConvergeArgs) -> Result<u8, CliError> {
    let cfg = converge::ConvergeConfig::resolve(args, &load_config(cli)?)?;
    let alphas = cfg.alphas();
    let studies = alphas
        .iter()
        .map(|&a| {
            let alpha = crate::abquad::FracOrder::new(a).expect("validated order");
            converge::study(cfg.function, alpha, cfg.horizon, &cfg.n)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let single = studies.len() == 1;
    let mut files: Vec<(String, String)> = studies
        .iter()
        .map(|s| (converge::csv_name(s.alpha, single), converge::to_csv(s)))
        .collect();
    if cli.plot {
        files.push(("convergence.svg".into(), converge::plot(&studies)));
    }
    let printed: Vec<(String, String)> = files
        .iter()
        .filter(|(n, _)| n.ends_with(".csv"))
        .cloned()
        .collect();
    let names = Outputs { files }.write(&cli.out, "converge", &cfg)?;
    if cli.json {
        let out = serde_json::json!({"studies": studies, "outputs": names});
        println!(
            "{}",
            serde_json::to_string_pretty(&out).expect("report serializes")
        );
    } else {
        for (name, body) in printed {
            if !single {
                println!("# {name}");
            }
            print!("{body}");
        }
    }
    Ok(0)
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<u8, CliError> {
    let cfg = simulate::SimulateConfig::resolve(args, &load_config(cli)?)?;
    let runs = simulate::run(&cfg)?;
    let mut files = vec![(
        "head_profiles.csv".to_string(),
        simulate::profiles_csv(&cfg, &runs),
    )];
    if cli.plot {
        files.extend(simulate::figures(&cfg, &runs));
    }
    let names = Outputs { files }.write(&cli.out, "simulate", &cfg)?;
    let summary: Vec<_> = runs
        .iter()
        .map(|r| serde_json::json!({"alpha": r.alpha, "max_abs_head": r.field.max_abs()}))
        .collect();
    if cli.json {
        let out = serde_json::json!({"runs": summary, "outputs": names});
        println!(
            "{}",
            serde_json::to_string_pretty(&out).expect("summary serializes")
        );
    } else {
        for r in &runs {
            println!(
                "alpha = {}: {} steps on {} nodes, max |phi| = {}",
                r.alpha,
                cfg.steps,
                cfg.m,
                fmt_float(r.field.max_abs())
            );
        }
        println!("wrote {} to {}", names.join(", "), cli.out.display());
    }
    Ok(0)
}

fn cmd_selfcheck(cli: &Cli, args: &SelfcheckArgs) -> Result<u8, CliError> {
    let file = load_config(cli)?;
    let terms = args
        .stehfest_terms
        .or(file.stehfest_terms)
        .unwrap_or(DEFAULT_STEHFEST_TERMS);
    config::ensure(
        terms.is_multiple_of(2) && (8..=18).contains(&terms),
        "stehfest_terms",
        format!("must be even and within 8..=18, got {terms}"),
    )?;
    let branch = match (args.branch, &file.bessel_branch) {
        (Some(b), _) => b,
        (None, Some(s)) => s
            .parse()
            .map_err(|e| CliError::Config(format!("field `bessel_branch`: {e}")))?,
        (None, None) => BesselBranch::K0,
    };
    let report = selfcheck::run(&selfcheck::SelfcheckOptions {
        stehfest_terms: terms,
        branch,
        ..Default::default()
    });
    if cli.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        );
    } else {
        print!("{}", report.table());
    }
    Ok(report.exit_code())
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Ml(a) => cmd_ml(cli, a),
        Command::Converge(a) => cmd_converge(cli, a),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Selfcheck(a) => cmd_selfcheck(cli, a),
    }
}
