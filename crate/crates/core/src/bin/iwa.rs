use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use iwa::harness::config::{parse_methods, parse_seeds};
use iwa::harness::pipeline::{emit_plots, Failure};
use iwa::harness::{
    rate_check, run_correlation, run_experiment, run_sensitivity, DatasetKind, ExperimentConfig,
};
use iwa::Error;

#[derive(Parser)]
#[command(
    name = "iwa",
    version,
    about = "Importance weighted aggregation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all methods and write results.csv, results.json and plots.
    Run(Flags),
    /// Append corrupted models and measure the change per method.
    Sensitivity(Flags),
    /// Correlation between aggregation weights and model performance.
    Correlate(Flags),
    /// Distance to the oracle weights as n = m grows.
    RateCheck(Flags),
}

#[derive(Args)]
struct Flags {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// sinc, moons or csv
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Number of models in the sequence.
    #[arg(long)]
    l: Option<usize>,
    /// analytic, learned or unit
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    beta_bound: Option<f64>,
    #[arg(long)]
    rcond: Option<f64>,
    /// `a..b` (exclusive) or a comma separated list.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma separated method names, or `all`.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Flags {
    fn config(&self) -> iwa::Result<ExperimentConfig> {
        let dataset: Option<DatasetKind> = self.dataset.as_deref().map(str::parse).transpose()?;
        let mut cfg = match (&self.config, dataset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(DatasetKind::Moons)) => ExperimentConfig::moons(),
            (None, _) => ExperimentConfig::sinc(),
        };
        if let Some(d) = dataset {
            cfg.dataset = d;
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if self.l.is_some() {
            cfg.l = self.l;
        }
        if let Some(b) = &self.beta {
            cfg.beta = b.parse()?;
        }
        if let Some(v) = self.beta_bound {
            cfg.beta_bound = v;
        }
        if let Some(v) = self.rcond {
            cfg.rcond = v;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_seeds(s)?;
        }
        if let Some(s) = &self.methods {
            cfg.methods = parse_methods(s)?;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn report_failures(failures: &[&Failure]) -> ExitCode {
    for f in failures {
        eprintln!(
            "seed {} {}: {}",
            f.seed,
            f.method.as_deref().unwrap_or("(all methods)"),
            f.message
        );
    }
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn execute(command: &Command) -> iwa::Result<ExitCode> {
    match command {
        Command::Run(flags) => {
            let cfg = flags.config()?;
            let table = run_experiment(&cfg)?;
            for a in table.aggregates.iter().filter(|a| a.statistic == "median") {
                match a.accuracy {
                    Some(acc) => println!(
                        "{:<12} median accuracy {acc:.4}  risk {:.5}",
                        a.method, a.risk
                    ),
                    None => println!(
                        "{:<12} median risk {:.5}  excess {:.5}",
                        a.method, a.risk, a.excess
                    ),
                }
            }
            println!("wrote {}", cfg.out.display());
            Ok(report_failures(&table.failures.iter().collect::<Vec<_>>()))
        }
        Command::Sensitivity(flags) => {
            let cfg = flags.config()?;
            let report = run_sensitivity(&cfg)?;
            emit_plots(&report.tables[0], &cfg.out.join("plots"))?;
            let last = report.counts.last().copied().unwrap_or(0);
            for d in &report.drops {
                println!("{:<12} median drop at +{last}: {:.4}", d.method, d.median);
            }
            println!(
                "gate: {}/{} first draws inaccurate, {} redraws, {} slots kept without passing",
                report.gate.first_draw_flagged,
                report.gate.slots,
                report.gate.redraws,
                report.gate.exhausted
            );
            Ok(report_failures(&report.failures().collect::<Vec<_>>()))
        }
        Command::Correlate(flags) => {
            let cfg = flags.config()?;
            let report = run_correlation(&cfg)?;
            for (m, q) in report.summary() {
                println!(
                    "{m:<12} median r {:.3}  [q25 {:.3}, q75 {:.3}]",
                    q[2], q[1], q[3]
                );
            }
            Ok(report_failures(&report.failures.iter().collect::<Vec<_>>()))
        }
        Command::RateCheck(flags) => {
            let cfg = flags.config()?;
            let report = rate_check(&cfg)?;
            for (s, m) in report.sizes.iter().zip(&report.medians) {
                println!("n = m = {s:<6} median ||c - c*|| {m:.5}");
            }
            println!(
                "log-log slope {:.3}, strictly decreasing: {}",
                report.slope, report.strictly_decreasing
            );
            Ok(report_failures(&report.failures.iter().collect::<Vec<_>>()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e @ (Error::Config { .. } | Error::MissingFile { .. })) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
