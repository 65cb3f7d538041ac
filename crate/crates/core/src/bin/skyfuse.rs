use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use skyfuse::comms::PolicyKind;
use skyfuse::head::HeadParams;
use skyfuse::scenario::parse_policy_kind;
use skyfuse::sim::{self, SweepAxis};
use skyfuse::{Error, Result, SimConfig, Strategy, StrategyKind};

#[derive(Parser)]
#[command(name = "skyfuse", version, about = "Multi-UAV collaborative perception simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a detection head and write its parameter file.
    Train(Common),
    /// Evaluate one strategy over the scenario's frames.
    Run(Common),
    /// Evaluate one strategy along a demand-threshold or budget sweep.
    Sweep(Common),
    /// Evaluate every strategy and write a comparison report.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file; defaults apply when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// no-fusion, late-fusion, lif-base or lif-full.
    #[arg(long, default_value = "lif-full")]
    strategy: String,
    /// Demand threshold; a comma-separated list for `sweep`.
    #[arg(long)]
    phi_dem: Option<String>,
    /// Per-message byte budget; a comma-separated list for `sweep`.
    #[arg(long)]
    budget_bytes: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// uncertainty or objectness.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    background_priority: bool,
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad {what} value {t:?}")))
        })
        .collect()
}

fn single(s: &Option<String>, what: &str) -> Result<Option<f64>> {
    match s {
        None => Ok(None),
        Some(s) => {
            let v = parse_list(s, what)?;
            if v.len() != 1 {
                return Err(Error::InvalidConfig(format!("{what} takes one value here")));
            }
            Ok(Some(v[0]))
        }
    }
}

impl Common {
    fn threads(&self) -> usize {
        self.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    fn config(&self) -> Result<SimConfig> {
        let mut cfg = match &self.scenario {
            Some(p) => SimConfig::load(p)?,
            None => SimConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(p) = &self.policy {
            cfg.policy.kind = parse_policy_kind(p)?;
        }
        if self.background_priority {
            cfg.policy.background_priority = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_single_overrides(&self, cfg: &mut SimConfig) -> Result<()> {
        if let Some(v) = single(&self.phi_dem, "--phi-dem")? {
            cfg.policy.demand_threshold = v;
        }
        if let Some(v) = single(&self.budget_bytes, "--budget-bytes")? {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig("--budget-bytes must be >= 0".into()));
            }
            cfg.policy.budget_bytes = Some(v as usize);
        }
        cfg.validate()
    }

    fn kind(&self) -> Result<StrategyKind> {
        self.strategy.parse()
    }
}

fn params_path(out: &Path, kind: StrategyKind) -> PathBuf {
    out.join(format!("head-{}.bin", kind.as_str()))
}

fn train_and_save(cfg: &SimConfig, kind: StrategyKind, out: &Path, threads: usize) -> Result<HeadParams> {
    let outcome = sim::train_pipeline(cfg, kind, threads)?;
    fs::create_dir_all(out)?;
    outcome.params.save(&params_path(out, kind))?;
    let mut log = String::from("epoch,loss\n");
    for (i, l) in outcome.loss_trace.iter().enumerate() {
        log.push_str(&format!("{i},{l:.9}\n"));
    }
    fs::write(out.join(format!("train-{}.csv", kind.as_str())), log)?;
    eprintln!(
        "trained {}: loss {:.6} -> {:.6}",
        kind.as_str(),
        outcome.loss_trace.first().copied().unwrap_or(f64::NAN),
        outcome.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(outcome.params)
}

/// Loads the head for `kind` from `out`, training it first when missing.
fn head_for(cfg: &SimConfig, kind: StrategyKind, out: &Path, threads: usize) -> Result<Option<Arc<HeadParams>>> {
    if !kind.needs_head() {
        return Ok(None);
    }
    let path = params_path(out, kind);
    let params = if path.exists() {
        HeadParams::load(&path)?
    } else {
        eprintln!("no parameters at {}, training", path.display());
        train_and_save(cfg, kind, out, threads)?
    };
    if params.feature_channels() != cfg.encoder.channels {
        return Err(Error::ParamFile(format!(
            "{} holds a head for {} channels, scenario uses {}",
            path.display(),
            params.feature_channels(),
            cfg.encoder.channels
        )));
    }
    Ok(Some(Arc::new(params)))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let mut cfg = c.config()?;
            c.apply_single_overrides(&mut cfg)?;
            let kind = c.kind()?;
            if !kind.needs_head() {
                return Err(Error::InvalidConfig(format!("{} has no trainable head", kind.as_str())));
            }
            train_and_save(&cfg, kind, &c.out, c.threads())?;
            println!("{}", params_path(&c.out, kind).display());
        }
        Command::Run(c) => {
            let mut cfg = c.config()?;
            c.apply_single_overrides(&mut cfg)?;
            let kind = c.kind()?;
            let threads = c.threads();
            let strategy = Strategy::new(kind, cfg.policy.clone(), head_for(&cfg, kind, &c.out, threads)?)?;
            let summary = sim::run_suite(&cfg, &[(kind.as_str().to_string(), strategy)], threads)?.remove(0);
            fs::create_dir_all(&c.out)?;
            let text = summary.to_key_values();
            fs::write(c.out.join("report.txt"), &text)?;
            fs::write(c.out.join("report.csv"), sim::report_csv(std::slice::from_ref(&summary)))?;
            print!("{text}");
        }
        Command::Sweep(c) => {
            let cfg = c.config()?;
            let kind = c.kind()?;
            let threads = c.threads();
            let (axis, values) = match (&c.phi_dem, &c.budget_bytes) {
                (Some(_), Some(_)) => {
                    return Err(Error::InvalidConfig("sweep either --phi-dem or --budget-bytes, not both".into()))
                }
                (Some(p), None) => (SweepAxis::DemandThreshold, parse_list(p, "--phi-dem")?),
                (None, Some(b)) => (SweepAxis::BudgetBytes, parse_list(b, "--budget-bytes")?),
                (None, None) => (SweepAxis::DemandThreshold, vec![1.0, 0.8, 0.5, 0.2, 0.0]),
            };
            let strategy = Strategy::new(kind, cfg.policy.clone(), head_for(&cfg, kind, &c.out, threads)?)?;
            let points = sim::sweep(&cfg, &strategy, axis, &values, threads)?;
            fs::create_dir_all(&c.out)?;
            let csv = sim::sweep_csv(kind, &points);
            fs::write(c.out.join("sweep.csv"), &csv)?;
            let policy = match cfg.policy.kind {
                PolicyKind::Uncertainty => "uncertainty",
                PolicyKind::Objectness => "objectness",
            };
            let title = format!("{} / {policy} / {}", kind.as_str(), axis.as_str());
            fs::write(c.out.join("sweep.svg"), sim::sweep_svg(&title, &points))?;
            print!("{csv}");
        }
        Command::Report(c) => {
            let mut cfg = c.config()?;
            c.apply_single_overrides(&mut cfg)?;
            let threads = c.threads();
            let mut strategies = Vec::new();
            for kind in StrategyKind::ALL {
                let head = head_for(&cfg, kind, &c.out, threads)?;
                strategies.push((kind.as_str().to_string(), Strategy::new(kind, cfg.policy.clone(), head)?));
            }
            let summaries = sim::run_suite(&cfg, &strategies, threads)?;
            let mut text = String::new();
            for s in &summaries {
                text.push_str(&s.to_key_values());
                text.push('\n');
            }
            fs::create_dir_all(&c.out)?;
            fs::write(c.out.join("report.txt"), &text)?;
            fs::write(c.out.join("report.csv"), sim::report_csv(&summaries))?;
            for s in &summaries {
                println!(
                    "{:<12} map={:.4} nds={:.4} mean_payload_bytes={:.1}",
                    s.label,
                    s.eval.map,
                    s.eval.nds,
                    s.mean_payload_bytes()
                );
            }
        }
    }
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").replace('"', "'")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error kind=usage msg=\"{}\"", one_line(first));
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} msg=\"{}\"", e.kind(), one_line(&e.to_string()));
            ExitCode::from(1)
        }
    }
}
