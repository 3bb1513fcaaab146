use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use countcurate::detect::{AnomalyKind, AnomalyStatus};
use countcurate::pipeline::{
    append_decision, run_stages, CurationDecision, PipelineConfig, PipelineError, RunArtifacts, RunReport,
    SourceConfig, StageSelection, StageStatus, Verdict,
};
use countcurate::{Level, Metric, SourceId};

const EXIT_STAGE: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "countcurate", version, about = "Compare, check and repair cumulative count panels")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Pipeline config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Never touch the network; only local files and cached snapshots.
    #[arg(long, global = true)]
    offline: bool,
    /// Restrict to a source, or add one as ID=ENDPOINT. Repeatable.
    #[arg(long = "source", global = true, value_name = "ID[=ENDPOINT]")]
    sources: Vec<String>,
    /// Restrict to these metrics. Repeatable.
    #[arg(long = "metric", global = true)]
    metrics: Vec<Metric>,
    #[arg(long, global = true)]
    level: Option<Level>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Significance level for the stage being run (seasonality tests,
    /// change points, or both for `run`).
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// How many of the most dissimilar keys to report per source pair.
    #[arg(long, global = true)]
    top: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Download or read every source and write canonical panels.
    Fetch,
    /// Cross-source dissimilarity reports.
    Compare,
    /// Day-of-week seasonality tests.
    Seasonality,
    /// Order violations, point anomalies and change points.
    Detect,
    /// Detect, apply logged decisions and write repaired panels.
    Repair,
    /// Every stage.
    Run,
    /// Record a curator verdict for one anomaly.
    Decide(DecideArgs),
    /// Serve the review API over the latest run.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct DecideArgs {
    anomaly_id: String,
    /// confirm or dismiss
    verdict: Verdict,
    /// Problematic period as LO:HI day offsets or dates (inclusive).
    #[arg(long)]
    period: Option<String>,
    #[arg(long, default_value = "")]
    note: String,
    #[arg(long, env = "USER", default_value = "")]
    actor: String,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Require this bearer token on every request.
    #[arg(long, env = "COUNTCURATE_TOKEN", hide_env_values = true)]
    token: Option<String>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_CONFIG, message: message.into() }
}

fn stage_error(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_STAGE, message: message.into() }
}

fn rebase(path: &mut PathBuf, old: &Path, new: &Path) {
    if let Ok(rest) = path.strip_prefix(old) {
        *path = new.join(rest);
    }
}

fn build_config(g: &Global, cmd: &Command) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::read(path).map_err(|e| config_error(e.to_string()))?,
        None => {
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("countcurate-out"));
            let mut cfg = PipelineConfig::new(Vec::new(), out.clone(), out.join("decisions.jsonl"));
            cfg.cache_dir = out.join("cache");
            cfg.apply_env(std::env::vars());
            cfg
        }
    };
    if g.offline {
        cfg.offline = true;
    }
    if !g.sources.is_empty() {
        let mut wanted = Vec::new();
        for spec in &g.sources {
            let (id, endpoint) = match spec.split_once('=') {
                Some((id, ep)) => (id, Some(ep.to_string())),
                None => (spec.as_str(), None),
            };
            let id: SourceId = id.parse().map_err(|e: countcurate::model::ModelError| config_error(e.to_string()))?;
            wanted.push(id);
            match cfg.sources.iter_mut().find(|s| s.id == id) {
                Some(s) => {
                    if endpoint.is_some() {
                        s.endpoint = endpoint;
                        s.endpoints.clear();
                    }
                    s.enabled = true;
                }
                None => {
                    let Some(endpoint) = endpoint else {
                        return Err(config_error(format!("source {id} is not configured; give it as {id}=ENDPOINT")));
                    };
                    cfg.sources.push(SourceConfig {
                        id,
                        enabled: true,
                        endpoint: Some(endpoint),
                        endpoints: Default::default(),
                    });
                }
            }
        }
        cfg.sources.retain(|s| wanted.contains(&s.id));
    }
    if !g.metrics.is_empty() {
        cfg.metrics = g.metrics.clone();
    }
    if let Some(level) = g.level {
        cfg.level = level;
    }
    if let (Some(out), Some(_)) = (&g.out, &g.config) {
        let old = cfg.output_dir.clone();
        rebase(&mut cfg.decision_log, &old, out);
        rebase(&mut cfg.cache_dir, &old, out);
        cfg.output_dir = out.clone();
    }
    if let Some(alpha) = g.alpha {
        match cmd {
            Command::Seasonality => cfg.seasonality_alpha = alpha,
            Command::Detect | Command::Repair => cfg.detect.change_point.alpha = alpha,
            _ => {
                cfg.seasonality_alpha = alpha;
                cfg.detect.change_point.alpha = alpha;
            }
        }
    }
    if let Some(top) = g.top {
        cfg.top_n = top;
    }
    cfg.validate().map_err(|e| config_error(e.to_string()))?;
    Ok(cfg)
}

fn print_report(report: &RunReport, out: &Path) {
    println!("run {}", report.run_id);
    for s in &report.stages {
        let counts: Vec<String> = s.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let status = match s.status {
            StageStatus::Ok => "ok",
            StageStatus::Failed => "FAILED",
            StageStatus::Skipped => "skipped",
        };
        println!("  {:<12} {:<8} {}", s.stage, status, counts.join(" "));
        for e in &s.errors {
            eprintln!("  {}: {e}", s.stage);
        }
    }
    println!("artifacts in {}", out.display());
}

fn run(cfg: &PipelineConfig, sel: StageSelection) -> Result<(), Failure> {
    let report = run_stages(cfg, sel).map_err(|e| match e {
        PipelineError::Config(e) => config_error(e.to_string()),
        other => stage_error(other.to_string()),
    })?;
    print_report(&report, &cfg.output_dir);
    if report.failed() {
        return Err(stage_error("one or more stages failed"));
    }
    Ok(())
}

fn parse_bound(s: &str, series_start: NaiveDate) -> Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let d: NaiveDate = s.parse().map_err(|_| format!("`{s}` is neither a day offset nor a date"))?;
    usize::try_from((d - series_start).num_days()).map_err(|_| format!("{d} is before the series start"))
}

fn decide(cfg: &PipelineConfig, args: &DecideArgs) -> Result<(), Failure> {
    let run = RunArtifacts::load(&cfg.output_dir)
        .map_err(|e| stage_error(format!("no run to decide on ({e}); run `countcurate detect` first")))?;
    let rec = run
        .record(&args.anomaly_id)
        .ok_or_else(|| config_error(format!("run {} has no anomaly `{}`", run.run_id(), args.anomaly_id)))?;
    if rec.status == AnomalyStatus::Repaired || rec.kind == AnomalyKind::OdViolation {
        return Err(stage_error(format!("anomaly `{}` is already repaired", rec.id)));
    }
    let mut d = CurationDecision::new(rec.id.clone(), args.verdict);
    if let Some(p) = &args.period {
        let (lo, hi) = p
            .split_once(':')
            .or_else(|| p.split_once(".."))
            .ok_or_else(|| config_error(format!("period `{p}` is not LO:HI")))?;
        let start = rec.date - chrono::Days::new(rec.t_index as u64);
        let lo = parse_bound(lo, start).map_err(config_error)?;
        let hi = parse_bound(hi, start).map_err(config_error)?;
        if (lo..=hi).contains(&rec.t_index) {
            return Err(config_error(format!("period {lo}:{hi} contains the flagged day {}", rec.t_index)));
        }
        d.period_override = Some((lo, hi));
    }
    d.note = args.note.clone();
    d.actor = args.actor.clone();
    d.validate().map_err(|e| config_error(e.to_string()))?;
    append_decision(&cfg.decision_log, &d).map_err(|e| stage_error(e.to_string()))?;
    println!("{} {} {} on {} recorded in {}", verdict_word(args.verdict), rec.kind, rec.key, rec.date, cfg.decision_log.display());
    Ok(())
}

fn verdict_word(v: Verdict) -> &'static str {
    match v {
        Verdict::Confirm => "confirmed",
        Verdict::Dismiss => "dismissed",
    }
}

fn serve(cfg: PipelineConfig, args: &ServeArgs) -> Result<(), Failure> {
    let state = countcurate_review::AppState::open_or_run(cfg, args.token.clone())
        .map_err(|e| stage_error(e.to_string()))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| stage_error(e.to_string()))?;
    rt.block_on(countcurate_review::serve(state, args.addr)).map_err(|e| stage_error(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_CONFIG),
            };
        }
    };
    let outcome = build_config(&cli.global, &cli.command).and_then(|cfg| match &cli.command {
        Command::Fetch => run(&cfg, StageSelection::INGEST),
        Command::Compare => run(&cfg, StageSelection { compare: true, ..StageSelection::INGEST }),
        Command::Seasonality => run(&cfg, StageSelection { seasonality: true, ..StageSelection::INGEST }),
        Command::Detect => run(&cfg, StageSelection { detect: true, ..StageSelection::INGEST }),
        Command::Repair => run(&cfg, StageSelection { detect: true, repair: true, ..StageSelection::INGEST }),
        Command::Run => run(&cfg, StageSelection::ALL),
        Command::Decide(args) => decide(&cfg, args),
        Command::Serve(args) => serve(cfg, args),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
