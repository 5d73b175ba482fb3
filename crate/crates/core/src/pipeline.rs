//! The experiment stages and the files they exchange.
//!
//! `gen` writes the network, `run` the tweet/response logs and trace,
//! `detect` the conflict records, `report` the analytics. `repro` chains all
//! four and evaluates the checks that apply to a single configuration.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::{emit_report, Activity, Report, DEFAULT_BUCKET_WIDTH_S};
use crate::config::ExperimentConfig;
use crate::detect::{
    detect_all, read_detection, write_conflicts, DetectionResult, DetectionTotals,
};
use crate::error::{Error, Result};
use crate::feed::{run_experiment, RunArtifacts, TraceStats, TweetTrace};
use crate::logs;
use crate::network::{
    build_network, build_profile, read_network_file, validate_profile, write_network_file,
    FollowingNetwork, ValidationReport, WorkloadProfile,
};
use crate::sim::RngStreams;

pub const NETWORK_FILE: &str = "network.jsonl";
pub const VALIDATION_FILE: &str = "validation.json";
pub const TWEETS_FILE: &str = "tweets.jsonl";
pub const RESPONSES_FILE: &str = "responses.jsonl";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const RUN_STATS_FILE: &str = "run_stats.json";
pub const CONFLICTS_FILE: &str = "conflicts.jsonl";
pub const DETECTION_FILE: &str = "detection.json";
pub const REPORT_DIR: &str = "report";
pub const ACCEPTANCE_FILE: &str = "acceptance.txt";

/// Relative tolerance on the generated workload means.
pub const WORKLOAD_TOLERANCE: f64 = 0.10;
/// Largest allowed |Spearman| between follower count and tweet rate.
pub const INDEPENDENCE_LIMIT: f64 = 0.1;
pub const MIN_TAIL_BUCKETS: usize = 5;
pub const STRONG_CORRELATION: f64 = 0.5;
pub const WEAK_CORRELATION: f64 = 0.2;

/// Builds the network and workload profile for `cfg`.
pub fn generate(
    cfg: &ExperimentConfig,
) -> Result<(FollowingNetwork, WorkloadProfile, ValidationReport)> {
    let streams = RngStreams::new(cfg.seed);
    let net = build_network(
        cfg.n_producers,
        cfg.n_consumers,
        &cfg.zipf,
        &mut streams.stream("network"),
    )?;
    let prof = build_profile(&net, &cfg.zipf, cfg.scale, &mut streams.stream("profile"))?;
    let report = validate_profile(&net, &prof, &cfg.zipf, WORKLOAD_TOLERANCE);
    Ok((net, prof, report))
}

pub fn simulate(
    cfg: &ExperimentConfig,
    net: &FollowingNetwork,
    prof: &WorkloadProfile,
) -> Result<RunArtifacts> {
    run_experiment(
        net,
        prof,
        cfg.store.clone(),
        cfg.feed(),
        cfg.duration(),
        cfg.seed,
    )
}

pub fn analyze(
    cfg: &ExperimentConfig,
    net: &FollowingNetwork,
    run: &RunArtifacts,
) -> Result<(DetectionResult, Report)> {
    let det = detect_all(&run.response_log, &run.tweet_log, net, &cfg.detect())?;
    let activity = Activity::from_logs(&run.tweet_log, &run.response_log, &det.totals);
    let report = Report::build(&det, net, &activity, DEFAULT_BUCKET_WIDTH_S)?;
    Ok((det, report))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn open(dir: &Path, name: &str) -> Result<BufReader<File>> {
    let path = dir.join(name);
    File::open(&path).map(BufReader::new).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::from)?;
    text.push('\n');
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<T> {
    serde_json::from_reader(open(dir, name)?).map_err(|source| Error::Parse { line: 0, source })
}

fn load_network(cfg: &ExperimentConfig, dir: &Path) -> Result<(FollowingNetwork, WorkloadProfile)> {
    read_network_file(open(dir, NETWORK_FILE)?, &cfg.zipf, cfg.scale)
}

fn load_logs(dir: &Path) -> Result<RunArtifacts> {
    let tweet_log = logs::read_tweet_log(open(dir, TWEETS_FILE)?)?;
    let response_log = logs::read_response_log(open(dir, RESPONSES_FILE)?, &tweet_log)?;
    let trace = logs::read_trace(open(dir, TRACE_FILE)?)?;
    let stats: TraceStats = read_json(dir, RUN_STATS_FILE)?;
    Ok(RunArtifacts {
        tweet_log,
        response_log,
        trace,
        stats,
    })
}

/// Writes the network and its validation report. Fails if validation fails.
pub fn cmd_gen(cfg: &ExperimentConfig, dir: &Path) -> Result<ValidationReport> {
    let (net, prof, report) = generate(cfg)?;
    write_network_file(create(dir, NETWORK_FILE)?, &net, &prof)?;
    write_json(dir, VALIDATION_FILE, &report)?;
    if !report.passed {
        let missed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        return Err(Error::Validation(format!(
            "missed targets: {}",
            missed.join(", ")
        )));
    }
    Ok(report)
}

/// Runs the experiment over the network in `dir` and writes its logs.
pub fn cmd_run(cfg: &ExperimentConfig, dir: &Path) -> Result<TraceStats> {
    let (net, prof) = load_network(cfg, dir)?;
    let run = simulate(cfg, &net, &prof)?;
    logs::write_tweet_log(create(dir, TWEETS_FILE)?, &run.tweet_log)?;
    logs::write_response_log(create(dir, RESPONSES_FILE)?, &run.response_log)?;
    logs::write_trace(create(dir, TRACE_FILE)?, &run.trace)?;
    write_json(dir, RUN_STATS_FILE, &run.stats)?;
    Ok(run.stats)
}

pub fn cmd_detect(cfg: &ExperimentConfig, dir: &Path) -> Result<DetectionTotals> {
    let (net, _) = load_network(cfg, dir)?;
    let run = load_logs(dir)?;
    let det = detect_all(&run.response_log, &run.tweet_log, &net, &cfg.detect())?;
    write_conflicts(create(dir, CONFLICTS_FILE)?, &det)?;
    write_json(dir, DETECTION_FILE, &det.totals)?;
    Ok(det.totals)
}

pub fn cmd_report(cfg: &ExperimentConfig, dir: &Path) -> Result<Report> {
    let (net, _) = load_network(cfg, dir)?;
    let run = load_logs(dir)?;
    let totals: DetectionTotals = read_json(dir, DETECTION_FILE)?;
    let det = read_detection(open(dir, CONFLICTS_FILE)?, totals, &run.tweet_log)?;
    let activity = Activity::from_logs(&run.tweet_log, &run.response_log, &det.totals);
    let report = Report::build(&det, &net, &activity, DEFAULT_BUCKET_WIDTH_S)?;
    emit_report(&report, &dir.join(REPORT_DIR))?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            pass,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

/// Records whose G exceeds their tweet's fan-out completion plus its
/// largest sampled replication lag.
pub fn gap_bound_violations(det: &DetectionResult, trace: &[TweetTrace]) -> usize {
    det.records
        .iter()
        .filter(|r| {
            let tr = &trace[r.missing.seq as usize];
            r.gap_us > tr.fanout_completion_us + tr.max_lag_us
        })
        .count()
}

pub fn workload_check(v: &ValidationReport) -> Check {
    let rho = v.degree_rate_spearman;
    let independent = rho.is_some_and(|r| r.abs() < INDEPENDENCE_LIMIT);
    let means: Vec<String> = v
        .checks
        .iter()
        .map(|c| format!("{} {:.3}/{:.3}", c.name, c.realized_mean, c.target_mean))
        .collect();
    Check::new(
        "workload fidelity",
        v.passed && independent,
        format!(
            "{}; degree/rate spearman {}",
            means.join(", "),
            rho.map_or("undefined".into(), |r| format!("{r:.4}"))
        ),
    )
}

pub fn zero_conflict_check(det: &DetectionResult) -> Check {
    Check::new(
        "zero-delay soundness",
        det.totals.conflict_records == 0,
        format!(
            "conflicts: {} over {} responses",
            det.totals.conflict_records, det.totals.responses_analyzed
        ),
    )
}

pub fn gap_bound_check(det: &DetectionResult, trace: &[TweetTrace]) -> Check {
    let v = gap_bound_violations(det, trace);
    Check::new(
        "G bound",
        v == 0,
        format!("{v} violations over {} records", det.records.len()),
    )
}

pub fn anomaly_regime_check(report: &Report) -> Check {
    let h = &report.histogram;
    let pass = report.inconsistency_rate > 0.0
        && h.nonempty_buckets() >= MIN_TAIL_BUCKETS
        && h.has_decaying_tail();
    Check::new(
        "nonzero anomaly regime",
        pass,
        format!(
            "rate {:.4}%, {} nonempty buckets, decaying tail {}, mean G {:.1} s, max G {:.1} s",
            report.inconsistency_rate * 100.0,
            h.nonempty_buckets(),
            h.has_decaying_tail(),
            report.gaps.mean_g_s,
            report.gaps.max_g_s
        ),
    )
}

pub fn correlation_check(report: &Report) -> Check {
    let rho = |name: &str| {
        report
            .studies
            .iter()
            .find(|s| s.name == name)
            .and_then(|s| s.spearman)
    };
    let strong = rho("producer_followers").is_some_and(|r| r > STRONG_CORRELATION);
    let weak = ["producer_tweets", "consumer_followed", "consumer_queries"]
        .iter()
        .all(|n| rho(n).is_some_and(|r| r.abs() < WEAK_CORRELATION));
    let detail: Vec<String> = report
        .studies
        .iter()
        .map(|s| {
            format!(
                "{} {}",
                s.name,
                s.spearman.map_or("undefined".into(), |r| format!("{r:.4}"))
            )
        })
        .collect();
    Check::new("correlation shape", strong && weak, detail.join(", "))
}

/// Whether the configuration has no replication lag and no fan-out delay.
pub fn is_zero_delay(cfg: &ExperimentConfig) -> bool {
    cfg.store.lag.is_zero() && cfg.fanout.is_synchronous()
}

/// Chains every stage through files in `dir` and evaluates the checks
/// that apply to `cfg`.
pub fn cmd_repro(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<Check>> {
    let stage = |name: &'static str| {
        move |e: Error| Error::Stage {
            stage: name,
            source: Box::new(e),
        }
    };
    let validation = cmd_gen(cfg, dir).map_err(stage("gen"))?;
    cmd_run(cfg, dir).map_err(stage("run"))?;
    cmd_detect(cfg, dir).map_err(stage("detect"))?;
    let report = cmd_report(cfg, dir).map_err(stage("report"))?;

    let run = load_logs(dir)?;
    let det = read_detection(
        open(dir, CONFLICTS_FILE)?,
        read_json(dir, DETECTION_FILE)?,
        &run.tweet_log,
    )?;
    let mut checks = vec![workload_check(&validation)];
    if is_zero_delay(cfg) {
        checks.push(zero_conflict_check(&det));
    } else {
        checks.push(gap_bound_check(&det, &run.trace));
        checks.push(anomaly_regime_check(&report));
        checks.push(correlation_check(&report));
    }
    let text: String = checks.iter().map(|c| c.line() + "\n").collect();
    fs::write(dir.join(ACCEPTANCE_FILE), text)?;
    Ok(checks)
}

/// `FEEDSIM_OUT` wins over the configured directory.
pub fn resolve_out_dir(cfg: &ExperimentConfig, flag: Option<PathBuf>) -> PathBuf {
    std::env::var_os(crate::config::OUT_DIR_ENV)
        .map(PathBuf::from)
        .or(flag)
        .unwrap_or_else(|| cfg.out_dir.clone())
}
