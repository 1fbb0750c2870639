//! Subcommand implementations. Every file is written under `output_dir`.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use harmwatch::calibration::{grid_report, select_cell, write_grid_report};
use harmwatch::data::{Dataset, Selector};
use harmwatch::estimator::load_scores;
use harmwatch::harness::{
    mix_seed, plan_runs, run_experiment, run_suite, shuffled, simulate_stream, summarize,
    sweep as sweep_table, RunReport, ScoredSource, SCHEMA_VERSION,
};
use harmwatch::io::{read_dataset, write_events, CsvSchema};
use harmwatch::monitor::{MeanMonitor, QuantileMonitor, SourceStats};
use harmwatch::shiftsim::FeatureKind;
use serde::Serialize;
use thiserror::Error;

use crate::config::{AppConfig, Generator};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] harmwatch::Error),
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, CliError>;

/// How a successful command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Alarm,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Alarm => 2,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

fn output_file(cfg: &AppConfig, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = cfg.output_dir.join(name);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let f = File::create(&path).map_err(|e| io_err(&path, e))?;
    Ok((path, BufWriter::new(f)))
}

fn write_json<T: Serialize>(cfg: &AppConfig, name: &str, value: &T) -> Result<PathBuf> {
    let (path, mut w) = output_file(cfg, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(&path, e))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// The labeled source, with external scores attached when configured.
fn load_source(cfg: &AppConfig) -> Result<Dataset> {
    let path = cfg
        .source
        .as_ref()
        .ok_or_else(|| CliError::Usage("`source` is required".into()))?;
    let data = read_dataset(path)?;
    match &cfg.scores {
        Some(p) => Ok(data.with_scores(&load_scores(p)?)?),
        None => Ok(data),
    }
}

fn scored_source(cfg: &AppConfig) -> Result<ScoredSource> {
    let source = load_source(cfg)?;
    Ok(ScoredSource::fit(&shuffled(&source, cfg.seed)?, cfg.k)?)
}

#[derive(Serialize)]
struct SelectorFile {
    schema_version: u32,
    selector: Selector,
    power: f64,
    fdp: f64,
    estimator_r2: Option<f64>,
    n_calibration: usize,
    source_stats: SourceStats,
}

fn calibrated(cfg: &AppConfig, scored: &ScoredSource) -> Result<(Selector, SelectorFile)> {
    let cells = grid_report(&cfg.grid(), &scored.calibration)?;
    let (_, w) = output_file(cfg, "grid_report.csv")?;
    write_grid_report(w, &cells)?;
    let best = select_cell(&cells)?;
    let selector = best.selector();
    let stats = harmwatch::monitor::source_statistics(
        &scored.calibration,
        &selector,
        &cfg.monitor_config(),
    )?;
    let file = SelectorFile {
        schema_version: SCHEMA_VERSION,
        selector,
        power: best.power,
        fdp: best.fdp,
        estimator_r2: scored.r2,
        n_calibration: scored.calibration.len(),
        source_stats: stats,
    };
    write_json(cfg, "selector.json", &file)?;
    Ok((selector, file))
}

pub fn calibrate(cfg: &AppConfig) -> Result<Status> {
    let scored = scored_source(cfg)?;
    let (s, file) = calibrated(cfg, &scored)?;
    println!(
        "selector: q = {} (p = {}), q_hat = {} (p_hat = {}); power {:.4}, fdp {:.4}",
        s.q, s.p, s.q_hat, s.p_hat, file.power, file.fdp
    );
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct MonitorSummary {
    schema_version: u32,
    events: u64,
    phi_q: Option<u64>,
    phi_q2: Option<u64>,
    mean_plugin: Option<u64>,
    l_q: f64,
    u_q: f64,
    u_q2: f64,
    mean_lower: f64,
    mean_upper: f64,
    clipped_scores: u64,
}

fn production_reader(cfg: &AppConfig) -> Result<Box<dyn Read>> {
    let path = cfg
        .production
        .as_ref()
        .ok_or_else(|| CliError::Usage("`production` is required".into()))?;
    if path.as_os_str() == "-" {
        Ok(Box::new(io::stdin().lock()))
    } else {
        let f = File::open(path).map_err(|e| io_err(path, e))?;
        Ok(Box::new(BufReader::new(f)))
    }
}

pub fn monitor(cfg: &AppConfig) -> Result<Status> {
    let scored = scored_source(cfg)?;
    let (selector, _) = calibrated(cfg, &scored)?;
    let mconf = cfg.monitor_config();
    let mut quantile = QuantileMonitor::calibrated(&scored.calibration, selector, mconf)?;
    let mut mean = MeanMonitor::new(&scored.calibration, &mconf)?;

    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(production_reader(cfg)?);
    let schema = CsvSchema::from_headers(
        rdr.headers()
            .map_err(|e| harmwatch::Error::Ingest(e.to_string()))?,
    )?;
    let (traj_path, traj) = output_file(cfg, "trajectory.csv")?;
    let mut traj = csv::Writer::from_writer(traj);
    let mut record = csv::StringRecord::new();
    let mut t = 0u64;
    let mut reported = false;
    while rdr
        .read_record(&mut record)
        .map_err(|e| harmwatch::Error::Ingest(e.to_string()))?
    {
        t += 1;
        let event = schema.parse_event(&record, t, t + 1)?;
        let score = match event.score {
            Some(s) => s,
            None => scored.predict(&event.features).ok_or_else(|| {
                CliError::Usage(format!(
                    "row {t} has no score and the source carries external scores"
                ))
            })??,
        };
        let decision = quantile.observe(&event, score)?;
        mean.observe_score(score)?;
        if let Some(p) = quantile.trajectory().last() {
            traj.serialize(p).map_err(|e| io_err(&traj_path, e))?;
        }
        if decision.phi_q2 && !reported {
            // Flush so a pipeline watching the file sees the alarm row.
            traj.flush().map_err(|e| io_err(&traj_path, e))?;
            println!("alarm: phi_q2 at t = {t}");
            reported = true;
        }
    }
    traj.flush().map_err(|e| io_err(&traj_path, e))?;

    let alarms = quantile.alarms();
    let stats = *quantile.source();
    let summary = MonitorSummary {
        schema_version: SCHEMA_VERSION,
        events: t,
        phi_q: alarms.phi_q,
        phi_q2: alarms.phi_q2,
        mean_plugin: mean.alarm(),
        l_q: quantile.l_q(),
        u_q: stats.u_q,
        u_q2: stats.u_q2,
        mean_lower: mean.lower(),
        mean_upper: mean.source_upper(),
        clipped_scores: mean.clipped_count(),
    };
    write_json(cfg, "monitor_summary.json", &summary)?;
    if let Some(t) = alarms.phi_q {
        println!("alarm: phi_q at t = {t}");
    }
    if alarms.phi_q2.is_none() {
        println!("no alarm after {t} events");
    }
    Ok(if alarms.phi_q2.is_some() {
        Status::Alarm
    } else {
        Status::Ok
    })
}

/// Source datasets for suite commands, each paired with its feature kinds
/// and a base seed.
fn suite_sources(cfg: &AppConfig) -> Result<Vec<(Dataset, Vec<FeatureKind>, u64)>> {
    let kinds_for = |d: &Dataset, default: Vec<FeatureKind>| -> Result<Vec<FeatureKind>> {
        let kinds = cfg.feature_kinds.clone().unwrap_or(default);
        if kinds.len() != d.dim() {
            return Err(CliError::Usage(format!(
                "feature_kinds lists {} kinds for {} features",
                kinds.len(),
                d.dim()
            )));
        }
        Ok(kinds)
    };
    if cfg.source.is_some() {
        let d = load_source(cfg)?;
        let kinds = kinds_for(&d, vec![FeatureKind::Continuous; d.dim()])?;
        return Ok(vec![(d, kinds, cfg.seed)]);
    }
    let generator = cfg
        .generator
        .ok_or_else(|| CliError::Usage("set either `source` or `generator`".into()))?;
    (0..cfg.repetitions as u64)
        .map(|r| {
            let seed = mix_seed(cfg.seed, r);
            let (d, kinds) = match generator {
                Generator::Bench => (cfg.bench().generate(seed)?, cfg.bench().feature_kinds()),
                Generator::Subgroup => (
                    cfg.subgroup().generate(seed)?,
                    cfg.subgroup().feature_kinds(),
                ),
            };
            let kinds = kinds_for(&d, kinds)?;
            Ok((d, kinds, seed))
        })
        .collect()
}

fn pool(cfg: &AppConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}

/// Runs every scenario of every source. A file source is repeated
/// `repetitions` times; each generated source is run once.
fn collect_reports(cfg: &AppConfig) -> Result<Vec<RunReport>> {
    let hc = cfg.harness_config();
    let repeats = if cfg.source.is_some() {
        cfg.repetitions
    } else {
        1
    };
    let sources = suite_sources(cfg)?;
    pool(cfg)?.install(|| {
        let mut reports = Vec::new();
        for (data, kinds, seed) in &sources {
            if hc.schedule.shifts() {
                let plan = plan_runs(data, kinds, repeats, *seed)?;
                reports.extend(run_suite(data, &plan, &hc)?);
            } else {
                for r in 0..repeats as u64 {
                    reports.push(run_experiment(data, None, &hc, mix_seed(*seed, r))?);
                }
            }
        }
        Ok(reports)
    })
}

pub fn evaluate(cfg: &AppConfig) -> Result<Status> {
    let reports = collect_reports(cfg)?;
    let metrics = summarize(&reports, &cfg.harness_config());
    write_json(cfg, "metrics.json", &metrics)?;
    write_json(cfg, "reports.json", &reports)?;
    println!(
        "{} runs ({} uncalibratable), median delta {}",
        metrics.n_reports,
        metrics.n_uncalibratable,
        fmt_opt(metrics.median_delta)
    );
    for m in &metrics.detectors {
        println!(
            "{:12} power {:>6}  fdp {:>6}  harmful {:>4}  alarms {:>4}",
            m.detector.name(),
            fmt_opt(m.power),
            fmt_opt(m.fdp),
            m.n_harmful,
            m.n_alarms
        );
    }
    Ok(Status::Ok)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

#[derive(Serialize)]
struct SweepFile {
    schema_version: u32,
    rows: Vec<harmwatch::harness::SweepRow>,
}

pub fn sweep(cfg: &AppConfig) -> Result<Status> {
    let reports = collect_reports(cfg)?;
    let rows = sweep_table(&reports, &cfg.eps_harm_grid, &cfg.eps_tol_grid);
    let (path, w) = output_file(cfg, "sweep.csv")?;
    let mut wtr = csv::Writer::from_writer(w);
    let e = |err: csv::Error| io_err(&path, err);
    wtr.write_record([
        "eps_harm",
        "eps_tol",
        "detector",
        "power",
        "fdp",
        "n_harmful",
        "n_alarms",
    ])
    .map_err(e)?;
    for row in &rows {
        for m in &row.detectors {
            let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
            wtr.write_record([
                row.eps_harm.to_string(),
                row.eps_tol.to_string(),
                m.detector.name().to_string(),
                opt(m.power),
                opt(m.fdp),
                m.n_harmful.to_string(),
                m.n_alarms.to_string(),
            ])
            .map_err(e)?;
        }
    }
    wtr.flush().map_err(|err| io_err(&path, err))?;
    write_json(
        cfg,
        "sweep.json",
        &SweepFile {
            schema_version: SCHEMA_VERSION,
            rows,
        },
    )?;
    println!(
        "{} sweep rows over {} runs",
        cfg.eps_harm_grid.len() * cfg.eps_tol_grid.len(),
        reports.len()
    );
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct StreamEntry {
    id: String,
    file: String,
    seed: u64,
    events: usize,
    scenario: Option<harmwatch::shiftsim::ShiftScenario>,
}

pub fn simulate(cfg: &AppConfig) -> Result<Status> {
    let hc = cfg.harness_config();
    let repeats = if cfg.source.is_some() {
        cfg.repetitions
    } else {
        1
    };
    let mut entries = Vec::new();
    for (i, (data, kinds, seed)) in suite_sources(cfg)?.iter().enumerate() {
        let runs: Vec<(Option<harmwatch::shiftsim::ShiftScenario>, u64)> = if hc.schedule.shifts() {
            plan_runs(data, kinds, repeats, *seed)?
                .into_iter()
                .map(|(s, seed)| (Some(s), seed))
                .collect()
        } else {
            (0..repeats as u64)
                .map(|r| (None, mix_seed(*seed, r)))
                .collect()
        };
        for (j, (scenario, run_seed)) in runs.into_iter().enumerate() {
            let (id, events) = simulate_stream(data, scenario.as_ref(), &hc, run_seed)?;
            let file = format!("streams/s{i}-{j:04}-{id}.csv");
            let (_, w) = output_file(cfg, &file)?;
            write_events(w, &events)?;
            entries.push(StreamEntry {
                id,
                file,
                seed: run_seed,
                events: events.len(),
                scenario: scenario.map(|s| s.with_seed(mix_seed(run_seed, 1))),
            });
        }
    }
    write_json(cfg, "scenarios.json", &entries)?;
    println!("wrote {} streams", entries.len());
    Ok(Status::Ok)
}
