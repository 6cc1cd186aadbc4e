//! Benchmark orchestration, aggregation tables and run artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::ConeMapFile;
use crate::coordinator::{mission_log_from_jsonl, mission_log_to_jsonl};
use crate::geometry::Pose2D;
use crate::guidance::control_log_to_csv;
use crate::harness::config::ExperimentConfig;
use crate::harness::run::{
    compute_metrics, reference_from_csv, reference_to_csv, run_experiment, MetricInputs, RunMetrics, RunOutput,
};
use crate::harness::svg::overlay_svg;
use crate::metrics::{summarize, TimedPose};
use crate::par::{self, Execution};
use crate::path::PathPlan;
use crate::sim::{trajectory_from_csv, trajectory_to_csv};
use crate::track::Track;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub config_id: String,
    pub metric: String,
    pub unit: String,
    pub mean: f64,
    pub std: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl ResultsTable {
    pub fn get(&self, config_id: &str, metric: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.config_id == config_id && r.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("config_id,metric,unit,mean,std,n\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:.6},{},{}", r.config_id, r.metric, r.unit, r.mean, opt(r.std), r.n);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config_id: String,
    pub seed: u64,
    pub outcome: Result<RunMetrics, String>,
}

pub struct BenchOutput {
    pub table: ResultsTable,
    pub records: Vec<RunRecord>,
    pub runs: Vec<RunOutput>,
}

type Extract = fn(&RunMetrics) -> Option<f64>;

pub const METRICS: [(&str, &str, Extract); 11] = [
    ("pose_rmse", "m", |m| m.pose_rmse),
    ("heading_rmse", "rad", |m| m.heading_rmse),
    ("cone_rmse", "m", |m| m.cone_rmse),
    ("cone_matched_fraction", "1", |m| Some(m.cone_matched_fraction)),
    ("cone_spurious", "count", |m| Some(m.cone_spurious as f64)),
    ("path_distance", "m", |m| m.path_distance),
    ("path_total_curvature", "rad", |m| m.path_total_curvature),
    ("cross_track_rmse", "m", |m| m.cross_track_rmse),
    ("fast_lap_time", "s", |m| m.fast_lap_time()),
    ("boundary_crossings", "count", |m| Some(m.boundary_crossings as f64)),
    ("finished", "1", |m| Some(if m.finished() { 1.0 } else { 0.0 })),
];

/// Mean and sample std per (config, metric) over the successful runs, in
/// config order then metric order.
pub fn aggregate(configs: &[ExperimentConfig], records: &[RunRecord]) -> ResultsTable {
    let mut rows = Vec::new();
    for c in configs {
        let ok: Vec<&RunMetrics> =
            records.iter().filter(|r| r.config_id == c.id).filter_map(|r| r.outcome.as_ref().ok()).collect();
        for (name, unit, f) in METRICS {
            let vals: Vec<f64> = ok.iter().filter_map(|m| f(m)).collect();
            if let Some(s) = summarize(&vals) {
                rows.push(ResultRow {
                    config_id: c.id.clone(),
                    metric: name.into(),
                    unit: unit.into(),
                    mean: s.mean,
                    std: s.std,
                    n: s.n,
                });
            }
        }
    }
    ResultsTable { rows }
}

/// Run every (config, seed) pair; a failed run is recorded and the rest go on.
pub fn run_bench(configs: &[ExperimentConfig], exec: Execution) -> BenchOutput {
    let jobs: Vec<(usize, u64)> = configs.iter().enumerate().flat_map(|(i, c)| c.seeds.iter().map(move |&s| (i, s))).collect();
    let results = par::map(exec, &jobs, |&(i, seed)| run_experiment(&configs[i], seed).map_err(|e| e.to_string()));
    let mut records = Vec::new();
    let mut runs = Vec::new();
    for (&(i, seed), r) in jobs.iter().zip(results) {
        let config_id = configs[i].id.clone();
        match r {
            Ok(out) => {
                records.push(RunRecord { config_id, seed, outcome: Ok(out.metrics.clone()) });
                runs.push(out);
            }
            Err(e) => records.push(RunRecord { config_id, seed, outcome: Err(e) }),
        }
    }
    BenchOutput { table: aggregate(configs, &records), records, runs }
}

fn mean_std(t: &ResultsTable, id: &str, metric: &str) -> String {
    match t.get(id, metric) {
        Some(r) => format!("{:.6},{}", r.mean, opt(r.std)),
        None => ",".into(),
    }
}

fn row_n(t: &ResultsTable, id: &str) -> usize {
    t.get(id, "finished").map_or(0, |r| r.n)
}

/// First config per distinct key, in config order.
fn firsts<K: PartialEq>(configs: &[ExperimentConfig], key: impl Fn(&ExperimentConfig) -> K) -> Vec<&ExperimentConfig> {
    let mut seen: Vec<K> = Vec::new();
    let mut out = Vec::new();
    for c in configs {
        let k = key(c);
        if !seen.contains(&k) {
            seen.push(k);
            out.push(c);
        }
    }
    out
}

/// Cone and pose error per SLAM mode.
pub fn table_i_csv(configs: &[ExperimentConfig], t: &ResultsTable) -> String {
    let mut out = String::from(
        "config_id,slam_mode,cone_rmse_mean,cone_rmse_std,pose_rmse_mean,pose_rmse_std,heading_rmse_mean,heading_rmse_std,n\n",
    );
    for c in firsts(configs, |c| c.slam_mode) {
        let _ = writeln!(
            out,
            "{},{:?},{},{},{},{}",
            c.id,
            c.slam_mode,
            mean_std(t, &c.id, "cone_rmse"),
            mean_std(t, &c.id, "pose_rmse"),
            mean_std(t, &c.id, "heading_rmse"),
            row_n(t, &c.id)
        );
    }
    out
}

/// Distance and total curvature of the planned racing path per planner.
pub fn table_ii_csv(configs: &[ExperimentConfig], t: &ResultsTable) -> String {
    let mut out = String::from("config_id,planner,distance_mean,distance_std,total_curvature_mean,total_curvature_std,n\n");
    for c in firsts(configs, |c| (c.planner, c.slam_mode)).into_iter().filter(|c| c.slam_mode == comparison_mode(configs)) {
        let _ = writeln!(
            out,
            "{},{:?},{},{},{}",
            c.id,
            c.planner,
            mean_std(t, &c.id, "path_distance"),
            mean_std(t, &c.id, "path_total_curvature"),
            row_n(t, &c.id)
        );
    }
    out
}

/// SLAM mode used by the planner and controller comparisons: the mode of
/// the last config.
fn comparison_mode(configs: &[ExperimentConfig]) -> crate::coordinator::SlamMode {
    configs.last().map(|c| c.slam_mode).unwrap_or_default()
}

/// Cross-track error and lap time per controller and planner.
pub fn table_iii_csv(configs: &[ExperimentConfig], t: &ResultsTable) -> String {
    let mut out = String::from(
        "config_id,planner,controller,cross_track_rmse_mean,cross_track_rmse_std,lap_time_mean,lap_time_std,n\n",
    );
    let mode = comparison_mode(configs);
    for c in firsts(configs, |c| (c.planner, c.controller, c.slam_mode)).into_iter().filter(|c| c.slam_mode == mode) {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{},{},{}",
            c.id,
            c.planner,
            c.controller,
            mean_std(t, &c.id, "cross_track_rmse"),
            mean_std(t, &c.id, "fast_lap_time"),
            row_n(t, &c.id)
        );
    }
    out
}

pub const RUN_COLUMNS: &str = "config_id,seed,status,final_phase,laps,pose_rmse,heading_rmse,cone_rmse,cone_matched_fraction,cone_spurious,path_distance,path_total_curvature,cross_track_rmse,discovery_lap_time,fast_lap_time,boundary_crossings,replans,degraded,error";

pub fn metrics_row(config_id: &str, seed: u64, outcome: &Result<RunMetrics, String>) -> String {
    match outcome {
        Ok(m) => format!(
            "{config_id},{seed},ok,{:?},{},{},{},{},{:.6},{},{},{},{},{},{},{},{},{},",
            m.final_phase,
            m.laps_completed,
            opt(m.pose_rmse),
            opt(m.heading_rmse),
            opt(m.cone_rmse),
            m.cone_matched_fraction,
            m.cone_spurious,
            opt(m.path_distance),
            opt(m.path_total_curvature),
            opt(m.cross_track_rmse),
            opt(m.lap_times.first().copied()),
            opt(m.fast_lap_time()),
            m.boundary_crossings,
            m.replans,
            m.degraded
        ),
        Err(e) => format!("{config_id},{seed},error,,,,,,,,,,,,,,,,\"{}\"", e.replace('"', "'")),
    }
}

pub fn runs_csv(records: &[RunRecord]) -> String {
    let mut out = format!("{RUN_COLUMNS}\n");
    for r in records {
        out.push_str(&metrics_row(&r.config_id, r.seed, &r.outcome));
        out.push('\n');
    }
    out
}

pub fn nav_to_csv(nav: &[TimedPose]) -> String {
    let mut out = String::from("t,x,y,theta\n");
    for p in nav {
        let _ = writeln!(out, "{:.2},{},{},{}", p.t, p.pose.x, p.pose.y, p.pose.theta);
    }
    out
}

pub fn nav_from_csv(text: &str) -> Result<Vec<TimedPose>, csv::Error> {
    #[derive(Deserialize)]
    struct Row {
        t: f64,
        x: f64,
        y: f64,
        theta: f64,
    }
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map(|r: Row| TimedPose { t: r.t, pose: Pose2D::new(r.x, r.y, r.theta) }))
        .collect()
}

/// Files written for one run.
pub fn write_run_artifacts(dir: &Path, run: &RunOutput) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("track.json"), run.track.to_json())?;
    fs::write(dir.join("trajectory.csv"), trajectory_to_csv(&run.trajectory))?;
    fs::write(dir.join("nav.csv"), nav_to_csv(&run.nav))?;
    fs::write(dir.join("cones.json"), ConeMapFile::new("estimate", run.cones.clone()).to_json())?;
    fs::write(dir.join("registry.json"), ConeMapFile::new("registry", run.registry.clone()).to_json())?;
    if let Some(p) = &run.planned_path {
        fs::write(dir.join("planned_path.csv"), p.to_csv())?;
    }
    if let Some(p) = &run.final_path {
        fs::write(dir.join("path.csv"), p.to_csv())?;
    }
    if !run.reference.is_empty() {
        fs::write(dir.join("reference.csv"), reference_to_csv(&run.reference))?;
    }
    fs::write(dir.join("mission.jsonl"), mission_log_to_jsonl(&run.events))?;
    fs::write(dir.join("control.csv"), control_log_to_csv(&run.control))?;
    fs::write(
        dir.join("metrics.csv"),
        format!("{RUN_COLUMNS}\n{}\n", metrics_row(&run.config_id, run.seed, &Ok(run.metrics.clone()))),
    )?;
    let truth: Vec<_> = run.trajectory.iter().map(|s| s.position()).collect();
    let est: Vec<_> = run.nav.iter().map(|p| p.pose.position()).collect();
    let svg = overlay_svg(&run.track.cones, &run.cones, run.final_path.as_ref(), &truth, &est);
    fs::write(dir.join("overlay.svg"), svg)
}

pub fn write_bench(out_dir: &Path, configs: &[ExperimentConfig], bench: &BenchOutput) -> io::Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("results.csv"), bench.table.to_csv())?;
    fs::write(out_dir.join("runs.csv"), runs_csv(&bench.records))?;
    fs::write(out_dir.join("table_i.csv"), table_i_csv(configs, &bench.table))?;
    fs::write(out_dir.join("table_ii.csv"), table_ii_csv(configs, &bench.table))?;
    fs::write(out_dir.join("table_iii.csv"), table_iii_csv(configs, &bench.table))?;
    for run in &bench.runs {
        write_run_artifacts(&out_dir.join("runs").join(&run.config_id).join(run.seed.to_string()), run)?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{file}: {source}")]
    Io { file: String, source: io::Error },
    #[error("{file}: {msg}")]
    Parse { file: String, msg: String },
}

fn read(dir: &Path, file: &str) -> Result<String, EvalError> {
    fs::read_to_string(dir.join(file)).map_err(|source| EvalError::Io { file: file.into(), source })
}

fn read_opt(dir: &Path, file: &str) -> Result<Option<String>, EvalError> {
    if dir.join(file).exists() {
        read(dir, file).map(Some)
    } else {
        Ok(None)
    }
}

fn parse_err(file: &str) -> impl Fn(&dyn std::fmt::Display) -> EvalError + '_ {
    move |e| EvalError::Parse { file: file.into(), msg: e.to_string() }
}

/// Recompute run metrics from a run directory against a ground-truth track.
pub fn evaluate_run_dir(dir: &Path, gt: &Track) -> Result<RunMetrics, EvalError> {
    let trajectory = trajectory_from_csv(&read(dir, "trajectory.csv")?).map_err(|e| parse_err("trajectory.csv")(&e))?;
    let nav = nav_from_csv(&read(dir, "nav.csv")?).map_err(|e| parse_err("nav.csv")(&e))?;
    let cones = ConeMapFile::from_json(&read(dir, "cones.json")?).map_err(|e| parse_err("cones.json")(&e))?.cones;
    let events = mission_log_from_jsonl(&read(dir, "mission.jsonl")?).map_err(|e| parse_err("mission.jsonl")(&e))?;
    let path = |f: &str| -> Result<Option<PathPlan>, EvalError> {
        read_opt(dir, f)?.map(|t| PathPlan::from_csv(&t).map_err(|e| parse_err(f)(&e))).transpose()
    };
    let planned = path("planned_path.csv")?;
    let fin = path("path.csv")?;
    let reference = read_opt(dir, "reference.csv")?
        .map(|t| reference_from_csv(&t).map_err(|e| parse_err("reference.csv")(&e)))
        .transpose()?
        .unwrap_or_default();
    Ok(compute_metrics(&MetricInputs {
        track: gt,
        trajectory: &trajectory,
        nav: &nav,
        cones: &cones,
        planned_path: planned.as_ref(),
        final_path: fin.as_ref(),
        reference: &reference,
        events: &events,
    }))
}
