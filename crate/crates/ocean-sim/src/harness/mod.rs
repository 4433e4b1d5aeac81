//! Experiment harness: single runs, one- or two-parameter multi-seed
//! sweeps, and stable CSV/summary emission.
//!
//! CSV contract: one header, one `run` row per (point, seed), then one
//! `mean` row per point aggregating the successful runs. Field order is
//! fixed; re-running the same spec reproduces the file byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::engine::Simulation;
use crate::metrics::RunMetrics;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("sweep spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl HarnessError {
    /// Process exit code: validation problems are 1, runtime failures 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Spec(_) => 1,
            HarnessError::Io(_) => 2,
        }
    }
}

/// Validate and execute one scenario.
pub fn run_scenario(cfg: &ScenarioConfig, trace: Option<&Path>) -> Result<RunMetrics, HarnessError> {
    cfg.validate()?;
    match trace {
        Some(path) => Ok(Simulation::run_traced(cfg.clone(), path)?),
        None => Ok(Simulation::run(cfg.clone())),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_runs")]
    pub runs_per_point: usize,
    #[serde(default = "default_seed_base")]
    pub seed_base: u64,
    pub param1_key: String,
    pub param1_values: Vec<toml::Value>,
    #[serde(default)]
    pub param2_key: Option<String>,
    #[serde(default)]
    pub param2_values: Option<Vec<toml::Value>>,
    #[serde(default)]
    pub base: ScenarioConfig,
}

fn default_runs() -> usize {
    20
}

fn default_seed_base() -> u64 {
    1
}

impl SweepSpec {
    pub fn from_toml_str(s: &str) -> Result<SweepSpec, HarnessError> {
        let spec: SweepSpec =
            toml::from_str(s).map_err(|e| HarnessError::Spec(e.message().to_string()))?;
        spec.expand()?;
        Ok(spec)
    }

    /// All (param1, param2, config) combinations, every one validated up
    /// front so a bad spec fails before any simulation starts.
    pub fn expand(&self) -> Result<Vec<SweepPoint>, HarnessError> {
        if self.runs_per_point == 0 {
            return Err(HarnessError::Spec("runs_per_point must be >= 1".into()));
        }
        if self.param1_values.is_empty() {
            return Err(HarnessError::Spec("param1_values must not be empty".into()));
        }
        if self.param2_key.is_some() != self.param2_values.is_some() {
            return Err(HarnessError::Spec(
                "param2_key and param2_values go together".into(),
            ));
        }
        if let Some(k2) = &self.param2_key {
            if *k2 == self.param1_key {
                return Err(HarnessError::Spec("swept parameters must differ".into()));
            }
            if self.param2_values.as_ref().unwrap().is_empty() {
                return Err(HarnessError::Spec("param2_values must not be empty".into()));
            }
        }
        let second: Vec<Option<toml::Value>> = match &self.param2_values {
            Some(vs) => vs.iter().cloned().map(Some).collect(),
            None => vec![None],
        };
        let mut points = Vec::new();
        for v1 in &self.param1_values {
            for v2 in &second {
                let mut cfg = self.base.with_field(&self.param1_key, v1.clone())?;
                if let Some(v2) = v2 {
                    cfg = cfg.with_field(self.param2_key.as_ref().unwrap(), v2.clone())?;
                }
                points.push(SweepPoint {
                    param1_value: v1.clone(),
                    param2_value: v2.clone(),
                    cfg,
                });
            }
        }
        Ok(points)
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub param1_value: toml::Value,
    pub param2_value: Option<toml::Value>,
    pub cfg: ScenarioConfig,
}

#[derive(Debug)]
pub struct PointResult {
    pub param1_value: toml::Value,
    pub param2_value: Option<toml::Value>,
    /// One entry per seed, in seed order. A failed run carries the panic
    /// message; the sweep continues past it.
    pub runs: Vec<(u64, Result<RunMetrics, String>)>,
}

impl PointResult {
    pub fn ok_metrics(&self) -> Vec<&RunMetrics> {
        self.runs.iter().filter_map(|(_, r)| r.as_ref().ok()).collect()
    }

    pub fn mean_of(&self, f: impl Fn(&RunMetrics) -> f64) -> f64 {
        let ok = self.ok_metrics();
        if ok.is_empty() {
            return f64::NAN;
        }
        ok.iter().map(|m| f(m)).sum::<f64>() / ok.len() as f64
    }

    /// Population standard deviation over the successful runs.
    pub fn std_of(&self, f: impl Fn(&RunMetrics) -> f64) -> f64 {
        let ok = self.ok_metrics();
        if ok.is_empty() {
            return f64::NAN;
        }
        let mean = self.mean_of(&f);
        let var = ok.iter().map(|m| (f(m) - mean).powi(2)).sum::<f64>() / ok.len() as f64;
        var.sqrt()
    }

    pub fn mean_coop_ratio(&self) -> f64 {
        self.mean_of(|m| m.cooperating.ratio())
    }
}

#[derive(Debug)]
pub struct SweepResult {
    pub param1_key: String,
    pub param2_key: Option<String>,
    pub runs_per_point: usize,
    pub seed_base: u64,
    pub points: Vec<PointResult>,
}

/// Run every point sequentially, seeds seed_base..seed_base+runs_per_point.
/// `trace_dir` enables one packet trace file per run.
pub fn run_sweep(spec: &SweepSpec, trace_dir: Option<&Path>) -> Result<SweepResult, HarnessError> {
    let points = spec.expand()?;
    let mut results = Vec::with_capacity(points.len());
    for (pi, point) in points.into_iter().enumerate() {
        let mut runs = Vec::with_capacity(spec.runs_per_point);
        for r in 0..spec.runs_per_point {
            let seed = spec.seed_base + r as u64;
            let mut cfg = point.cfg.clone();
            cfg.seed = seed;
            let outcome = match trace_dir {
                Some(dir) => {
                    let path = dir.join(format!("trace-p{pi}-s{seed}.jsonl"));
                    run_caught(move || Simulation::run_traced(cfg, &path).map_err(|e| e.to_string()))
                }
                None => run_caught(move || Ok(Simulation::run(cfg))),
            };
            runs.push((seed, outcome));
        }
        results.push(PointResult {
            param1_value: point.param1_value,
            param2_value: point.param2_value,
            runs,
        });
    }
    Ok(SweepResult {
        param1_key: spec.param1_key.clone(),
        param2_key: spec.param2_key.clone(),
        runs_per_point: spec.runs_per_point,
        seed_base: spec.seed_base,
        points: results,
    })
}

/// A panicking simulation becomes a per-row error instead of killing the
/// sweep.
fn run_caught(
    f: impl FnOnce() -> Result<RunMetrics, String> + std::panic::UnwindSafe,
) -> Result<RunMetrics, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        }
    }
}

/// Bare rendering for param values: strings lose their quotes so modes read
/// as `ocean`, not `"ocean"`.
fn value_str(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => format!("{f}"),
        toml::Value::Boolean(b) => b.to_string(),
        other => other.to_string(),
    }
}

pub const CSV_HEADER: &str = "kind,param1_key,param1_value,param2_key,param2_value,seed,\
cooperating_originated,cooperating_delivered,cooperating_ratio,\
misleading_originated,misleading_delivered,misleading_ratio,\
selfish_originated,selfish_delivered,selfish_ratio,\
dropped_misbehavior,dropped_economy,dropped_no_route,dropped_link_loss,\
in_flight_at_end,alarms,routes_accepted,reject_malicious,\
connections_started,pair_search_failures,coop_ratio_std,coop_ratio_cv,error";

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        let p2_key = self.param2_key.as_deref().unwrap_or("");
        for point in &self.points {
            let p1 = value_str(&point.param1_value);
            let p2 = point.param2_value.as_ref().map(value_str).unwrap_or_default();
            for (seed, outcome) in &point.runs {
                match outcome {
                    Ok(m) => {
                        let _ = writeln!(
                            out,
                            "run,{},{},{},{},{},{},{},{:.6},{},{},{:.6},{},{},{:.6},{},{},{},{},{},{},{},{},{},{},,,",
                            self.param1_key,
                            p1,
                            p2_key,
                            p2,
                            seed,
                            m.cooperating.originated,
                            m.cooperating.delivered,
                            m.cooperating.ratio(),
                            m.misleading.originated,
                            m.misleading.delivered,
                            m.misleading.ratio(),
                            m.selfish.originated,
                            m.selfish.delivered,
                            m.selfish.ratio(),
                            m.dropped_misbehavior,
                            m.dropped_economy,
                            m.dropped_no_route,
                            m.dropped_link_loss,
                            m.in_flight_at_end,
                            m.alarm_count,
                            m.routes_accepted,
                            m.reject_malicious_total(),
                            m.connections_started,
                            m.pair_search_failures,
                        );
                    }
                    Err(e) => {
                        let _ = writeln!(
                            out,
                            "run,{},{},{},{},{},,,,,,,,,,,,,,,,,,,,,,{}",
                            self.param1_key,
                            p1,
                            p2_key,
                            p2,
                            seed,
                            e.replace([',', '\n'], ";"),
                        );
                    }
                }
            }
            if point.ok_metrics().is_empty() {
                let _ = writeln!(
                    out,
                    "mean,{},{},{},{},,,,,,,,,,,,,,,,,,,,,,,all runs failed",
                    self.param1_key, p1, p2_key, p2,
                );
                continue;
            }
            let coop_mean = point.mean_coop_ratio();
            let coop_std = point.std_of(|m| m.cooperating.ratio());
            let cv = if coop_mean > 0.0 {
                format!("{:.6}", coop_std / coop_mean)
            } else {
                String::new()
            };
            let _ = writeln!(
                out,
                "mean,{},{},{},{},,{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},",
                self.param1_key,
                p1,
                p2_key,
                p2,
                point.mean_of(|m| m.cooperating.originated as f64),
                point.mean_of(|m| m.cooperating.delivered as f64),
                coop_mean,
                point.mean_of(|m| m.misleading.originated as f64),
                point.mean_of(|m| m.misleading.delivered as f64),
                point.mean_of(|m| m.misleading.ratio()),
                point.mean_of(|m| m.selfish.originated as f64),
                point.mean_of(|m| m.selfish.delivered as f64),
                point.mean_of(|m| m.selfish.ratio()),
                point.mean_of(|m| m.dropped_misbehavior as f64),
                point.mean_of(|m| m.dropped_economy as f64),
                point.mean_of(|m| m.dropped_no_route as f64),
                point.mean_of(|m| m.dropped_link_loss as f64),
                point.mean_of(|m| m.in_flight_at_end as f64),
                point.mean_of(|m| m.alarm_count as f64),
                point.mean_of(|m| m.routes_accepted as f64),
                point.mean_of(|m| m.reject_malicious_total() as f64),
                point.mean_of(|m| m.connections_started as f64),
                point.mean_of(|m| m.pair_search_failures as f64),
                format_args!("{coop_std:.6}"),
                cv,
            );
        }
        out
    }

    pub fn to_summary(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "sweep over {}", self.param1_key);
        if let Some(k2) = &self.param2_key {
            let _ = write!(out, " x {k2}");
        }
        let _ = writeln!(
            out,
            ", {} runs per point, seeds {}..{}",
            self.runs_per_point,
            self.seed_base,
            self.seed_base + self.runs_per_point as u64 - 1
        );
        for point in &self.points {
            let _ = write!(out, "{}={}", self.param1_key, value_str(&point.param1_value));
            if let (Some(k2), Some(v2)) = (&self.param2_key, &point.param2_value) {
                let _ = write!(out, " {k2}={}", value_str(v2));
            }
            let failures = self.runs_per_point - point.ok_metrics().len();
            if point.ok_metrics().is_empty() {
                let _ = writeln!(out, ": all {} runs failed", self.runs_per_point);
                continue;
            }
            let coop = point.mean_coop_ratio();
            let std = point.std_of(|m| m.cooperating.ratio());
            let _ = write!(
                out,
                ": coop {:.3} +/- {:.3}, misleading {:.3}, selfish {:.3}",
                coop,
                std,
                point.mean_of(|m| m.misleading.ratio()),
                point.mean_of(|m| m.selfish.ratio()),
            );
            if failures > 0 {
                let _ = write!(out, ", {failures} failed");
            }
            out.push('\n');
        }
        out
    }
}

/// Human-readable report for a single run.
pub fn run_summary(cfg: &ScenarioConfig, m: &RunMetrics) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "mode {} seed {} nodes {} duration {}s",
        cfg.mode, cfg.seed, cfg.num_nodes, cfg.sim_duration_s
    );
    let _ = writeln!(
        out,
        "cooperating {}/{} ({:.3})",
        m.cooperating.delivered,
        m.cooperating.originated,
        m.cooperating.ratio()
    );
    let _ = writeln!(
        out,
        "misleading {}/{} ({:.3})",
        m.misleading.delivered,
        m.misleading.originated,
        m.misleading.ratio()
    );
    let _ = writeln!(
        out,
        "selfish {}/{} ({:.3})",
        m.selfish.delivered,
        m.selfish.originated,
        m.selfish.ratio()
    );
    let _ = writeln!(
        out,
        "drops: misbehavior {} economy {} no_route {} link_loss {} (in flight {})",
        m.dropped_misbehavior,
        m.dropped_economy,
        m.dropped_no_route,
        m.dropped_link_loss,
        m.in_flight_at_end
    );
    let _ = writeln!(
        out,
        "routes accepted {} alarms {} connections {} pair failures {}",
        m.routes_accepted, m.alarm_count, m.connections_started, m.pair_search_failures
    );
    out
}

pub fn write_sweep_artifacts(out_dir: &Path, result: &SweepResult) -> Result<(), HarnessError> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("data.csv"), result.to_csv())?;
    fs::write(out_dir.join("summary.txt"), result.to_summary())?;
    Ok(())
}
