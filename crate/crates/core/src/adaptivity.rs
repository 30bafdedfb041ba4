//! Workload trigger, the backward/forward plan switch, and per-window
//! metrics.

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::executor::{execute_plan, ExecError, ExecOptions, ExecOutcome, ScanCache};
use crate::optimizer::{plan_for, LogicalPlan, OptimizerError, QueryPlanner, StatsSnapshot, Ucg};
use crate::rdf::Triple;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdaptError {
    #[error("backward planning needs {needed_ms:.3} ms but only {idle_ms:.3} ms are idle")]
    IdleBudgetExceeded { idle_ms: f64, needed_ms: f64 },
    #[error("invalid adaptivity setting: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Static,
    Backward,
    Forward,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Static => "Static",
            Strategy::Backward => "Backward",
            Strategy::Forward => "Forward",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriggerConfig {
    /// `u64::MAX` disables the count trigger.
    pub triple_count_threshold: u64,
    pub memory_fraction_threshold: f64,
    pub heap_budget_bytes: u64,
    pub mean_triple_bytes: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        TriggerConfig {
            triple_count_threshold: 10_000,
            memory_fraction_threshold: 0.5,
            heap_budget_bytes: 1 << 30,
            mean_triple_bytes: 120.0,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<(), AdaptError> {
        if self.triple_count_threshold == 0 {
            return Err(AdaptError::InvalidConfig("triple_count_threshold must be positive".into()));
        }
        if !(self.memory_fraction_threshold > 0.0 && self.memory_fraction_threshold <= 1.0) {
            return Err(AdaptError::InvalidConfig("memory_fraction_threshold must be in (0, 1]".into()));
        }
        if self.heap_budget_bytes == 0 || self.mean_triple_bytes.is_nan() || self.mean_triple_bytes <= 0.0 {
            return Err(AdaptError::InvalidConfig("heap budget and mean triple size must be positive".into()));
        }
        Ok(())
    }

    pub fn estimated_bytes(&self, triples: u64) -> f64 {
        triples as f64 * self.mean_triple_bytes
    }
}

pub fn should_adapt(cfg: &TriggerConfig, input_triples: u64, estimated_bytes: f64) -> bool {
    input_triples >= cfg.triple_count_threshold
        || estimated_bytes / cfg.heap_budget_bytes as f64 >= cfg.memory_fraction_threshold
}

/// Backward when the window used less than `epsilon` of the slide.
pub fn decide(gamma: f64, epsilon: f64) -> Strategy {
    if gamma < epsilon {
        Strategy::Backward
    } else {
        Strategy::Forward
    }
}

#[derive(Debug, Clone)]
struct PendingPlan {
    target_window: u64,
    plan: LogicalPlan,
}

/// Switch state of one query.
#[derive(Debug, Clone)]
pub struct DecisionState {
    pub epsilon: f64,
    pub slide_ms: f64,
    pub idle_margin: f64,
    pub last_exec_ms: f64,
    pub last_idle_ms: f64,
    pub gamma: f64,
    /// Decision taken after the last window.
    pub strategy: Option<Strategy>,
    pub current_plan: Option<LogicalPlan>,
    pending: Option<PendingPlan>,
    planning_avg_ms: Option<f64>,
}

const PLANNING_AVG_WEIGHT: f64 = 0.3;

impl DecisionState {
    pub fn new(epsilon: f64, slide_ms: f64, idle_margin: f64) -> Result<Self, AdaptError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(AdaptError::InvalidConfig(format!("epsilon {epsilon} outside (0, 1)")));
        }
        if slide_ms.is_nan() || slide_ms <= 0.0 || idle_margin < 0.0 {
            return Err(AdaptError::InvalidConfig("slide must be positive and idle margin non-negative".into()));
        }
        Ok(DecisionState {
            epsilon,
            slide_ms,
            idle_margin,
            last_exec_ms: 0.0,
            last_idle_ms: slide_ms,
            gamma: 0.0,
            strategy: None,
            current_plan: None,
            pending: None,
            planning_avg_ms: None,
        })
    }

    /// Records window execution time and returns the next strategy.
    pub fn record_execution(&mut self, exec_ms: f64) -> Strategy {
        self.last_exec_ms = exec_ms;
        self.last_idle_ms = self.slide_ms - exec_ms;
        self.gamma = exec_ms / self.slide_ms;
        let s = decide(self.gamma, self.epsilon);
        self.strategy = Some(s);
        s
    }

    /// The backward plan built for exactly `window`, consumed on use.
    /// Plans targeting other windows are discarded.
    pub fn take_pending(&mut self, window: u64) -> Option<LogicalPlan> {
        match self.pending.take() {
            Some(p) if p.target_window == window => Some(p.plan),
            _ => None,
        }
    }

    pub fn has_pending(&self) -> bool {
        self.pending.is_some()
    }

    pub fn pending_target(&self) -> Option<u64> {
        self.pending.as_ref().map(|p| p.target_window)
    }

    pub fn clear_pending(&mut self) {
        self.pending = None;
    }

    pub fn planning_avg_ms(&self) -> Option<f64> {
        self.planning_avg_ms
    }

    fn observe_planning(&mut self, ms: f64) {
        self.planning_avg_ms = Some(match self.planning_avg_ms {
            None => ms,
            Some(avg) => avg + PLANNING_AVG_WEIGHT * (ms - avg),
        });
    }
}

/// How long backward planning took: a fixed simulated cost, or the
/// measured wall time.
#[derive(Debug, Clone, Copy)]
pub enum PlanTiming {
    Simulated(f64),
    Measured,
}

/// Builds the plan for `next_window` from the statistics of the window
/// just executed, within its idle time. On failure nothing is published
/// and the caller must run the next window forward.
pub fn backward_update(
    state: &mut DecisionState,
    planner: &QueryPlanner,
    stats: &[StatsSnapshot],
    next_window: u64,
    timing: PlanTiming,
) -> Result<LogicalPlan, AdaptError> {
    state.pending = None;
    let idle = state.last_idle_ms;
    if let Some(avg) = state.planning_avg_ms {
        if idle < state.idle_margin * avg {
            return Err(AdaptError::IdleBudgetExceeded { idle_ms: idle, needed_ms: state.idle_margin * avg });
        }
    }
    let started = std::time::Instant::now();
    let (plan, _) = planner.plan_from_stats(stats)?;
    let took = match timing {
        PlanTiming::Simulated(ms) => ms,
        PlanTiming::Measured => started.elapsed().as_secs_f64() * 1e3,
    };
    state.observe_planning(took);
    if took > idle {
        return Err(AdaptError::IdleBudgetExceeded { idle_ms: idle, needed_ms: took });
    }
    state.pending = Some(PendingPlan { target_window: next_window, plan: plan.clone() });
    Ok(plan)
}

/// Output of a forward-planned window.
#[derive(Debug, Clone)]
pub struct ForwardRun {
    pub plan: LogicalPlan,
    pub ucgs: Vec<Ucg>,
    pub stats: Vec<StatsSnapshot>,
    pub outcome: ExecOutcome,
}

/// Weighs the UCGs on the live window, plans, and executes with per-node
/// counting, reusing the scans taken for the statistics.
pub fn forward_optimize(
    planner: &QueryPlanner,
    window: u64,
    data: &[&Triple],
    cache: &mut ScanCache,
    opts: &ExecOptions,
) -> Result<ForwardRun, AdaptError> {
    let (ucgs, stats) = planner.collect_stats(window, data, cache, opts.parallelism);
    let plan = plan_for(&ucgs, planner.projection())?;
    let counting = ExecOptions { counting: true, ..opts.clone() };
    let outcome = execute_plan(&plan, data, cache, &counting)?;
    Ok(ForwardRun { plan, ucgs, stats, outcome })
}

pub const METRICS_HEADER: &str =
    "window,input_triples,exec_ms,idle_ms,gamma,strategy,plan_id,throughput_tps,latency_ms,adapted,late_dropped";

/// One executed window of one query. Fields after `late_dropped` are
/// diagnostics kept out of the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub window: u64,
    pub input_triples: u64,
    pub exec_ms: f64,
    pub idle_ms: f64,
    pub gamma: f64,
    pub strategy: Strategy,
    pub plan_id: String,
    pub throughput_tps: f64,
    pub latency_ms: f64,
    pub adapted: bool,
    pub late_dropped: u64,
    pub result_rows: u64,
    pub intermediate_tuples: u64,
    /// Measured compute time, whatever the clock mode.
    pub compute_ms: f64,
    pub retained_batches: usize,
}

pub fn throughput(input_triples: u64, exec_ms: f64) -> f64 {
    if exec_ms > 0.0 {
        input_triples as f64 / (exec_ms / 1e3)
    } else {
        0.0
    }
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.3},{:.3},{:.6},{},{},{:.1},{:.3},{},{}",
            self.window,
            self.input_triples,
            self.exec_ms,
            self.idle_ms,
            self.gamma,
            self.strategy,
            self.plan_id,
            self.throughput_tps,
            self.latency_ms,
            self.adapted,
            self.late_dropped
        )
    }
}

pub fn write_metrics_csv<W: Write>(mut out: W, records: &[MetricsRecord]) -> io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}
