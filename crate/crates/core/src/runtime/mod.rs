//! Per-query execution loop: ingestion from the bus into windows, the
//! workload trigger, plan selection, execution and metrics.

mod assembler;
mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::adaptivity::{
    backward_update, forward_optimize, should_adapt, throughput, AdaptError, DecisionState, MetricsRecord,
    PlanTiming, Strategy,
};
use crate::bus::{BusError, Consumer, StreamBus};
use crate::executor::{execute_plan, union_window, ExecError, ExecOptions, ScanCache, WindowInstance};
use crate::generator::{GeneratedBatch, GeneratorParams, MixSchedule, StreamGenerator};
use crate::optimizer::{LogicalPlan, OptimizerError, QueryPlanner};
use crate::par::{self, Parallelism};
use crate::query::{ContinuousQuerySpec, QueryError, QueryRegistry};
use crate::rdf::TimedTriple;

pub use assembler::{ClockError, Tick, WindowAssembler};
pub use config::{ConfigError, CostModel, EngineConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid run setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
}

impl RunError {
    /// Whether the failure happened before any window ran.
    pub fn is_setup(&self) -> bool {
        matches!(self, RunError::Config(_) | RunError::Setup(_) | RunError::Query(_) | RunError::Optimizer(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Never adapt: the heuristic plan for every window.
    Static,
    /// Adapt every window.
    Adaptive,
    /// Adapt when the workload trigger fires.
    Auto,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "static" => Ok(Mode::Static),
            "adaptive" => Ok(Mode::Adaptive),
            "auto" => Ok(Mode::Auto),
            _ => Err(format!("unknown mode {s:?} (static, adaptive, auto)")),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Source {
    /// Timed triples in file order.
    Replay(Vec<TimedTriple>),
    Generate(MixSchedule),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub windows: u64,
    pub mode: Mode,
    pub keep_results: bool,
}

#[derive(Debug, Clone)]
pub struct WindowResult {
    pub window: u64,
    /// Tab-separated rows.
    pub rows: String,
}

#[derive(Debug, Clone)]
pub struct QueryReport {
    pub id: String,
    pub records: Vec<MetricsRecord>,
    pub static_plan: String,
    /// Rendered plan each time the executed plan changed, by window.
    pub plan_changes: Vec<(u64, String)>,
    pub results: Vec<WindowResult>,
    pub max_retained_batches: usize,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub queries: Vec<QueryReport>,
    pub seed: u64,
    pub config_echo: String,
    pub wall_clock_ms: f64,
    pub emitted_triples: u64,
}

impl RunReport {
    pub fn late_dropped(&self, query: usize) -> u64 {
        self.queries[query].records.iter().map(|r| r.late_dropped).sum()
    }
}

enum Producer {
    Replay { triples: Vec<TimedTriple>, release: Vec<u64>, next: usize },
    Generate { gen: Box<StreamGenerator>, ahead: Option<GeneratedBatch> },
}

impl Producer {
    /// Publishes everything due before `now`; returns triples emitted.
    fn publish_until(&mut self, bus: &StreamBus, now: u64) -> Result<u64, BusError> {
        let mut emitted = 0;
        match self {
            Producer::Replay { triples, release, next } => {
                while *next < triples.len() && release[*next] < now {
                    let t = triples[*next].clone();
                    let topic = t.topic_arc().clone();
                    bus.publish_at(&topic, vec![t], now)?;
                    *next += 1;
                    emitted += 1;
                }
            }
            Producer::Generate { gen, ahead } => loop {
                if ahead.is_none() {
                    *ahead = gen.next();
                }
                match ahead {
                    Some(b) if b.end_ms <= now => {
                        let b = ahead.take().unwrap();
                        let mut by_topic: BTreeMap<Arc<str>, Vec<TimedTriple>> = BTreeMap::new();
                        for e in b.events {
                            by_topic.entry(e.topic).or_default().extend(e.triples);
                        }
                        for (topic, payload) in by_topic {
                            emitted += payload.len() as u64;
                            bus.publish_at(&topic, payload, now)?;
                        }
                    }
                    _ => break,
                }
            },
        }
        Ok(emitted)
    }
}

struct QueryRunner {
    spec: Arc<ContinuousQuerySpec>,
    planner: QueryPlanner,
    decision: DecisionState,
    assembler: WindowAssembler,
    consumers: Vec<Consumer>,
    records: Vec<MetricsRecord>,
    plan_changes: Vec<(u64, String)>,
    results: Vec<WindowResult>,
    last_finish_ms: f64,
    late_reported: u64,
    target: u64,
}

struct Ctx<'a> {
    config: &'a EngineConfig,
    mode: Mode,
    keep_results: bool,
    parallelism: Parallelism,
    wall_start: Option<Instant>,
}

impl QueryRunner {
    fn done(&self) -> bool {
        self.records.len() as u64 >= self.target
    }

    fn step(&mut self, bus: &StreamBus, now: u64, ctx: &Ctx) -> Result<(), RunError> {
        for c in &mut self.consumers {
            for m in c.poll_all(bus)? {
                for t in m.payload.iter() {
                    self.assembler.ingest(t.clone());
                }
            }
        }
        let tick = self.assembler.simulated_clock_tick(now)?;
        for w in tick.windows {
            if !self.done() {
                self.execute(&w, ctx)?;
            }
        }
        Ok(())
    }

    fn execute(&mut self, w: &WindowInstance, ctx: &Ctx) -> Result<(), RunError> {
        let cfg = ctx.config;
        let started = Instant::now();
        let data = union_window(w);
        let input = data.len() as u64;
        let adapted = match ctx.mode {
            Mode::Static => false,
            Mode::Adaptive => true,
            Mode::Auto => should_adapt(&cfg.trigger, input, cfg.trigger.estimated_bytes(input)),
        };
        let opts = ExecOptions { counting: false, parallelism: ctx.parallelism, cancel: None };
        let mut cache = ScanCache::new();

        let (strategy, plan, outcome, stats) = if !adapted {
            self.decision.clear_pending();
            let plan = self.planner.static_plan().clone();
            let outcome = execute_plan(&plan, &data, &mut cache, &opts)?;
            (Strategy::Static, plan, outcome, None)
        } else if let Some(plan) = self.decision.take_pending(w.index) {
            let outcome = execute_plan(&plan, &data, &mut cache, &opts)?;
            let stats = self.planner.stats_from_cache(w.index, &cache);
            (Strategy::Backward, plan, outcome, Some(stats))
        } else {
            let run = forward_optimize(&self.planner, w.index, &data, &mut cache, &opts)?;
            (Strategy::Forward, run.plan, run.outcome, Some(run.stats))
        };
        let compute_ms = started.elapsed().as_secs_f64() * 1e3;

        let s = &outcome.stats;
        let exec_ms = if cfg.simulated_clock {
            cfg.cost.exec_ms(s.scanned_tuples, s.produced_tuples, s.counted_nodes, strategy == Strategy::Forward)
        } else {
            compute_ms
        };
        let slide = self.spec.slide_ms as f64;
        self.decision.record_execution(exec_ms);
        if let Some(stats) = stats {
            if self.decision.strategy == Some(Strategy::Backward) {
                let timing = if cfg.simulated_clock { PlanTiming::Simulated(cfg.cost.plan_ms) } else { PlanTiming::Measured };
                // a failed backward update leaves no pending plan, so the
                // next adaptive window runs forward
                let _ = backward_update(&mut self.decision, &self.planner, &stats, w.index + 1, timing);
            } else {
                self.decision.clear_pending();
            }
        }

        let close = w.end_ms as f64;
        let latency_ms = match ctx.wall_start {
            Some(t0) => t0.elapsed().as_secs_f64() * 1e3 - close,
            None => {
                let start = close.max(self.last_finish_ms);
                let finish = start + exec_ms;
                self.last_finish_ms = finish;
                finish - close
            }
        };

        if self.decision.current_plan.as_ref().is_none_or(|p: &LogicalPlan| p.id() != plan.id()) {
            self.plan_changes.push((w.index, plan.explain()));
        }
        if ctx.keep_results {
            self.results.push(WindowResult { window: w.index, rows: outcome.result.format_rows() });
        }
        let late = self.assembler.late_dropped() - self.late_reported;
        self.late_reported = self.assembler.late_dropped();
        self.records.push(MetricsRecord {
            window: w.index,
            input_triples: input,
            exec_ms,
            idle_ms: slide - exec_ms,
            gamma: exec_ms / slide,
            strategy,
            plan_id: plan.id_hex(),
            throughput_tps: throughput(input, exec_ms),
            latency_ms,
            adapted,
            late_dropped: late,
            result_rows: outcome.result.len() as u64,
            intermediate_tuples: s.intermediate_tuples,
            compute_ms,
            retained_batches: self.assembler.retained_batches(),
        });
        self.decision.current_plan = Some(plan);
        Ok(())
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Runs every query for `opts.windows` windows over one source.
pub fn run(
    config: &EngineConfig,
    specs: Vec<ContinuousQuerySpec>,
    source: Source,
    opts: &RunOptions,
) -> Result<RunReport, RunError> {
    config.validate().map_err(RunError::Setup)?;
    if specs.is_empty() {
        return Err(RunError::Setup("no queries given".into()));
    }
    let registry = QueryRegistry::new();
    for s in specs {
        registry.register(s)?;
    }
    let handles = registry.snapshot();
    let grid = handles[0].spec().clone();

    let source_topics: BTreeSet<String> = match &source {
        Source::Replay(ts) => ts.iter().map(|t| t.topic().to_string()).collect(),
        Source::Generate(s) => s.observation_types().into_iter().collect(),
    };
    let topics: Vec<String> = if config.topics.is_empty() {
        source_topics.into_iter().collect()
    } else {
        if let Some(t) = source_topics.iter().find(|t| !config.topics.contains(t)) {
            return Err(RunError::Setup(format!("source topic {t:?} is not declared in the config")));
        }
        config.topics.clone()
    };
    let bus = StreamBus::new();
    for t in &topics {
        bus.create_topic(t, config.partitions)?;
    }

    let mut producer = match source {
        Source::Replay(triples) => {
            let mut max = 0;
            let release = triples
                .iter()
                .map(|t| {
                    max = max.max(t.event_time);
                    max
                })
                .collect();
            Producer::Replay { triples, release, next: 0 }
        }
        Source::Generate(schedule) => {
            let params = GeneratorParams {
                rate: config.rate,
                windows: opts.windows,
                window_ms: grid.window_ms,
                slide_ms: grid.slide_ms,
                batch_ms: grid.batch_ms,
                sensors: config.sensors,
                seed: config.seed,
            };
            Producer::Generate { gen: Box::new(StreamGenerator::new(schedule, params)), ahead: None }
        }
    };

    let mut runners = Vec::new();
    for h in handles.iter() {
        let spec = h.spec().clone();
        let planner = QueryPlanner::new(&spec.algebra, config.optimizer.clone())?;
        let decision = DecisionState::new(config.epsilon, spec.slide_ms as f64, config.idle_margin)?;
        runners.push(QueryRunner {
            assembler: WindowAssembler::new(spec.window_ms, spec.slide_ms, spec.batch_ms),
            consumers: topics.iter().map(Consumer::new).collect(),
            spec,
            planner,
            decision,
            records: Vec::new(),
            plan_changes: Vec::new(),
            results: Vec::new(),
            last_finish_ms: 0.0,
            late_reported: 0,
            target: opts.windows,
        });
    }

    let step = runners.iter().map(|r| r.spec.batch_ms).fold(0, gcd);
    let parallelism = Parallelism::for_workers(config.workers);
    let wall_start = Instant::now();
    let ctx = Ctx {
        config,
        mode: opts.mode,
        keep_results: opts.keep_results,
        parallelism,
        wall_start: (!config.simulated_clock).then_some(wall_start),
    };

    let mut emitted = 0;
    let mut now = 0;
    par::with_workers(config.workers, || -> Result<(), RunError> {
        while !runners.iter().all(QueryRunner::done) {
            now += step;
            if !config.simulated_clock {
                let due = wall_start + Duration::from_millis(now);
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    std::thread::sleep(wait);
                }
            }
            emitted += producer.publish_until(&bus, now)?;
            let mut outcomes: Vec<Result<(), RunError>> = Vec::new();
            {
                let mut slots: Vec<(&mut QueryRunner, Option<RunError>)> =
                    runners.iter_mut().map(|r| (r, None)).collect();
                par::for_each_mut(parallelism, &mut slots, |(r, err)| {
                    if let Err(e) = r.step(&bus, now, &ctx) {
                        *err = Some(e);
                    }
                });
                for (_, e) in slots {
                    outcomes.push(e.map_or(Ok(()), Err));
                }
            }
            outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
            release_consumed(&bus, &topics, &runners);
        }
        Ok(())
    })?;

    let queries = runners
        .into_iter()
        .map(|r| QueryReport {
            id: r.spec.id.clone(),
            static_plan: r.planner.static_plan().explain(),
            max_retained_batches: r.assembler.max_retained_batches(),
            records: r.records,
            plan_changes: r.plan_changes,
            results: r.results,
        })
        .collect();
    Ok(RunReport {
        queries,
        seed: config.seed,
        config_echo: config.to_text(),
        wall_clock_ms: wall_start.elapsed().as_secs_f64() * 1e3,
        emitted_triples: emitted,
    })
}

/// Drops bus messages every query has consumed.
fn release_consumed(bus: &StreamBus, topics: &[String], runners: &[QueryRunner]) {
    for (i, t) in topics.iter().enumerate() {
        let Ok(log) = bus.topic(t) else { continue };
        for p in 0..log.partition_count() {
            let min = runners.iter().map(|r| r.consumers[i].offsets().get(&p).copied().unwrap_or(0)).min();
            if let Some(off) = min {
                log.release_before(p, off);
            }
        }
    }
}
