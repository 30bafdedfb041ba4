use std::fmt::Write as _;

use thiserror::Error;

use crate::adaptivity::TriggerConfig;
use crate::optimizer::OptimizerConfig;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

/// Simulated execution cost, used for exec time under the simulated clock.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub base_ms: f64,
    pub ns_per_tuple: f64,
    /// Cost of one count action (per counted plan node) in forward mode.
    pub count_action_ms: f64,
    /// Planning time, charged to the window when it plans live.
    pub plan_ms: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { base_ms: 1.0, ns_per_tuple: 200.0, count_action_ms: 5.0, plan_ms: 3.0 }
    }
}

impl CostModel {
    pub fn exec_ms(&self, scanned: u64, produced: u64, counted_nodes: u64, planned_live: bool) -> f64 {
        let mut ms = self.base_ms + self.ns_per_tuple * (scanned + produced) as f64 / 1e6;
        ms += self.count_action_ms * counted_nodes as f64;
        if planned_live {
            ms += self.plan_ms;
        }
        ms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub workers: usize,
    pub partitions: usize,
    /// Declared topics; empty means "whatever the source produces".
    pub topics: Vec<String>,
    pub trigger: TriggerConfig,
    pub epsilon: f64,
    pub idle_margin: f64,
    pub simulated_clock: bool,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub cost: CostModel,
    /// Generator rate in triples per second of event time.
    pub rate: f64,
    pub sensors: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            partitions: 4,
            topics: Vec::new(),
            trigger: TriggerConfig::default(),
            epsilon: 0.7,
            idle_margin: 2.0,
            simulated_clock: false,
            seed: 42,
            optimizer: OptimizerConfig::default(),
            cost: CostModel::default(),
            rate: 1000.0,
            sensors: 20,
        }
    }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError { line, message: format!("{key}: cannot parse {v:?}") })
}

impl EngineConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = EngineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(ConfigError { line, message: format!("expected key = value, got {content:?}") });
            };
            let (k, v) = (k.trim(), v.trim());
            match k {
                "workers" => c.workers = num(line, k, v)?,
                "partitions" => c.partitions = num(line, k, v)?,
                "topics" => {
                    c.topics = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
                }
                "triple_count_threshold" => {
                    c.trigger.triple_count_threshold =
                        if v.eq_ignore_ascii_case("inf") { u64::MAX } else { num(line, k, v)? }
                }
                "memory_fraction_threshold" => c.trigger.memory_fraction_threshold = num(line, k, v)?,
                "heap_budget_bytes" => c.trigger.heap_budget_bytes = num(line, k, v)?,
                "mean_triple_bytes" => c.trigger.mean_triple_bytes = num(line, k, v)?,
                "epsilon" => c.epsilon = num(line, k, v)?,
                "idle_margin" => c.idle_margin = num(line, k, v)?,
                "simulated_clock" => c.simulated_clock = num(line, k, v)?,
                "seed" => c.seed = num(line, k, v)?,
                "static_star_factor" => c.optimizer.static_star_factor = num(line, k, v)?,
                "bounded_star_factor" => c.optimizer.bounded_star_factor = num(line, k, v)?,
                "base_ms" => c.cost.base_ms = num(line, k, v)?,
                "ns_per_tuple" => c.cost.ns_per_tuple = num(line, k, v)?,
                "count_action_ms" => c.cost.count_action_ms = num(line, k, v)?,
                "plan_ms" => c.cost.plan_ms = num(line, k, v)?,
                "rate" => c.rate = num(line, k, v)?,
                "sensors" => c.sensors = num(line, k, v)?,
                _ => return Err(ConfigError { line, message: format!("unknown key {k:?}") }),
            }
        }
        c.validate().map_err(|message| ConfigError { line: 0, message })?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.workers == 0 {
            return Err("workers must be at least 1".into());
        }
        if self.partitions == 0 {
            return Err("partitions must be at least 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(format!("epsilon {} outside (0, 1)", self.epsilon));
        }
        if self.idle_margin < 0.0 {
            return Err("idle_margin must be non-negative".into());
        }
        if self.rate.is_nan() || self.rate <= 0.0 {
            return Err("rate must be positive".into());
        }
        if self.sensors == 0 {
            return Err("sensors must be at least 1".into());
        }
        self.trigger.validate().map_err(|e| e.to_string())
    }

    /// Canonical `key = value` rendering; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let t = &self.trigger;
        let threshold =
            if t.triple_count_threshold == u64::MAX { "inf".to_string() } else { t.triple_count_threshold.to_string() };
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "partitions = {}", self.partitions);
        let _ = writeln!(s, "topics = {}", self.topics.join(","));
        let _ = writeln!(s, "triple_count_threshold = {threshold}");
        let _ = writeln!(s, "memory_fraction_threshold = {}", t.memory_fraction_threshold);
        let _ = writeln!(s, "heap_budget_bytes = {}", t.heap_budget_bytes);
        let _ = writeln!(s, "mean_triple_bytes = {}", t.mean_triple_bytes);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "idle_margin = {}", self.idle_margin);
        let _ = writeln!(s, "simulated_clock = {}", self.simulated_clock);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "static_star_factor = {}", self.optimizer.static_star_factor);
        let _ = writeln!(s, "bounded_star_factor = {}", self.optimizer.bounded_star_factor);
        let _ = writeln!(s, "base_ms = {}", self.cost.base_ms);
        let _ = writeln!(s, "ns_per_tuple = {}", self.cost.ns_per_tuple);
        let _ = writeln!(s, "count_action_ms = {}", self.cost.count_action_ms);
        let _ = writeln!(s, "plan_ms = {}", self.cost.plan_ms);
        let _ = writeln!(s, "rate = {}", self.rate);
        let _ = writeln!(s, "sensors = {}", self.sensors);
        s
    }
}
