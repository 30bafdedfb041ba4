//! Join-order optimization over the undirected join graph (UCG) of each
//! BGP: heuristic and cardinality-based weights, a shortest-path guided
//! path cover, and balanced bushy plans folded from it.

mod cover;
mod plan;
mod ucg;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::executor::ScanCache;
use crate::par::Parallelism;
use crate::query::{QueryAlgebra, Variable};
use crate::rdf::Triple;

pub use cover::{floyd_warshall, path_cover, PathCover, ShortestPaths};
pub use plan::{branch_tree, build_plan, plan_from_sequences, LogicalPlan, PlanNode};
pub use ucg::{
    classify_stars, non_star_join_weight, star_join_weight, star_upper_bound, static_rank, Edge, EdgeKind,
    StarGroup, Ucg, Vertex,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OptimizerError {
    #[error("join graph is disconnected")]
    DisconnectedGraph,
}

/// Heuristic constants of the weighting rules.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Multiplier on static star edge weights.
    pub static_star_factor: f64,
    /// Discount on the in-star edge cap of bounded-object stars.
    pub bounded_star_factor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { static_star_factor: 0.5, bounded_star_factor: 0.1 }
    }
}

/// Exact statistics of one BGP over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsSnapshot {
    pub window: u64,
    pub cardinalities: Vec<u64>,
    pub max_degrees: Vec<BTreeMap<Variable, u64>>,
    pub star_bounds: Vec<f64>,
    pub edge_weights: Vec<f64>,
}

impl StatsSnapshot {
    fn from_ucg(window: u64, ucg: &Ucg, cardinalities: Vec<u64>, max_degrees: Vec<BTreeMap<Variable, u64>>) -> Self {
        StatsSnapshot {
            window,
            cardinalities,
            max_degrees,
            star_bounds: ucg.stars.iter().map(|g| g.upper_bound).collect(),
            edge_weights: ucg.edges.iter().map(|e| e.weight).collect(),
        }
    }
}

/// Weights `ucg` from exact scan counts over the window (scanning what the
/// cache lacks) and returns the statistics gathered.
pub fn init_weights_runtime(
    ucg: &mut Ucg,
    window: u64,
    data: &[&Triple],
    cache: &mut ScanCache,
    cfg: &OptimizerConfig,
    mode: Parallelism,
) -> StatsSnapshot {
    let patterns: Vec<_> = ucg.vertices.iter().map(|v| &v.pattern).collect();
    cache.ensure(data, &patterns, mode);
    let tables: Vec<_> = patterns.iter().map(|p| cache.get(p).expect("scanned").clone()).collect();
    let cards: Vec<u64> = tables.iter().map(|t| t.len() as u64).collect();
    let degrees: Vec<_> = tables.iter().map(|t| t.max_degrees()).collect();
    ucg.apply_cardinalities(&cards, &degrees, cfg);
    StatsSnapshot::from_ucg(window, ucg, cards, degrees)
}

/// Per-query planning state: one unweighted UCG per union branch plus the
/// heuristic plan computed once at registration.
#[derive(Debug, Clone)]
pub struct QueryPlanner {
    projection: Vec<Variable>,
    templates: Vec<Ucg>,
    config: OptimizerConfig,
    static_ucgs: Vec<Ucg>,
    static_plan: LogicalPlan,
}

impl QueryPlanner {
    pub fn new(algebra: &QueryAlgebra, config: OptimizerConfig) -> Result<Self, OptimizerError> {
        let templates: Vec<Ucg> = algebra.branches.iter().map(|b| Ucg::build(&b.patterns)).collect();
        let static_ucgs: Vec<Ucg> = templates
            .iter()
            .map(|t| {
                let mut u = t.clone();
                u.init_weights_static(&config);
                u
            })
            .collect();
        let static_plan = plan_for(&static_ucgs, &algebra.projection)?;
        Ok(QueryPlanner { projection: algebra.projection.clone(), templates, config, static_ucgs, static_plan })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn projection(&self) -> &[Variable] {
        &self.projection
    }

    pub fn static_plan(&self) -> &LogicalPlan {
        &self.static_plan
    }

    pub fn static_ucgs(&self) -> &[Ucg] {
        &self.static_ucgs
    }

    pub fn branch_count(&self) -> usize {
        self.templates.len()
    }

    /// UCGs weighted from previously collected statistics, without scans.
    pub fn weigh(&self, stats: &[StatsSnapshot]) -> Vec<Ucg> {
        self.templates
            .iter()
            .zip(stats)
            .map(|(t, s)| {
                let mut u = t.clone();
                u.apply_cardinalities(&s.cardinalities, &s.max_degrees, &self.config);
                u
            })
            .collect()
    }

    pub fn plan_from_stats(&self, stats: &[StatsSnapshot]) -> Result<(LogicalPlan, Vec<Ucg>), OptimizerError> {
        let ucgs = self.weigh(stats);
        Ok((plan_for(&ucgs, &self.projection)?, ucgs))
    }

    /// Runs the runtime weighting on the live window.
    pub fn collect_stats(
        &self,
        window: u64,
        data: &[&Triple],
        cache: &mut ScanCache,
        mode: Parallelism,
    ) -> (Vec<Ucg>, Vec<StatsSnapshot>) {
        let mut ucgs = self.templates.clone();
        let stats = ucgs
            .iter_mut()
            .map(|u| init_weights_runtime(u, window, data, cache, &self.config, mode))
            .collect();
        (ucgs, stats)
    }

    /// Statistics of a window read off cached leaf scans (every pattern
    /// must already be cached).
    pub fn stats_from_cache(&self, window: u64, cache: &ScanCache) -> Vec<StatsSnapshot> {
        self.templates
            .iter()
            .map(|t| {
                let tables: Vec<_> = t.vertices.iter().map(|v| cache.get(&v.pattern).expect("leaf cached")).collect();
                let cards = tables.iter().map(|x| x.len() as u64).collect::<Vec<_>>();
                let degrees = tables.iter().map(|x| x.max_degrees()).collect::<Vec<_>>();
                let mut u = t.clone();
                u.apply_cardinalities(&cards, &degrees, &self.config);
                StatsSnapshot::from_ucg(window, &u, cards, degrees)
            })
            .collect()
    }
}

/// Path cover per branch, folded into one plan.
pub fn plan_for(ucgs: &[Ucg], projection: &[Variable]) -> Result<LogicalPlan, OptimizerError> {
    let covers = ucgs
        .iter()
        .map(|u| path_cover(u.len(), &u.weight_list(), u.ranks()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(build_plan(ucgs, &covers, projection))
}

pub fn find_path_cover(ucg: &Ucg) -> Result<PathCover, OptimizerError> {
    path_cover(ucg.len(), &ucg.weight_list(), ucg.ranks())
}
