//! Raw test-group generation over a pruned taxonomy graph.
//!
//! For a class `v` with instance set `I(v)`:
//!
//! * `O1(v)`: instances (transitively, through subclasses) of the siblings of
//!   `v`, that is the other children of each parent of `v`.
//! * `O2(v)`: the same over the children of each grandparent of `v`, minus
//!   `O1(v)`.
//! * `O3(v)`: instances of classes at undirected subclass distance `>= mu`
//!   from some parent of `v`, minus `O1(v)` and `O2(v)`.
//!
//! All three exclude `I(v)`. Clusters are the most-linked labeled instances
//! of `v`; O1/O2 outliers are chosen deterministically by sitelinks, O3
//! outliers by seeded rejection sampling.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::formats::Tier;
use crate::graph::{EntityId, GraphError, KnowledgeGraph, NodeIx};

/// Which grandparents feed `O2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum O2Strictness {
    /// Every `p` in `P(P(v))`.
    #[default]
    Literal,
    /// Skip grandparents that are also direct parents of `v`.
    ExcludeParents,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Minimum subclass distance for O3 classes.
    pub mu: u32,
    pub cluster_size: usize,
    pub min_cluster_size: usize,
    pub per_tier_outliers: usize,
    pub min_outlier_sitelinks: u64,
    /// Minimum number of labeled direct instances for a candidate class.
    pub min_instances: usize,
    pub rng_seed: u64,
    pub language: String,
    /// O3 sampling attempts per group.
    pub o3_trials: usize,
    pub o2_strictness: O2Strictness,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            mu: 7,
            cluster_size: 8,
            min_cluster_size: 7,
            per_tier_outliers: 2,
            min_outlier_sitelinks: 10,
            min_instances: 2,
            rng_seed: 0,
            language: "en".into(),
            o3_trials: 10_000,
            o2_strictness: O2Strictness::Literal,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |m: &str| Err(GeneratorError::InvalidConfig(m.to_owned()));
        if self.mu < 2 {
            return bad("mu must be at least 2");
        }
        if self.min_cluster_size < 3 {
            return bad("min_cluster_size must be at least 3");
        }
        if self.cluster_size < self.min_cluster_size {
            return bad("cluster_size must be at least min_cluster_size");
        }
        if self.per_tier_outliers < 1 {
            return bad("per_tier_outliers must be at least 1");
        }
        if self.language.is_empty() {
            return bad("language must be set");
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeneratorError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reject {
    TooFewInstances,
    NoOutliers,
}

/// A cluster with tiered outliers, still as entity ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawGroup {
    pub class_id: EntityId,
    pub cluster_ids: Vec<EntityId>,
    pub outlier_ids: Vec<(Tier, EntityId)>,
}

/// Per-class RNG stream, a function of the seed and the class id only.
pub fn class_rng(seed: u64, class_id: &EntityId) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(class_id.as_str().as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Generation context over one graph. Holds the list of class nodes that O3
/// sampling draws from.
pub struct Generator<'g> {
    graph: &'g KnowledgeGraph,
    cfg: &'g GeneratorConfig,
    class_nodes: Vec<NodeIx>,
}

struct TierSets {
    own: HashSet<NodeIx>,
    o1: BTreeSet<NodeIx>,
    o2: BTreeSet<NodeIx>,
}

impl<'g> Generator<'g> {
    pub fn new(graph: &'g KnowledgeGraph, cfg: &'g GeneratorConfig) -> Result<Self, GeneratorError> {
        cfg.validate()?;
        let class_nodes = graph.nodes().filter(|&ix| !graph.instances_ix(ix).is_empty()).collect();
        Ok(Self {
            graph,
            cfg,
            class_nodes,
        })
    }

    fn labeled(&self, ix: NodeIx) -> bool {
        self.graph.entity(ix).label(&self.cfg.language).is_some()
    }

    /// Classes with at least `min_instances` labeled direct instances, ascending.
    pub fn candidate_nodes(&self) -> Vec<NodeIx> {
        self.class_nodes
            .iter()
            .copied()
            .filter(|&v| {
                self.graph.instances_ix(v).iter().filter(|&&i| self.labeled(i)).count() >= self.cfg.min_instances
            })
            .collect()
    }

    fn siblings_closure(&self, v: NodeIx, uppers: &BTreeSet<NodeIx>) -> BTreeSet<NodeIx> {
        let roots = uppers
            .iter()
            .flat_map(|&p| self.graph.children_ix(p).iter().copied())
            .filter(|&c| c != v);
        self.graph.instances_closure_ix(roots)
    }

    fn tier_sets(&self, v: NodeIx) -> TierSets {
        let g = self.graph;
        let own: HashSet<NodeIx> = g.instances_ix(v).iter().copied().collect();
        let parents: BTreeSet<NodeIx> = g.parents_ix(v).iter().copied().collect();
        let mut grandparents: BTreeSet<NodeIx> =
            parents.iter().flat_map(|&p| g.parents_ix(p).iter().copied()).collect();
        if self.cfg.o2_strictness == O2Strictness::ExcludeParents {
            grandparents.retain(|p| !parents.contains(p));
        }
        let mut o1 = self.siblings_closure(v, &parents);
        o1.retain(|e| !own.contains(e));
        let mut o2 = self.siblings_closure(v, &grandparents);
        o2.retain(|e| !own.contains(e) && !o1.contains(e));
        TierSets { own, o1, o2 }
    }

    /// Nodes within distance `< mu` of each parent of `v`. A class `w` is far
    /// enough for O3 when it is missing from at least one ball.
    fn parent_balls(&self, v: NodeIx) -> Vec<HashSet<NodeIx>> {
        self.graph
            .parents_ix(v)
            .iter()
            .map(|&p| self.graph.ball_within(p, self.cfg.mu))
            .collect()
    }

    /// Exact candidate set for one tier. O3 is fully enumerated here, which is
    /// linear in the number of classes; generation samples it instead.
    pub fn outlier_candidates(&self, v: NodeIx, tier: Tier) -> BTreeSet<NodeIx> {
        let sets = self.tier_sets(v);
        match tier {
            Tier::O1 => sets.o1,
            Tier::O2 => sets.o2,
            Tier::O3 => {
                let balls = self.parent_balls(v);
                let mut out = BTreeSet::new();
                for &w in &self.class_nodes {
                    if balls.iter().any(|b| !b.contains(&w)) {
                        out.extend(
                            self.graph
                                .instances_ix(w)
                                .iter()
                                .copied()
                                .filter(|e| !sets.own.contains(e) && !sets.o1.contains(e) && !sets.o2.contains(e)),
                        );
                    }
                }
                out
            }
        }
    }

    fn by_prominence(&self, nodes: &mut [NodeIx]) {
        nodes.sort_by(|&a, &b| {
            let (ea, eb) = (self.graph.entity(a), self.graph.entity(b));
            eb.sitelinks.cmp(&ea.sitelinks).then(a.cmp(&b))
        });
    }

    pub fn select_cluster(&self, v: NodeIx) -> Result<Vec<NodeIx>, Reject> {
        let mut members: Vec<NodeIx> = self
            .graph
            .instances_ix(v)
            .iter()
            .copied()
            .filter(|&i| self.labeled(i))
            .collect();
        if members.len() < self.cfg.min_cluster_size {
            return Err(Reject::TooFewInstances);
        }
        self.by_prominence(&mut members);
        members.truncate(self.cfg.cluster_size);
        Ok(members)
    }

    fn eligible_outlier(&self, e: NodeIx) -> bool {
        self.graph.entity(e).sitelinks >= self.cfg.min_outlier_sitelinks && self.labeled(e)
    }

    pub fn select_outliers<R: Rng + ?Sized>(&self, v: NodeIx, rng: &mut R) -> Vec<(Tier, NodeIx)> {
        let sets = self.tier_sets(v);
        let mut out = Vec::new();
        for (tier, set) in [(Tier::O1, &sets.o1), (Tier::O2, &sets.o2)] {
            let mut pool: Vec<NodeIx> = set.iter().copied().filter(|&e| self.eligible_outlier(e)).collect();
            self.by_prominence(&mut pool);
            out.extend(pool.into_iter().take(self.cfg.per_tier_outliers).map(|e| (tier, e)));
        }
        out.extend(self.sample_o3(v, &sets, rng).into_iter().map(|e| (Tier::O3, e)));
        out
    }

    fn sample_o3<R: Rng + ?Sized>(&self, v: NodeIx, sets: &TierSets, rng: &mut R) -> Vec<NodeIx> {
        let mut picked = Vec::new();
        if self.class_nodes.is_empty() || self.graph.parents_ix(v).is_empty() {
            return picked;
        }
        let balls = self.parent_balls(v);
        for _ in 0..self.cfg.o3_trials {
            if picked.len() == self.cfg.per_tier_outliers {
                break;
            }
            let w = self.class_nodes[rng.random_range(0..self.class_nodes.len())];
            if balls.iter().all(|b| b.contains(&w)) {
                continue;
            }
            let members = self.graph.instances_ix(w);
            let e = members[rng.random_range(0..members.len())];
            if sets.own.contains(&e)
                || sets.o1.contains(&e)
                || sets.o2.contains(&e)
                || picked.contains(&e)
                || !self.eligible_outlier(e)
            {
                continue;
            }
            picked.push(e);
        }
        picked
    }

    pub fn generate_group<R: Rng + ?Sized>(&self, v: NodeIx, rng: &mut R) -> Result<RawGroup, Reject> {
        let cluster = self.select_cluster(v)?;
        let outliers = self.select_outliers(v, rng);
        if outliers.is_empty() {
            return Err(Reject::NoOutliers);
        }
        let g = self.graph;
        Ok(RawGroup {
            class_id: g.id(v).clone(),
            cluster_ids: cluster.into_iter().map(|i| g.id(i).clone()).collect(),
            outlier_ids: outliers.into_iter().map(|(t, i)| (t, g.id(i).clone())).collect(),
        })
    }

    /// One outcome per candidate class, in ascending class-id order. Runs on
    /// the current rayon pool; the result does not depend on its size.
    pub fn generate_outcomes(&self) -> Vec<(EntityId, Result<RawGroup, Reject>)> {
        self.candidate_nodes()
            .into_par_iter()
            .map(|v| {
                let id = self.graph.id(v).clone();
                let mut rng = class_rng(self.cfg.rng_seed, &id);
                let outcome = self.generate_group(v, &mut rng);
                (id, outcome)
            })
            .collect()
    }
}

pub fn candidate_classes(g: &KnowledgeGraph, cfg: &GeneratorConfig) -> Result<Vec<EntityId>, GeneratorError> {
    let gen = Generator::new(g, cfg)?;
    Ok(gen.candidate_nodes().into_iter().map(|v| g.id(v).clone()).collect())
}

pub fn outlier_candidates(
    g: &KnowledgeGraph,
    v: &str,
    tier: Tier,
    cfg: &GeneratorConfig,
) -> Result<BTreeSet<EntityId>, GeneratorError> {
    let gen = Generator::new(g, cfg)?;
    let v = g.require(v)?;
    Ok(gen
        .outlier_candidates(v, tier)
        .into_iter()
        .map(|e| g.id(e).clone())
        .collect())
}

pub fn select_cluster(
    g: &KnowledgeGraph,
    v: &str,
    cfg: &GeneratorConfig,
) -> Result<Result<Vec<EntityId>, Reject>, GeneratorError> {
    let gen = Generator::new(g, cfg)?;
    let v = g.require(v)?;
    Ok(gen
        .select_cluster(v)
        .map(|c| c.into_iter().map(|i| g.id(i).clone()).collect()))
}

pub fn select_outliers<R: Rng + ?Sized>(
    g: &KnowledgeGraph,
    v: &str,
    cfg: &GeneratorConfig,
    rng: &mut R,
) -> Result<Vec<(Tier, EntityId)>, GeneratorError> {
    let gen = Generator::new(g, cfg)?;
    let v = g.require(v)?;
    Ok(gen
        .select_outliers(v, rng)
        .into_iter()
        .map(|(t, i)| (t, g.id(i).clone()))
        .collect())
}

pub fn generate_group<R: Rng + ?Sized>(
    g: &KnowledgeGraph,
    v: &str,
    cfg: &GeneratorConfig,
    rng: &mut R,
) -> Result<Result<RawGroup, Reject>, GeneratorError> {
    let gen = Generator::new(g, cfg)?;
    let v = g.require(v)?;
    Ok(gen.generate_group(v, rng))
}

/// Accepted groups only, ascending by class id.
pub fn generate_dataset(g: &KnowledgeGraph, cfg: &GeneratorConfig) -> Result<Vec<RawGroup>, GeneratorError> {
    let gen = Generator::new(g, cfg)?;
    Ok(gen
        .generate_outcomes()
        .into_iter()
        .filter_map(|(_, r)| r.ok())
        .collect())
}
