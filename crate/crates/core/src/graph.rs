//! In-memory taxonomy graph.
//!
//! Entities are stored densely and sorted by id, so a [`NodeIx`] order is the
//! same as the [`EntityId`] order. That keeps every "ascending id" tie-break in
//! the generator a plain integer comparison.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::EntityRecord;

/// Root of the Wikidata subclass tree ("entity").
pub const DEFAULT_ROOT: &str = "Q35120";

/// Default radius of the near-root band removed by [`KnowledgeGraph::prune`].
pub const DEFAULT_PRUNE_DEPTH: u32 = 3;

/// Opaque knowledge-base identifier such as `Q128109`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntityId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl std::borrow::Borrow<str> for EntityId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Dense index of an entity inside one [`KnowledgeGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeIx(u32);

impl NodeIx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: EntityId,
    /// Language code to label.
    pub labels: BTreeMap<String, String>,
    pub sitelinks: u64,
    pub is_disambiguation: bool,
    /// Language code to Wikipedia page title.
    pub wiki_titles: BTreeMap<String, String>,
}

impl Entity {
    pub fn label(&self, language: &str) -> Option<&str> {
        self.labels.get(language).map(String::as_str)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("duplicate entity id {0}")]
    DuplicateEntity(EntityId),
    #[error("unknown entity id {0}")]
    UnknownEntity(EntityId),
    #[error("prune root {0} is not in the graph")]
    UnknownRoot(EntityId),
    #[error("distance cap must be at least 1")]
    ZeroCap,
}

/// Result of a bounded shortest-path query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Distance {
    Exact(u32),
    AtLeastCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Parents: `v` is a subclass of each result.
    Up,
    /// Children: each result is a subclass of `v`.
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    InstanceOf,
    SubclassOf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge<'a> {
    pub kind: EdgeKind,
    pub from: &'a EntityId,
    pub to: &'a EntityId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub entities: usize,
    pub instance_edges: usize,
    pub subclass_edges: usize,
    /// Edges whose target id never appeared in the input.
    pub dangling_edges: usize,
    /// Repeated edges collapsed into one.
    pub duplicate_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneParams {
    /// `None` disables the near-root rule.
    pub root: Option<EntityId>,
    pub depth: u32,
    pub stop_classes: Vec<EntityId>,
}

impl Default for PruneParams {
    fn default() -> Self {
        Self {
            root: Some(EntityId::from(DEFAULT_ROOT)),
            depth: DEFAULT_PRUNE_DEPTH,
            stop_classes: Vec::new(),
        }
    }
}

/// Removal counts. An entity matching several rules is counted under the first
/// one in field order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneStats {
    pub disambiguation: usize,
    pub near_root: usize,
    pub stop_class_instances: usize,
    pub edges_removed: usize,
    pub retained: usize,
}

/// Taxonomy graph over `instance of` and `subclass of` edges.
///
/// Immutable after construction; all queries take `&self`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    entities: Vec<Entity>,
    index: HashMap<EntityId, NodeIx>,
    // entity -> classes it is an instance of
    instance_of: Vec<Vec<NodeIx>>,
    // class -> its direct instances
    instances: Vec<Vec<NodeIx>>,
    parents: Vec<Vec<NodeIx>>,
    children: Vec<Vec<NodeIx>>,
    // ids dropped by earlier prunes; lets a repeated prune recognise its root
    retired: BTreeSet<EntityId>,
}

/// Incremental single-writer builder. Edges are resolved in [`finish`], after
/// every entity is known, so forward references are fine.
///
/// [`finish`]: GraphBuilder::finish
#[derive(Debug, Default)]
pub struct GraphBuilder {
    records: Vec<EntityRecord>,
    seen: HashSet<EntityId>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, record: EntityRecord) -> Result<(), GraphError> {
        if !self.seen.insert(record.id.clone()) {
            return Err(GraphError::DuplicateEntity(record.id));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn finish(mut self) -> (KnowledgeGraph, BuildStats) {
        self.records.sort_by(|a, b| a.id.cmp(&b.id));
        let n = self.records.len();
        let index: HashMap<EntityId, NodeIx> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.clone(), NodeIx(i as u32)))
            .collect();

        let mut stats = BuildStats {
            entities: n,
            ..BuildStats::default()
        };
        let mut instance_of = vec![Vec::new(); n];
        let mut parents = vec![Vec::new(); n];
        let mut entities = Vec::with_capacity(n);

        for (i, record) in self.records.into_iter().enumerate() {
            for (targets, out) in [
                (&record.instance_of, &mut instance_of[i]),
                (&record.subclass_of, &mut parents[i]),
            ] {
                for target in targets {
                    match index.get(target) {
                        Some(&ix) => out.push(ix),
                        None => stats.dangling_edges += 1,
                    }
                }
                let before = out.len();
                out.sort_unstable();
                out.dedup();
                stats.duplicate_edges += before - out.len();
            }
            entities.push(Entity {
                id: record.id,
                labels: record.labels,
                sitelinks: record.sitelinks,
                is_disambiguation: record.is_disambiguation,
                wiki_titles: record.wiki_titles,
            });
        }

        let graph = KnowledgeGraph::assemble(entities, index, instance_of, parents, BTreeSet::new());
        stats.instance_edges = graph.instance_of.iter().map(Vec::len).sum();
        stats.subclass_edges = graph.parents.iter().map(Vec::len).sum();
        (graph, stats)
    }
}

/// Build a graph from a stream of records, dropping and counting dangling edges.
pub fn build_graph<I>(records: I) -> Result<(KnowledgeGraph, BuildStats), GraphError>
where
    I: IntoIterator<Item = EntityRecord>,
{
    let mut builder = GraphBuilder::new();
    for record in records {
        builder.add(record)?;
    }
    Ok(builder.finish())
}

impl KnowledgeGraph {
    fn assemble(
        entities: Vec<Entity>,
        index: HashMap<EntityId, NodeIx>,
        instance_of: Vec<Vec<NodeIx>>,
        parents: Vec<Vec<NodeIx>>,
        retired: BTreeSet<EntityId>,
    ) -> Self {
        let n = entities.len();
        let mut instances = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        // Iterating sources in ascending order keeps reverse lists sorted.
        for (src, classes) in instance_of.iter().enumerate() {
            for c in classes {
                instances[c.index()].push(NodeIx(src as u32));
            }
        }
        for (src, ps) in parents.iter().enumerate() {
            for p in ps {
                children[p.index()].push(NodeIx(src as u32));
            }
        }
        Self {
            entities,
            index,
            instance_of,
            instances,
            parents,
            children,
            retired,
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<NodeIx> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &str) -> Result<NodeIx, GraphError> {
        self.node(id)
            .ok_or_else(|| GraphError::UnknownEntity(EntityId::from(id)))
    }

    pub fn entity(&self, ix: NodeIx) -> &Entity {
        &self.entities[ix.index()]
    }

    pub fn id(&self, ix: NodeIx) -> &EntityId {
        &self.entities[ix.index()].id
    }

    pub fn entities(&self) -> impl ExactSizeIterator<Item = &Entity> {
        self.entities.iter()
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = NodeIx> {
        (0..self.entities.len() as u32).map(NodeIx)
    }

    /// Ids removed by previous prunes of this graph's ancestors.
    pub fn retired(&self) -> &BTreeSet<EntityId> {
        &self.retired
    }

    /// Direct instances of `class`, ascending.
    pub fn instances_ix(&self, class: NodeIx) -> &[NodeIx] {
        &self.instances[class.index()]
    }

    /// Classes that `entity` is a direct instance of, ascending.
    pub fn classes_of(&self, entity: NodeIx) -> &[NodeIx] {
        &self.instance_of[entity.index()]
    }

    pub fn parents_ix(&self, ix: NodeIx) -> &[NodeIx] {
        &self.parents[ix.index()]
    }

    pub fn children_ix(&self, ix: NodeIx) -> &[NodeIx] {
        &self.children[ix.index()]
    }

    fn to_ids(&self, nodes: impl IntoIterator<Item = NodeIx>) -> BTreeSet<EntityId> {
        nodes.into_iter().map(|ix| self.id(ix).clone()).collect()
    }

    /// `I(v)`: direct instances only, no closure.
    pub fn instances(&self, id: &str) -> Result<BTreeSet<EntityId>, GraphError> {
        let ix = self.require(id)?;
        Ok(self.to_ids(self.instances_ix(ix).iter().copied()))
    }

    /// `P(v)` for [`Direction::Up`], its converse for [`Direction::Down`].
    pub fn taxonomy_neighbors(&self, id: &str, direction: Direction) -> Result<BTreeSet<EntityId>, GraphError> {
        let ix = self.require(id)?;
        let adj = match direction {
            Direction::Up => self.parents_ix(ix),
            Direction::Down => self.children_ix(ix),
        };
        Ok(self.to_ids(adj.iter().copied()))
    }

    /// `I*(v)`: instances of `v` and of every transitive subclass of `v`.
    pub fn instances_closure(&self, id: &str) -> Result<BTreeSet<EntityId>, GraphError> {
        let ix = self.require(id)?;
        Ok(self.to_ids(self.instances_closure_ix([ix])))
    }

    /// Union of `I*` over several roots, sharing one visited set.
    pub fn instances_closure_ix(&self, roots: impl IntoIterator<Item = NodeIx>) -> BTreeSet<NodeIx> {
        let mut visited = HashSet::new();
        let mut stack: Vec<NodeIx> = roots.into_iter().collect();
        let mut out = BTreeSet::new();
        while let Some(class) = stack.pop() {
            if !visited.insert(class) {
                continue;
            }
            out.extend(self.instances_ix(class).iter().copied());
            stack.extend(self.children_ix(class).iter().copied().filter(|c| !visited.contains(c)));
        }
        out
    }

    fn subclass_neighbors(&self, ix: NodeIx) -> impl Iterator<Item = NodeIx> + '_ {
        self.parents_ix(ix).iter().chain(self.children_ix(ix)).copied()
    }

    /// Shortest path length over undirected subclass edges, or
    /// [`Distance::AtLeastCap`] once it would reach `cap`.
    pub fn distance_within(&self, a: &str, b: &str, cap: u32) -> Result<Distance, GraphError> {
        if cap == 0 {
            return Err(GraphError::ZeroCap);
        }
        let a = self.require(a)?;
        let b = self.require(b)?;
        Ok(self.distance_within_ix(a, b, cap))
    }

    /// Bounded BFS: never expands a node at depth `cap - 1`.
    pub fn distance_within_ix(&self, a: NodeIx, b: NodeIx, cap: u32) -> Distance {
        if a == b {
            return Distance::Exact(0);
        }
        let mut visited = HashSet::from([a]);
        let mut frontier = vec![a];
        let mut depth = 0;
        while !frontier.is_empty() && depth + 1 < cap {
            depth += 1;
            let mut next = Vec::new();
            for node in frontier {
                for nb in self.subclass_neighbors(node) {
                    if nb == b {
                        return Distance::Exact(depth);
                    }
                    if visited.insert(nb) {
                        next.push(nb);
                    }
                }
            }
            frontier = next;
        }
        Distance::AtLeastCap
    }

    /// All nodes at undirected subclass distance `< cap` from `origin`
    /// (including `origin` itself).
    pub fn ball_within(&self, origin: NodeIx, cap: u32) -> HashSet<NodeIx> {
        let mut visited = HashSet::new();
        if cap == 0 {
            return visited;
        }
        visited.insert(origin);
        let mut queue = VecDeque::from([(origin, 0u32)]);
        while let Some((node, depth)) = queue.pop_front() {
            if depth + 1 >= cap {
                continue;
            }
            for nb in self.subclass_neighbors(node) {
                if visited.insert(nb) {
                    queue.push_back((nb, depth + 1));
                }
            }
        }
        visited
    }

    /// Every edge, instance-of first, each group ordered by source then target.
    pub fn edges(&self) -> impl Iterator<Item = Edge<'_>> {
        let inst = self.instance_of.iter().enumerate().flat_map(move |(i, ts)| {
            ts.iter().map(move |t| Edge {
                kind: EdgeKind::InstanceOf,
                from: &self.entities[i].id,
                to: self.id(*t),
            })
        });
        let sub = self.parents.iter().enumerate().flat_map(move |(i, ts)| {
            ts.iter().map(move |t| Edge {
                kind: EdgeKind::SubclassOf,
                from: &self.entities[i].id,
                to: self.id(*t),
            })
        });
        inst.chain(sub)
    }

    /// Remove disambiguation entities, the near-root band of classes and the
    /// instances of stop classes. All three predicates are evaluated against
    /// `self` before anything is removed.
    pub fn prune(&self, params: &PruneParams) -> Result<(KnowledgeGraph, PruneStats), GraphError> {
        let near_root: HashSet<NodeIx> = match &params.root {
            Some(root) => match self.node(root.as_str()) {
                Some(r) => self.ball_within(r, params.depth + 1),
                None if self.retired.contains(root) => HashSet::new(),
                None => return Err(GraphError::UnknownRoot(root.clone())),
            },
            None => HashSet::new(),
        };
        let stop: HashSet<NodeIx> = params
            .stop_classes
            .iter()
            .filter_map(|id| self.node(id.as_str()))
            .collect();

        let mut stats = PruneStats::default();
        let keep: Vec<bool> = self
            .nodes()
            .map(|ix| {
                if self.entity(ix).is_disambiguation {
                    stats.disambiguation += 1;
                    false
                } else if near_root.contains(&ix) {
                    stats.near_root += 1;
                    false
                } else if self.classes_of(ix).iter().any(|c| stop.contains(c)) {
                    stats.stop_class_instances += 1;
                    false
                } else {
                    true
                }
            })
            .collect();

        let pruned = self.retain(&keep);
        let before: usize = self.instance_of.iter().chain(&self.parents).map(Vec::len).sum();
        let after: usize = pruned.instance_of.iter().chain(&pruned.parents).map(Vec::len).sum();
        stats.edges_removed = before - after;
        stats.retained = pruned.len();
        Ok((pruned, stats))
    }

    fn retain(&self, keep: &[bool]) -> KnowledgeGraph {
        let mut remap = vec![None; self.len()];
        let mut entities = Vec::new();
        let mut retired = self.retired.clone();
        for (i, entity) in self.entities.iter().enumerate() {
            if keep[i] {
                remap[i] = Some(NodeIx(entities.len() as u32));
                entities.push(entity.clone());
            } else {
                retired.insert(entity.id.clone());
            }
        }
        let remap_list =
            |list: &Vec<NodeIx>| -> Vec<NodeIx> { list.iter().filter_map(|ix| remap[ix.index()]).collect() };
        let mut instance_of = Vec::with_capacity(entities.len());
        let mut parents = Vec::with_capacity(entities.len());
        for (i, &kept) in keep.iter().enumerate() {
            if kept {
                instance_of.push(remap_list(&self.instance_of[i]));
                parents.push(remap_list(&self.parents[i]));
            }
        }
        let index = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.clone(), NodeIx(i as u32)))
            .collect();
        KnowledgeGraph::assemble(entities, index, instance_of, parents, retired)
    }
}
