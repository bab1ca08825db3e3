//! Fixtures, random instance generators and brute-force reference
//! implementations shared by the test suites.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taxoutlier::formats::{AnchorEntry, DatasetRecord, Embedding, EntityRecord, Outlier, Tier};
use taxoutlier::EntityId;

pub fn id(s: &str) -> EntityId {
    EntityId::from(s)
}

pub fn ids<'a>(list: impl IntoIterator<Item = &'a str>) -> BTreeSet<EntityId> {
    list.into_iter().map(id).collect()
}

/// A labeled record with English label and title equal to `label`.
pub fn record(qid: &str, label: &str, sitelinks: u64, instance_of: &[&str], subclass_of: &[&str]) -> EntityRecord {
    EntityRecord {
        id: id(qid),
        labels: BTreeMap::from([("en".to_owned(), label.to_owned())]),
        sitelinks,
        instance_of: instance_of.iter().map(|s| id(s)).collect(),
        subclass_of: subclass_of.iter().map(|s| id(s)).collect(),
        is_disambiguation: false,
        wiki_titles: BTreeMap::from([("en".to_owned(), label.replace(' ', "_"))]),
    }
}

// ---------------------------------------------------------------------------
// Sports-team taxonomy

pub const BASKETBALL_TEAM: &str = "Q13393265";
pub const AMERICAN_FOOTBALL_TEAM: &str = "Q17156793";
pub const ICE_HOCKEY_TEAM: &str = "Q4498974";
pub const SPORTS_TEAM: &str = "Q12973014";
pub const SPORTS_CLUB: &str = "Q847017";
pub const SPORTS_ORGANIZATION: &str = "Q4438121";
pub const CHEMICAL_ELEMENT: &str = "Q11344";
pub const HUMAN: &str = "Q5";
pub const ROOT: &str = "Q35120";

/// Basketball teams, most linked first. The last one falls outside a cluster
/// of 8.
pub const BASKETBALL_TEAMS: [(&str, &str, u64); 9] = [
    ("Q128109", "Chicago Bulls", 90),
    ("Q121783", "Los Angeles Lakers", 88),
    ("Q131371", "Boston Celtics", 80),
    ("Q159729", "San Antonio Spurs", 70),
    ("Q157376", "Golden State Warriors", 66),
    ("Q169138", "Miami Heat", 60),
    ("Q131364", "New York Knicks", 58),
    ("Q161345", "Houston Rockets", 55),
    ("Q132880", "Toronto Raptors", 50),
];

pub const FOOTBALL_TEAMS: [(&str, &str, u64); 4] = [
    ("Q213837", "Green Bay Packers", 45),
    ("Q204862", "Dallas Cowboys", 44),
    ("Q193390", "New England Patriots", 40),
    ("Q205033", "Chicago Bears", 39),
];

pub const HOCKEY_TEAMS: [(&str, &str, u64); 3] = [
    ("Q188143", "Montreal Canadiens", 42),
    ("Q4371", "Toronto Maple Leafs", 41),
    ("Q193589", "Detroit Red Wings", 35),
];

/// Direct instances of "sports team" with too few sitelinks to be outliers.
pub const MINOR_TEAMS: [(&str, &str, u64); 2] = [
    ("Q90000001", "Springfield Isotopes", 2),
    ("Q90000002", "Shelbyville Sharks", 3),
];

pub const ELEMENTS: [(&str, &str, u64); 6] = [
    ("Q556", "hydrogen", 200),
    ("Q560", "helium", 190),
    ("Q623", "carbon", 210),
    ("Q629", "oxygen", 205),
    ("Q677", "iron", 198),
    ("Q897", "gold", 195),
];

pub const PEOPLE: [(&str, &str, u64); 2] = [("Q41421", "Michael Jordan", 150), ("Q36159", "LeBron James", 120)];

/// Subclass chain from the root down to the sports classes and a separate
/// branch ending in chemical elements. Distances from the root: organization
/// 3, sports organization 4, element 4, human 2.
pub fn sports_records() -> Vec<EntityRecord> {
    let mut r = vec![
        record(ROOT, "entity", 100, &[], &[]),
        record("Q488383", "object", 90, &[], &[ROOT]),
        record("Q24229398", "agent", 20, &[], &["Q488383"]),
        record("Q43229", "organization", 120, &[], &["Q24229398"]),
        record(SPORTS_ORGANIZATION, "sports organization", 30, &[], &["Q43229"]),
        record(SPORTS_TEAM, "sports team", 60, &[], &[SPORTS_ORGANIZATION]),
        record(SPORTS_CLUB, "sports club", 50, &[], &[SPORTS_ORGANIZATION]),
        record(BASKETBALL_TEAM, "basketball team", 40, &[], &[SPORTS_TEAM]),
        record(
            AMERICAN_FOOTBALL_TEAM,
            "American football team",
            25,
            &[],
            &[SPORTS_TEAM],
        ),
        record(ICE_HOCKEY_TEAM, "ice hockey team", 30, &[], &[SPORTS_CLUB]),
        record("Q35758", "matter", 80, &[], &[ROOT]),
        record("Q7239", "substance", 60, &[], &["Q35758"]),
        record("Q79529", "chemical substance", 70, &[], &["Q7239"]),
        record(CHEMICAL_ELEMENT, "chemical element", 150, &[], &["Q79529"]),
        record(HUMAN, "human", 300, &[], &["Q488383"]),
    ];
    for (qid, label, s) in BASKETBALL_TEAMS {
        r.push(record(qid, label, s, &[BASKETBALL_TEAM], &[]));
    }
    for (qid, label, s) in FOOTBALL_TEAMS {
        r.push(record(qid, label, s, &[AMERICAN_FOOTBALL_TEAM], &[]));
    }
    for (qid, label, s) in HOCKEY_TEAMS {
        r.push(record(qid, label, s, &[ICE_HOCKEY_TEAM], &[]));
    }
    for (qid, label, s) in MINOR_TEAMS {
        r.push(record(qid, label, s, &[SPORTS_TEAM], &[]));
    }
    for (qid, label, s) in ELEMENTS {
        r.push(record(qid, label, s, &[CHEMICAL_ELEMENT], &[]));
    }
    for (qid, label, s) in PEOPLE {
        r.push(record(qid, label, s, &[HUMAN], &[]));
    }
    let mut disambig = record("Q228925", "Bulls", 15, &[], &[]);
    disambig.is_disambiguation = true;
    r.push(disambig);
    r
}

/// Anchor statistics for the sports taxonomy: a nickname that loses and one
/// that wins.
pub fn sports_anchors() -> Vec<AnchorEntry> {
    let e = |a: &str, t: &str, c: u64| AnchorEntry {
        anchor: a.into(),
        target_title: t.into(),
        count: c,
    };
    vec![
        e("Chicago Bulls", "Chicago_Bulls", 500),
        e("the Bulls", "Chicago_Bulls", 120),
        e("Lakers", "Los_Angeles_Lakers", 900),
        e("Los Angeles Lakers", "Los_Angeles_Lakers", 400),
    ]
}

// ---------------------------------------------------------------------------
// Random graphs

#[derive(Debug, Clone)]
pub struct RandomGraphSpec {
    pub classes: usize,
    pub instances: usize,
    pub max_parents: usize,
    pub max_classes_per_instance: usize,
    /// Probability of an extra subclass edge to an arbitrary class, which may
    /// close a cycle.
    pub back_edge_rate: f64,
    pub disambiguation_rate: f64,
    pub unlabeled_rate: f64,
    pub max_sitelinks: u64,
}

impl Default for RandomGraphSpec {
    fn default() -> Self {
        Self {
            classes: 20,
            instances: 60,
            max_parents: 2,
            max_classes_per_instance: 2,
            back_edge_rate: 0.05,
            disambiguation_rate: 0.02,
            unlabeled_rate: 0.05,
            max_sitelinks: 40,
        }
    }
}

pub fn class_id(i: usize) -> String {
    format!("C{i:04}")
}

pub fn instance_id(i: usize) -> String {
    format!("E{i:05}")
}

/// Random taxonomy: mostly a DAG (each class picks parents among earlier
/// classes, class 0 being the root) plus occasional arbitrary edges.
pub fn random_records(seed: u64, spec: &RandomGraphSpec) -> Vec<EntityRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(spec.classes + spec.instances);
    for c in 0..spec.classes {
        let mut parents = BTreeSet::new();
        if c > 0 {
            for _ in 0..rng.random_range(1..=spec.max_parents.max(1)) {
                parents.insert(rng.random_range(0..c));
            }
        }
        if spec.classes > 1 && rng.random_bool(spec.back_edge_rate) {
            let p = rng.random_range(0..spec.classes);
            if p != c {
                parents.insert(p);
            }
        }
        let qid = class_id(c);
        let mut r = record(
            &qid,
            &format!("class {c}"),
            rng.random_range(0..=spec.max_sitelinks),
            &[],
            &[],
        );
        r.subclass_of = parents.into_iter().map(|p| id(&class_id(p))).collect();
        out.push(r);
    }
    for i in 0..spec.instances {
        let qid = instance_id(i);
        let mut r = record(
            &qid,
            &format!("thing {i}"),
            rng.random_range(0..=spec.max_sitelinks),
            &[],
            &[],
        );
        if spec.classes > 0 {
            let k = rng.random_range(1..=spec.max_classes_per_instance.max(1));
            let classes: BTreeSet<usize> = (0..k).map(|_| rng.random_range(0..spec.classes)).collect();
            r.instance_of = classes.into_iter().map(|c| id(&class_id(c))).collect();
        }
        if rng.random_bool(spec.unlabeled_rate) {
            r.labels.clear();
        }
        r.is_disambiguation = rng.random_bool(spec.disambiguation_rate);
        out.push(r);
    }
    out
}

/// Random directed subclass graph over `n` nodes with no structure assumed.
pub fn random_subclass_graph(seed: u64, n: usize, edge_prob: f64) -> Vec<EntityRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let parents: Vec<String> = (0..n)
                .filter(|&j| j != i && rng.random_bool(edge_prob))
                .map(class_id)
                .collect();
            let refs: Vec<&str> = parents.iter().map(String::as_str).collect();
            record(&class_id(i), &format!("n{i}"), 0, &[], &refs)
        })
        .collect()
}

/// Records with a known number of edges pointing at ids that are never
/// defined. Returns the records and that count.
pub fn records_with_dangling(seed: u64, n: usize, dangling_rate: f64) -> (Vec<EntityRecord>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dangling = 0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = record(&instance_id(i), &format!("e{i}"), rng.random_range(0..100), &[], &[]);
        for _ in 0..rng.random_range(0..3) {
            let target = if rng.random_bool(dangling_rate) {
                dangling += 1;
                // unique per edge, so dangling edges are never deduplicated
                format!("MISSING{i}_{}", r.instance_of.len() + r.subclass_of.len())
            } else {
                instance_id(rng.random_range(0..n))
            };
            if rng.random_bool(0.5) {
                r.instance_of.push(id(&target));
            } else {
                r.subclass_of.push(id(&target));
            }
        }
        out.push(r);
    }
    (out, dangling)
}

// ---------------------------------------------------------------------------
// Brute-force graph oracles over plain records

/// Record view with only edges whose both ends exist.
pub struct Oracle {
    pub ids: Vec<EntityId>,
    pos: BTreeMap<EntityId, usize>,
    pub instance_edges: BTreeSet<(usize, usize)>,
    pub subclass_edges: BTreeSet<(usize, usize)>,
    pub records: Vec<EntityRecord>,
}

pub const INF: u32 = u32::MAX;

impl Oracle {
    pub fn new(records: &[EntityRecord]) -> Self {
        let ids: Vec<EntityId> = records.iter().map(|r| r.id.clone()).collect();
        let pos: BTreeMap<EntityId, usize> = ids.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let mut instance_edges = BTreeSet::new();
        let mut subclass_edges = BTreeSet::new();
        for (i, r) in records.iter().enumerate() {
            for t in &r.instance_of {
                if let Some(&j) = pos.get(t) {
                    instance_edges.insert((i, j));
                }
            }
            for t in &r.subclass_of {
                if let Some(&j) = pos.get(t) {
                    subclass_edges.insert((i, j));
                }
            }
        }
        Self {
            ids,
            pos,
            instance_edges,
            subclass_edges,
            records: records.to_vec(),
        }
    }

    pub fn ix(&self, id: &str) -> usize {
        self.pos[&EntityId::from(id)]
    }

    fn name_set(&self, set: impl IntoIterator<Item = usize>) -> BTreeSet<EntityId> {
        set.into_iter().map(|i| self.ids[i].clone()).collect()
    }

    pub fn instances(&self, v: &str) -> BTreeSet<EntityId> {
        let v = self.ix(v);
        self.name_set(self.instance_edges.iter().filter(|e| e.1 == v).map(|e| e.0))
    }

    pub fn parents(&self, v: &str) -> BTreeSet<EntityId> {
        let v = self.ix(v);
        self.name_set(self.subclass_edges.iter().filter(|e| e.0 == v).map(|e| e.1))
    }

    pub fn children(&self, v: &str) -> BTreeSet<EntityId> {
        let v = self.ix(v);
        self.name_set(self.subclass_edges.iter().filter(|e| e.1 == v).map(|e| e.0))
    }

    /// `v` and every class reaching `v` through subclass edges, by fixpoint.
    fn descendants(&self, v: usize) -> BTreeSet<usize> {
        let mut set = BTreeSet::from([v]);
        loop {
            let grown: Vec<usize> = self
                .subclass_edges
                .iter()
                .filter(|(c, p)| set.contains(p) && !set.contains(c))
                .map(|e| e.0)
                .collect();
            if grown.is_empty() {
                return set;
            }
            set.extend(grown);
        }
    }

    fn closure_ix(&self, v: usize) -> BTreeSet<usize> {
        let classes = self.descendants(v);
        self.instance_edges
            .iter()
            .filter(|(_, c)| classes.contains(c))
            .map(|e| e.0)
            .collect()
    }

    pub fn instances_closure(&self, v: &str) -> BTreeSet<EntityId> {
        self.name_set(self.closure_ix(self.ix(v)))
    }

    /// All-pairs undirected subclass distances (Floyd–Warshall).
    pub fn distances(&self) -> Vec<Vec<u32>> {
        let n = self.ids.len();
        let mut d = vec![vec![INF; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for &(a, b) in &self.subclass_edges {
            d[a][b] = d[a][b].min(1);
            d[b][a] = d[b][a].min(1);
        }
        for k in 0..n {
            for i in 0..n {
                if d[i][k] == INF {
                    continue;
                }
                for j in 0..n {
                    if d[k][j] != INF && d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    /// Entity ids surviving pruning: not disambiguation, farther than `depth`
    /// from `root`, and not an instance of a stop class.
    pub fn pruned_ids(&self, root: Option<&str>, depth: u32, stop: &[&str]) -> BTreeSet<EntityId> {
        let dist = self.distances();
        let root = root.map(|r| self.ix(r));
        let stop: BTreeSet<usize> = stop
            .iter()
            .filter_map(|s| self.pos.get(&EntityId::from(*s)).copied())
            .collect();
        (0..self.ids.len())
            .filter(|&i| !self.records[i].is_disambiguation)
            .filter(|&i| root.is_none_or(|r| dist[r][i] == INF || dist[r][i] > depth))
            .filter(|&i| !self.instance_edges.iter().any(|&(a, c)| a == i && stop.contains(&c)))
            .map(|i| self.ids[i].clone())
            .collect()
    }

    /// Outlier tiers of class `v` straight from their definitions. O3 uses
    /// distance `>= mu` from at least one parent.
    pub fn tiers(&self, v: &str, mu: u32) -> [BTreeSet<EntityId>; 3] {
        let vi = self.ix(v);
        let own: BTreeSet<usize> = self.instance_edges.iter().filter(|e| e.1 == vi).map(|e| e.0).collect();
        let parents_of =
            |x: usize| -> BTreeSet<usize> { self.subclass_edges.iter().filter(|e| e.0 == x).map(|e| e.1).collect() };
        let children_of =
            |x: usize| -> BTreeSet<usize> { self.subclass_edges.iter().filter(|e| e.1 == x).map(|e| e.0).collect() };
        let spread = |uppers: &BTreeSet<usize>| -> BTreeSet<usize> {
            let mut out = BTreeSet::new();
            for &u in uppers {
                for s in children_of(u) {
                    if s != vi {
                        out.extend(self.closure_ix(s));
                    }
                }
            }
            out
        };
        let parents = parents_of(vi);
        let grandparents: BTreeSet<usize> = parents.iter().flat_map(|&p| parents_of(p)).collect();
        let o1: BTreeSet<usize> = spread(&parents).difference(&own).copied().collect();
        let o2: BTreeSet<usize> = spread(&grandparents)
            .into_iter()
            .filter(|e| !own.contains(e) && !o1.contains(e))
            .collect();
        let dist = self.distances();
        let o3: BTreeSet<usize> = self
            .instance_edges
            .iter()
            .filter(|&&(_, w)| parents.iter().any(|&p| dist[p][w] == INF || dist[p][w] >= mu))
            .map(|e| e.0)
            .filter(|e| !own.contains(e) && !o1.contains(e) && !o2.contains(e))
            .collect();
        [self.name_set(o1), self.name_set(o2), self.name_set(o3)]
    }
}

// ---------------------------------------------------------------------------
// Vectors and planted datasets

pub fn random_vectors(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
        .collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
            return unit(v);
        }
    }
}

/// Unit vector at `angle` radians from unit vector `u`.
fn at_angle(rng: &mut impl Rng, u: &[f64], angle: f64) -> Vec<f64> {
    let r = random_unit(rng, u.len());
    let dot: f64 = r.iter().zip(u).map(|(a, b)| a * b).sum();
    let perp = unit(r.iter().zip(u).map(|(a, b)| a - dot * b).collect());
    u.iter()
        .zip(&perp)
        .map(|(a, b)| angle.cos() * a + angle.sin() * b)
        .collect()
}

/// Geometry of a planted dataset. Cluster members lie within `cluster_angle`
/// radians of a group centre; each tier's outliers sit at the given angle.
#[derive(Debug, Clone)]
pub struct PlantSpec {
    pub groups: usize,
    pub dim: usize,
    pub cluster_size: usize,
    pub cluster_angle: f64,
    pub outliers: Vec<(Tier, f64)>,
}

/// Records and an embedding containing exactly their surfaces.
pub fn planted_dataset(seed: u64, spec: &PlantSpec) -> (Vec<DatasetRecord>, Embedding) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<(String, Vec<f32>)> = Vec::new();
    let mut records = Vec::with_capacity(spec.groups);
    for g in 0..spec.groups {
        let centre = random_unit(&mut rng, spec.dim);
        let mut cluster = Vec::new();
        for i in 0..spec.cluster_size {
            let angle = rng.random_range(0.0..=spec.cluster_angle);
            let v = at_angle(&mut rng, &centre, angle);
            let token = format!("g{g}c{i}");
            rows.push((token.clone(), v.into_iter().map(|x| x as f32).collect()));
            cluster.push(token);
        }
        let mut outliers = Vec::new();
        for (k, &(tier, angle)) in spec.outliers.iter().enumerate() {
            let v = at_angle(&mut rng, &centre, angle);
            let token = format!("g{g}o{k}");
            rows.push((token.clone(), v.into_iter().map(|x| x as f32).collect()));
            outliers.push(Outlier { tier, surface: token });
        }
        records.push(DatasetRecord {
            class_id: id(&format!("C{g}")),
            class_label: format!("group {g}"),
            language: "en".into(),
            cluster,
            outliers,
        });
    }
    let e = Embedding::from_rows(rows).expect("planted rows are consistent");
    (records, e)
}

// ---------------------------------------------------------------------------
// Scoring oracles

fn cosine64(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Compactness by literally forming `W \ {w}` and averaging the similarity
/// over every ordered pair of distinct positions.
pub fn oracle_compactness(vectors: &[Vec<f32>]) -> Vec<f64> {
    let w64: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().map(|&x| f64::from(x)).collect())
        .collect();
    (0..w64.len())
        .map(|w| {
            let rest: Vec<&Vec<f64>> = w64
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != w)
                .map(|(_, v)| v)
                .collect();
            let mut sims = Vec::new();
            for (i, a) in rest.iter().enumerate() {
                for (j, b) in rest.iter().enumerate() {
                    if i != j {
                        sims.push(cosine64(a, b));
                    }
                }
            }
            sims.iter().sum::<f64>() / sims.len() as f64
        })
        .collect()
}

/// Outlier position by sorting `W` by compactness: the outlier's rank from
/// the bottom, counting only strictly smaller cluster scores.
pub fn oracle_op(scores: &[f64]) -> usize {
    let (outlier, cluster) = scores.split_last().expect("non-empty");
    let mut sorted: Vec<f64> = cluster.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.partition_point(|c| c < outlier)
}

/// Straight-line OPP and accuracy for datasets whose surfaces are single
/// embedding tokens.
pub fn reference_scores(e: &Embedding, records: &[DatasetRecord]) -> (Option<f64>, Option<f64>, usize) {
    let mut op_sum = 0.0;
    let mut od_sum = 0.0;
    let mut cases = 0usize;
    let mut skipped = 0usize;
    for r in records {
        let cluster: Vec<Vec<f32>> = r.cluster.iter().filter_map(|s| e.get(s)).map(<[f32]>::to_vec).collect();
        let outliers: Vec<Vec<f32>> = r
            .outliers
            .iter()
            .filter_map(|o| e.get(&o.surface))
            .map(<[f32]>::to_vec)
            .collect();
        if outliers.is_empty() || cluster.len() < 2 {
            skipped += 1;
            continue;
        }
        for o in outliers {
            let mut w = cluster.clone();
            w.push(o);
            let scores =
                taxoutlier::evaluate::compactness_naive(&w, &taxoutlier::evaluate::Cosine).expect("at least 3 vectors");
            let op = oracle_op(&scores);
            op_sum += op as f64 / cluster.len() as f64;
            od_sum += if op == cluster.len() { 1.0 } else { 0.0 };
            cases += 1;
        }
    }
    if cases == 0 {
        return (None, None, skipped);
    }
    (
        Some(100.0 * op_sum / cases as f64),
        Some(100.0 * od_sum / cases as f64),
        skipped,
    )
}
