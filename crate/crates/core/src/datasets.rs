//! Synthetic benchmarks: graph feature transfer over long distances and
//! graph property prediction, with BFS ground truth and on-disk layout.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, GraphError, Result};
use crate::graph::{from_text, to_text, Graph, Targets, SOURCE, TARGET};
use crate::kv::{render, KeyValues};
use crate::tensor::Tensor;

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(format!("unknown {} '{other}'", stringify!($ty).to_lowercase())),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    $($ty::$variant => $text,)+
                })
            }
        }
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Line,
    Ring,
    CrossedRing,
}

text_enum!(Topology { Line => "line", Ring => "ring", CrossedRing => "crossed-ring" });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferSpec {
    pub topology: Topology,
    /// Hop distance between source and target.
    pub distance: usize,
    pub counts: SplitCounts,
    pub seed: u64,
}

impl TransferSpec {
    pub fn new(topology: Topology, distance: usize, seed: u64) -> Self {
        TransferSpec {
            topology,
            distance,
            counts: SplitCounts {
                train: 1000,
                val: 100,
                test: 100,
            },
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyTask {
    Diameter,
    Sssp,
    Eccentricity,
}

text_enum!(PropertyTask { Diameter => "diameter", Sssp => "sssp", Eccentricity => "eccentricity" });

impl PropertyTask {
    pub fn graph_level(self) -> bool {
        self == PropertyTask::Diameter
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    ErdosRenyi,
    BarabasiAlbert,
    Caveman,
    Tree,
    Grid,
}

impl Distribution {
    pub const ALL: [Distribution; 5] = [
        Distribution::ErdosRenyi,
        Distribution::BarabasiAlbert,
        Distribution::Caveman,
        Distribution::Tree,
        Distribution::Grid,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub task: PropertyTask,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub counts: SplitCounts,
    pub seed: u64,
}

impl PropertySpec {
    pub fn new(task: PropertyTask, seed: u64) -> Self {
        PropertySpec {
            task,
            min_nodes: 25,
            max_nodes: 35,
            counts: SplitCounts {
                train: 5120,
                val: 640,
                test: 1280,
            },
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    Transfer(TransferSpec),
    Property(PropertySpec),
}

impl DatasetSpec {
    pub fn seed(&self) -> u64 {
        match self {
            DatasetSpec::Transfer(s) => s.seed,
            DatasetSpec::Property(s) => s.seed,
        }
    }

    pub fn counts(&self) -> SplitCounts {
        match self {
            DatasetSpec::Transfer(s) => s.counts,
            DatasetSpec::Property(s) => s.counts,
        }
    }

    /// Short task id: `transfer` or the property name.
    pub fn task_name(&self) -> String {
        match self {
            DatasetSpec::Transfer(_) => "transfer".into(),
            DatasetSpec::Property(s) => s.task.to_string(),
        }
    }

    pub fn is_transfer(&self) -> bool {
        matches!(self, DatasetSpec::Transfer(_))
    }

    /// Parse a `key=value` spec file.
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let kind: String = kv.require("kind")?;
        let seed = kv.get_or("seed", 0u64)?;
        let spec = match kind.as_str() {
            "transfer" => {
                kv.check_known(&["kind", "seed", "topology", "distance", "train", "val", "test"])?;
                let mut s = TransferSpec::new(kv.require("topology")?, kv.require("distance")?, seed);
                s.counts = read_counts(&kv, s.counts)?;
                DatasetSpec::Transfer(s)
            }
            "property" => {
                kv.check_known(&[
                    "kind", "seed", "task", "min_nodes", "max_nodes", "train", "val", "test",
                ])?;
                let mut s = PropertySpec::new(kv.require("task")?, seed);
                s.min_nodes = kv.get_or("min_nodes", s.min_nodes)?;
                s.max_nodes = kv.get_or("max_nodes", s.max_nodes)?;
                s.counts = read_counts(&kv, s.counts)?;
                DatasetSpec::Property(s)
            }
            other => return Err(Error::Config(format!("unknown dataset kind '{other}'"))),
        };
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let c = self.counts();
        let mut pairs: Vec<(&str, String)> = match self {
            DatasetSpec::Transfer(s) => vec![
                ("kind", "transfer".into()),
                ("topology", s.topology.to_string()),
                ("distance", s.distance.to_string()),
            ],
            DatasetSpec::Property(s) => vec![
                ("kind", "property".into()),
                ("task", s.task.to_string()),
                ("min_nodes", s.min_nodes.to_string()),
                ("max_nodes", s.max_nodes.to_string()),
            ],
        };
        pairs.extend([
            ("train", c.train.to_string()),
            ("val", c.val.to_string()),
            ("test", c.test.to_string()),
            ("seed", self.seed().to_string()),
        ]);
        render(&pairs)
    }
}

fn read_counts(kv: &KeyValues, d: SplitCounts) -> Result<SplitCounts> {
    Ok(SplitCounts {
        train: kv.get_or("train", d.train)?,
        val: kv.get_or("val", d.val)?,
        test: kv.get_or("test", d.test)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

text_enum!(Split { Train => "train", Val => "val", Test => "test" });

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub train: Vec<Graph>,
    pub val: Vec<Graph>,
    pub test: Vec<Graph>,
}

impl Dataset {
    pub fn split(&self, s: Split) -> &[Graph] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn generate(spec: &DatasetSpec) -> Result<Self> {
        match spec {
            DatasetSpec::Transfer(s) => gen_transfer(s),
            DatasetSpec::Property(s) => gen_property(s),
        }
    }
}

/// Node count, edge list, source and target of a transfer topology.
pub type TransferLayout = (usize, Vec<(usize, usize)>, usize, usize);

pub fn transfer_topology(topology: Topology, distance: usize) -> Result<TransferLayout> {
    let min = if topology == Topology::Line { 1 } else { 2 };
    if distance < min {
        return Err(Error::Dataset(format!(
            "distance {distance} too small for {topology} (minimum {min})"
        )));
    }
    Ok(match topology {
        Topology::Line => {
            let n = distance + 1;
            (n, (0..distance).map(|i| (i, i + 1)).collect(), 0, distance)
        }
        Topology::Ring | Topology::CrossedRing => {
            let n = 2 * distance;
            let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            if topology == Topology::CrossedRing {
                // Chords join the two intermediate nodes at equal distance
                // from the source; they keep the source-target distance.
                edges.extend((1..distance).map(|i| (i, n - i)));
            }
            (n, edges, 0, distance)
        }
    })
}

fn transfer_graph(rng: &mut impl Rng, spec: &TransferSpec) -> Result<Graph> {
    let (n, edges, source, target) = transfer_topology(spec.topology, spec.distance)?;
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.5)).collect();
    x[source] = 1.0;
    x[target] = 0.0;
    let mut y = x.clone();
    y.swap(source, target);
    Ok(Graph::new(n, edges, Tensor::matrix(n, 1, x), Targets::Node(Tensor::matrix(n, 1, y)))?
        .with_mark(SOURCE, source)?
        .with_mark(TARGET, target)?)
}

pub fn gen_transfer(spec: &TransferSpec) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut make = |count: usize| -> Result<Vec<Graph>> { (0..count).map(|_| transfer_graph(&mut rng, spec)).collect() };
    Ok(Dataset {
        spec: DatasetSpec::Transfer(*spec),
        train: make(spec.counts.train)?,
        val: make(spec.counts.val)?,
        test: make(spec.counts.test)?,
    })
}

fn erdos_renyi(rng: &mut impl Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    edges
}

fn barabasi_albert(rng: &mut impl Rng, n: usize, m: usize) -> Vec<(usize, usize)> {
    // Seed with a clique on m + 1 nodes; each later node attaches to m
    // distinct nodes chosen proportionally to degree.
    let mut edges = Vec::new();
    let mut ends = Vec::new();
    for u in 0..=m {
        for v in u + 1..=m {
            edges.push((u, v));
            ends.extend([u, v]);
        }
    }
    for v in m + 1..n {
        let mut chosen = Vec::with_capacity(m);
        while chosen.len() < m {
            let u = *ends.choose(rng).expect("non-empty seed");
            if !chosen.contains(&u) {
                chosen.push(u);
            }
        }
        for u in chosen {
            edges.push((u, v));
            ends.extend([u, v]);
        }
    }
    edges
}

/// Five cliques of near-equal size joined in a ring by one edge each.
fn caveman(n: usize, cliques: usize) -> Vec<(usize, usize)> {
    let base = n / cliques;
    let extra = n % cliques;
    let mut starts = Vec::with_capacity(cliques + 1);
    starts.push(0);
    for k in 0..cliques {
        starts.push(starts[k] + base + usize::from(k < extra));
    }
    let mut edges = Vec::new();
    for k in 0..cliques {
        for u in starts[k]..starts[k + 1] {
            for v in u + 1..starts[k + 1] {
                edges.push((u, v));
            }
        }
        let next = (k + 1) % cliques;
        edges.push((starts[k + 1] - 1, starts[next]));
    }
    edges
}

/// Uniform labeled tree from a random Prufer sequence.
fn prufer_tree(rng: &mut impl Rng, n: usize) -> Vec<(usize, usize)> {
    if n == 2 {
        return vec![(0, 1)];
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.gen_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &s in &seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &s in &seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).expect("a leaf exists");
        edges.push((leaf.min(s), leaf.max(s)));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Row-major near-square grid with a possibly partial last row.
fn grid(n: usize) -> Vec<(usize, usize)> {
    let cols = (n as f64).sqrt().ceil() as usize;
    let mut edges = Vec::new();
    for v in 0..n {
        let c = v % cols;
        if c + 1 < cols && v + 1 < n {
            edges.push((v, v + 1));
        }
        if v + cols < n {
            edges.push((v, v + cols));
        }
    }
    edges
}

fn sample_edges(rng: &mut impl Rng, dist: Distribution, n: usize) -> Vec<(usize, usize)> {
    match dist {
        Distribution::ErdosRenyi => erdos_renyi(rng, n, 0.25),
        Distribution::BarabasiAlbert => barabasi_albert(rng, n, 2),
        Distribution::Caveman => caveman(n, 5),
        Distribution::Tree => prufer_tree(rng, n),
        Distribution::Grid => grid(n),
    }
}

/// BFS hop distances from `source`; `None` for unreachable nodes.
pub fn bfs(neighbors: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; neighbors.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].expect("queued nodes are reached");
        for &v in &neighbors[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// All-pairs hop distances; errors if the graph is disconnected.
pub fn oracle_distances(g: &Graph) -> std::result::Result<Vec<Vec<usize>>, GraphError> {
    let nb = g.neighbors();
    (0..g.num_nodes())
        .map(|s| bfs(&nb, s).into_iter().collect::<Option<Vec<_>>>().ok_or(GraphError::Disconnected))
        .collect()
}

pub fn eccentricities(dist: &[Vec<usize>]) -> Vec<usize> {
    dist.iter().map(|row| row.iter().copied().max().unwrap_or(0)).collect()
}

pub fn diameter(dist: &[Vec<usize>]) -> usize {
    eccentricities(dist).into_iter().max().unwrap_or(0)
}

/// Attach the task's targets (and, for shortest paths, a source flag channel
/// and mark) to a connected graph with 1-d features.
pub fn label_property(g: Graph, task: PropertyTask, source: usize) -> Result<Graph> {
    let dist = oracle_distances(&g)?;
    let n = g.num_nodes();
    let col = |v: Vec<usize>| Tensor::matrix(v.len(), 1, v.into_iter().map(|d| d as f64).collect());
    Ok(match task {
        PropertyTask::Diameter => g.with_targets(Targets::Graph(Tensor::scalar(diameter(&dist) as f64)))?,
        PropertyTask::Eccentricity => g.with_targets(Targets::Node(col(eccentricities(&dist))))?,
        PropertyTask::Sssp => {
            let mut feats = Vec::with_capacity(n * 2);
            for r in 0..n {
                feats.extend_from_slice(g.features().row(r));
                feats.push(if r == source { 1.0 } else { 0.0 });
            }
            let c = g.feature_width() + 1;
            g.with_features(Tensor::matrix(n, c, feats))?
                .with_targets(Targets::Node(col(dist[source].clone())))?
                .with_mark(SOURCE, source)?
        }
    })
}

fn property_graph(rng: &mut impl Rng, spec: &PropertySpec, dist: Distribution) -> Result<Graph> {
    loop {
        let n = rng.gen_range(spec.min_nodes..=spec.max_nodes);
        let edges = sample_edges(rng, dist, n);
        let feats = Tensor::matrix(n, 1, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect());
        let g = Graph::new(n, edges, feats, Targets::None)?;
        if bfs(&g.neighbors(), 0).iter().any(Option::is_none) {
            continue;
        }
        let source = rng.gen_range(0..n);
        return label_property(g, spec.task, source);
    }
}

pub fn gen_property(spec: &PropertySpec) -> Result<Dataset> {
    if spec.min_nodes < 2 || spec.min_nodes > spec.max_nodes {
        return Err(Error::Dataset(format!(
            "invalid node range [{}, {}]",
            spec.min_nodes, spec.max_nodes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut make = |count: usize| -> Result<Vec<Graph>> {
        (0..count)
            .map(|i| property_graph(&mut rng, spec, Distribution::ALL[i % Distribution::ALL.len()]))
            .collect()
    };
    Ok(Dataset {
        spec: DatasetSpec::Property(*spec),
        train: make(spec.counts.train)?,
        val: make(spec.counts.val)?,
        test: make(spec.counts.test)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: DatasetSpec,
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

pub const MANIFEST: &str = "manifest.json";

/// Write one `.graph` file per graph plus `manifest.json`.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut names = [Vec::new(), Vec::new(), Vec::new()];
    for (k, split) in [Split::Train, Split::Val, Split::Test].into_iter().enumerate() {
        for (i, g) in ds.split(split).iter().enumerate() {
            let name = format!("{split}-{i:05}.graph");
            fs::write(dir.join(&name), to_text(g))?;
            names[k].push(name);
        }
    }
    let [train, val, test] = names;
    let manifest = Manifest {
        spec: ds.spec,
        seed: ds.spec.seed(),
        train,
        val,
        test,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST))
        .map_err(|e| Error::Dataset(format!("{}: {e}", dir.join(MANIFEST).display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let m = read_manifest(dir)?;
    let load = |names: &[String]| -> Result<Vec<Graph>> {
        names
            .iter()
            .map(|name| {
                let text = fs::read_to_string(dir.join(name))?;
                from_text(&text).map_err(|e| Error::Dataset(format!("{name}: {e}")))
            })
            .collect()
    };
    Ok(Dataset {
        spec: m.spec,
        train: load(&m.train)?,
        val: load(&m.val)?,
        test: load(&m.test)?,
    })
}

/// SHA-256 over the manifest and every listed file, in manifest order.
pub fn dataset_hash(dir: &Path) -> Result<String> {
    let m = read_manifest(dir)?;
    let mut h = Sha256::new();
    h.update(fs::read(dir.join(MANIFEST))?);
    for name in m.train.iter().chain(&m.val).chain(&m.test) {
        h.update(name.as_bytes());
        h.update(fs::read(dir.join(name))?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: Vec<(usize, usize)>) -> Graph {
        Graph::new(n, edges, Tensor::zeros(n, 1), Targets::None).unwrap()
    }

    #[test]
    fn ring_and_line_layouts() {
        let (n, edges, s, t) = transfer_topology(Topology::Ring, 5).unwrap();
        assert_eq!((n, s, t, edges.len()), (10, 0, 5, 10));
        let (n, edges, s, t) = transfer_topology(Topology::Line, 3).unwrap();
        assert_eq!((n, s, t), (4, 0, 3));
        assert_eq!(edges, vec![(0, 1), (1, 2), (2, 3)]);
        assert!(transfer_topology(Topology::Ring, 1).is_err());
        assert!(transfer_topology(Topology::Line, 0).is_err());
    }

    #[test]
    fn transfer_targets_swap_endpoints() {
        let spec = TransferSpec {
            counts: SplitCounts { train: 3, val: 1, test: 1 },
            ..TransferSpec::new(Topology::CrossedRing, 5, 1)
        };
        let ds = gen_transfer(&spec).unwrap();
        for g in &ds.train {
            let (s, t) = (g.mark(SOURCE).unwrap(), g.mark(TARGET).unwrap());
            let x = g.features().data();
            let Targets::Node(y) = g.targets() else { panic!() };
            assert_eq!((x[s], x[t], y.data()[s], y.data()[t]), (1.0, 0.0, 0.0, 1.0));
            for (v, &xv) in x.iter().enumerate() {
                if v != s && v != t {
                    assert_eq!(y.data()[v], xv);
                    assert!((0.0..0.5).contains(&xv));
                }
            }
            assert_eq!(oracle_distances(g).unwrap()[s][t], 5);
        }
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(oracle_distances(&graph(2, vec![(0, 1)])).unwrap(), vec![vec![0, 1], vec![1, 0]]);
        let path = oracle_distances(&graph(3, vec![(0, 1), (1, 2)])).unwrap();
        assert_eq!(path[0][2], 2);
        assert_eq!(diameter(&path), 2);
        let cycle: Vec<_> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
        assert_eq!(eccentricities(&oracle_distances(&graph(6, cycle)).unwrap()), vec![3; 6]);
        assert_eq!(oracle_distances(&graph(3, vec![(0, 1)])), Err(GraphError::Disconnected));
    }

    #[test]
    fn star_shortest_paths() {
        let star = graph(5, (1..5).map(|v| (0, v)).collect());
        let g = label_property(star, PropertyTask::Sssp, 0).unwrap();
        let Targets::Node(y) = g.targets() else { panic!() };
        assert_eq!(y.data(), &[0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(g.feature_width(), 2);
        assert_eq!(g.mark(SOURCE), Some(0));
        assert_eq!(g.features().row(0)[1], 1.0);
    }

    #[test]
    fn generators_are_connected_and_sized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [25, 29, 31, 35] {
            for dist in Distribution::ALL {
                let g = graph(n, sample_edges(&mut rng, dist, n));
                if dist != Distribution::ErdosRenyi {
                    assert!(oracle_distances(&g).is_ok(), "{dist:?} n={n}");
                }
            }
            assert_eq!(prufer_tree(&mut rng, n).len(), n - 1);
        }
    }

    #[test]
    fn property_dataset_levels_and_determinism() {
        let spec = PropertySpec {
            counts: SplitCounts { train: 10, val: 2, test: 2 },
            ..PropertySpec::new(PropertyTask::Diameter, 7)
        };
        let a = gen_property(&spec).unwrap();
        assert_eq!(a, gen_property(&spec).unwrap());
        for g in &a.train {
            assert!((25..=35).contains(&g.num_nodes()));
            assert!(matches!(g.targets(), Targets::Graph(_)));
        }
        let ecc = gen_property(&PropertySpec {
            task: PropertyTask::Eccentricity,
            ..spec
        })
        .unwrap();
        assert!(matches!(ecc.test[0].targets(), Targets::Node(_)));
    }

    #[test]
    fn spec_text_round_trip() {
        let spec = DatasetSpec::Property(PropertySpec::new(PropertyTask::Sssp, 4));
        assert_eq!(DatasetSpec::parse(&spec.to_text()).unwrap(), spec);
        let t = DatasetSpec::parse("kind=transfer\ntopology=ring\ndistance=5\ntrain=10\n").unwrap();
        let DatasetSpec::Transfer(t) = t else { panic!() };
        assert_eq!((t.counts.train, t.counts.val), (10, 100));
        assert!(DatasetSpec::parse("kind=transfer\ntopology=ring\ndistance=5\ncolour=red\n").is_err());
    }

    #[test]
    fn write_read_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let spec = TransferSpec {
            counts: SplitCounts { train: 4, val: 2, test: 2 },
            ..TransferSpec::new(Topology::Line, 3, 9)
        };
        let ds = gen_transfer(&spec).unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), ds);
        let h1 = dataset_hash(dir.path()).unwrap();
        assert_eq!(h1.len(), 64);
        let other = tempfile::tempdir().unwrap();
        write_dataset(&ds, other.path()).unwrap();
        assert_eq!(dataset_hash(other.path()).unwrap(), h1);
    }
}
