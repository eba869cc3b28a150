//! Undirected graphs with node features, role marks and targets; GCN
//! normalization; relabeling; block-diagonal batching; a line-oriented text
//! format.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::rc::Rc;

use crate::error::GraphError;
use crate::tensor::{NodeOperator, Segments, Tensor};

pub const SOURCE: &str = "source";
pub const TARGET: &str = "target";

/// Regression labels carried by a graph.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    None,
    /// `n x o`, one row per node.
    Node(Tensor),
    /// `G x o`, one row per member graph (`G = 1` unless batched).
    Graph(Tensor),
}

impl Targets {
    pub fn arity(&self) -> usize {
        match self {
            Targets::None => 0,
            Targets::Node(t) | Targets::Graph(t) => t.cols(),
        }
    }

    pub fn tensor(&self) -> Option<&Tensor> {
        match self {
            Targets::None => None,
            Targets::Node(t) | Targets::Graph(t) => Some(t),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Targets::None => "none",
            Targets::Node(_) => "node",
            Targets::Graph(_) => "graph",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mark {
    pub role: String,
    pub node: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    features: Tensor,
    marks: Vec<Mark>,
    targets: Targets,
    /// Node counts of the member graphs, in order; `[n]` for a plain graph.
    members: Vec<usize>,
}

impl Graph {
    pub fn new(
        n: usize,
        edges: Vec<(usize, usize)>,
        features: Tensor,
        targets: Targets,
    ) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let g = Graph {
            n,
            edges,
            features,
            marks: Vec::new(),
            targets,
            members: vec![n],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_mark(mut self, role: &str, node: usize) -> Result<Self, GraphError> {
        if node >= self.n {
            return Err(GraphError::MarkOutOfRange {
                role: role.to_string(),
                node,
                n: self.n,
            });
        }
        self.marks.push(Mark {
            role: role.to_string(),
            node,
        });
        Ok(self)
    }

    pub fn with_targets(mut self, targets: Targets) -> Result<Self, GraphError> {
        self.targets = targets;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), GraphError> {
        let n = self.n;
        if self.features.rows() != n {
            return Err(GraphError::FeatureWidth {
                expected: n,
                found: self.features.rows(),
            });
        }
        let mut seen = HashSet::with_capacity(self.edges.len());
        for &(u, v) in &self.edges {
            if u >= n || v >= n {
                return Err(GraphError::EdgeOutOfRange { u, v, n });
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(GraphError::DuplicateEdge(u, v));
            }
        }
        match &self.targets {
            Targets::Node(t) if t.rows() != n => {
                return Err(GraphError::Targets(format!(
                    "node targets have {} rows for {n} nodes",
                    t.rows()
                )))
            }
            Targets::Graph(t) if t.rows() != self.members.len() => {
                return Err(GraphError::Targets(format!(
                    "graph targets have {} rows for {} member graphs",
                    t.rows(),
                    self.members.len()
                )))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_width(&self) -> usize {
        self.features.cols()
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn marks(&self) -> &[Mark] {
        &self.marks
    }

    /// First node carrying `role`, if any.
    pub fn mark(&self, role: &str) -> Option<usize> {
        self.marks.iter().find(|m| m.role == role).map(|m| m.node)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn num_members(&self) -> usize {
        self.members.len()
    }

    pub fn segments(&self) -> Segments {
        Segments::new(&self.members).expect("member sizes are positive")
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Copy with the features replaced (same node count).
    pub fn with_features(&self, features: Tensor) -> Result<Graph, GraphError> {
        let mut g = self.clone();
        g.features = features;
        g.validate()?;
        Ok(g)
    }
}

/// `D^{-1/2} (A + I) D^{-1/2}` stored as one dense block per member graph.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    blocks: Vec<AdjBlock>,
}

#[derive(Clone, Debug, PartialEq)]
struct AdjBlock {
    offset: usize,
    size: usize,
    dense: Vec<f64>,
}

pub fn normalized_adjacency(g: &Graph) -> NormalizedAdjacency {
    let deg = g.degrees();
    let inv_sqrt: Vec<f64> = deg.iter().map(|&d| 1.0 / ((d + 1) as f64).sqrt()).collect();
    let segments = g.segments();
    let mut blocks: Vec<AdjBlock> = (0..segments.count())
        .map(|s| {
            let r = segments.range(s);
            let size = r.len();
            let mut dense = vec![0.0; size * size];
            for i in 0..size {
                let gi = r.start + i;
                dense[i * size + i] = inv_sqrt[gi] * inv_sqrt[gi];
            }
            AdjBlock {
                offset: r.start,
                size,
                dense,
            }
        })
        .collect();
    let block_of = |node: usize| blocks.partition_point(|b| b.offset + b.size <= node);
    let owners: Vec<usize> = g.edges().iter().map(|&(u, _)| block_of(u)).collect();
    for (&(u, v), &b) in g.edges().iter().zip(&owners) {
        let blk = &mut blocks[b];
        let (i, j) = (u - blk.offset, v - blk.offset);
        let w = inv_sqrt[u] * inv_sqrt[v];
        blk.dense[i * blk.size + j] = w;
        blk.dense[j * blk.size + i] = w;
    }
    NormalizedAdjacency { n: g.num_nodes(), blocks }
}

impl NormalizedAdjacency {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn to_dense(&self) -> Tensor {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for b in &self.blocks {
            for i in 0..b.size {
                for j in 0..b.size {
                    out[(b.offset + i) * n + b.offset + j] = b.dense[i * b.size + j];
                }
            }
        }
        Tensor::matrix(n, n, out)
    }

    pub fn into_operator(self) -> Rc<dyn NodeOperator> {
        Rc::new(self)
    }

    fn multiply(&self, x: &Tensor, transpose: bool) -> Tensor {
        let d = x.cols();
        let mut out = vec![0.0; x.numel()];
        for b in &self.blocks {
            for i in 0..b.size {
                let orow = &mut out[(b.offset + i) * d..(b.offset + i + 1) * d];
                for j in 0..b.size {
                    let w = if transpose {
                        b.dense[j * b.size + i]
                    } else {
                        b.dense[i * b.size + j]
                    };
                    if w == 0.0 {
                        continue;
                    }
                    let xrow = x.row(b.offset + j);
                    orow.iter_mut().zip(xrow).for_each(|(o, v)| *o += w * v);
                }
            }
        }
        Tensor::matrix(x.rows(), d, out)
    }
}

impl NodeOperator for NormalizedAdjacency {
    fn size(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &Tensor) -> Tensor {
        self.multiply(x, false)
    }

    fn apply_transpose(&self, x: &Tensor) -> Tensor {
        self.multiply(x, true)
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<(), GraphError> {
    if perm.len() != n {
        return Err(GraphError::NotBijective(n));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(GraphError::NotBijective(n));
        }
    }
    Ok(())
}

/// Relabel node `i` as `perm[i]`. Only defined on unbatched graphs.
pub fn permute_graph(g: &Graph, perm: &[usize]) -> Result<Graph, GraphError> {
    check_permutation(perm, g.n)?;
    if g.members.len() != 1 {
        return Err(GraphError::Targets(
            "cannot permute a batched graph across members".into(),
        ));
    }
    let targets = match &g.targets {
        Targets::Node(t) => Targets::Node(t.permute_rows(perm)),
        other => other.clone(),
    };
    Ok(Graph {
        n: g.n,
        edges: g.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect(),
        features: g.features.permute_rows(perm),
        marks: g
            .marks
            .iter()
            .map(|m| Mark {
                role: m.role.clone(),
                node: perm[m.node],
            })
            .collect(),
        targets,
        members: g.members.clone(),
    })
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Disjoint union with node offsets. Member sizes are kept for pooling.
pub fn batch_graphs(gs: &[Graph]) -> Result<Graph, GraphError> {
    let first = gs.first().ok_or(GraphError::Empty)?;
    let c = first.feature_width();
    let arity = first.targets.arity();
    let kind = first.targets.kind();
    let mut n = 0;
    let mut edges = Vec::new();
    let mut feats = Vec::new();
    let mut marks = Vec::new();
    let mut targets = Vec::new();
    let mut members = Vec::new();
    for g in gs {
        if g.feature_width() != c {
            return Err(GraphError::FeatureWidth {
                expected: c,
                found: g.feature_width(),
            });
        }
        if g.targets.kind() != kind || g.targets.arity() != arity {
            return Err(GraphError::Targets(format!(
                "cannot batch {} targets of arity {} with {} targets of arity {}",
                kind,
                arity,
                g.targets.kind(),
                g.targets.arity()
            )));
        }
        edges.extend(g.edges.iter().map(|&(u, v)| (u + n, v + n)));
        feats.extend_from_slice(g.features.data());
        marks.extend(g.marks.iter().map(|m| Mark {
            role: m.role.clone(),
            node: m.node + n,
        }));
        if let Some(t) = g.targets.tensor() {
            targets.extend_from_slice(t.data());
        }
        members.extend_from_slice(&g.members);
        n += g.n;
    }
    let targets = match first.targets {
        Targets::None => Targets::None,
        Targets::Node(_) => Targets::Node(Tensor::matrix(n, arity, targets)),
        Targets::Graph(_) => Targets::Graph(Tensor::matrix(members.len(), arity, targets)),
    };
    Ok(Graph {
        n,
        edges,
        features: Tensor::matrix(n, c, feats),
        marks,
        targets,
        members,
    })
}

fn write_row(out: &mut String, row: &[f64]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        // Debug formatting is the shortest representation that parses back
        // to the same bits.
        write!(out, "{v:?}").unwrap();
    }
    out.push('\n');
}

/// Serialize an unbatched graph.
pub fn to_text(g: &Graph) -> String {
    let mut out = String::new();
    let o = g.targets.arity();
    writeln!(out, "{} {} {}", g.n, g.feature_width(), o).unwrap();
    for r in 0..g.n {
        write_row(&mut out, g.features.row(r));
    }
    out.push_str("edges:\n");
    for &(u, v) in &g.edges {
        writeln!(out, "{u} {v}").unwrap();
    }
    for m in &g.marks {
        writeln!(out, "mark {} {}", m.role, m.node).unwrap();
    }
    writeln!(out, "targets: {}", g.targets.kind()).unwrap();
    if let Some(t) = g.targets.tensor() {
        for r in 0..t.rows() {
            write_row(&mut out, t.row(r));
        }
    }
    out
}

pub fn from_text(text: &str) -> Result<Graph, GraphError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let perr = |line: usize, msg: String| GraphError::Parse { line, msg };
    let parse_floats = |line: usize, s: &str, expect: usize| -> Result<Vec<f64>, GraphError> {
        let vals = s
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| perr(line, format!("bad float '{t}': {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != expect {
            return Err(perr(line, format!("expected {expect} values, found {}", vals.len())));
        }
        Ok(vals)
    };
    let parse_usize = |line: usize, t: &str| -> Result<usize, GraphError> {
        t.parse::<usize>()
            .map_err(|e| perr(line, format!("bad integer '{t}': {e}")))
    };

    let (hl, header) = lines.next().ok_or_else(|| perr(1, "missing header".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| parse_usize(hl, t))
        .collect::<Result<_, _>>()?;
    let [n, c, o] = dims[..] else {
        return Err(perr(hl, format!("header must be 'n c o', got '{header}'")));
    };
    if n == 0 || c == 0 {
        return Err(perr(hl, "node count and feature width must be positive".into()));
    }
    let mut feats = Vec::with_capacity(n * c);
    for _ in 0..n {
        let (ln, l) = lines.next().ok_or_else(|| perr(hl, "missing feature rows".into()))?;
        feats.extend(parse_floats(ln, l, c)?);
    }
    let (el, e) = lines.next().ok_or_else(|| perr(hl, "missing 'edges:'".into()))?;
    if e != "edges:" {
        return Err(perr(el, format!("expected 'edges:', got '{e}'")));
    }
    let mut edges = Vec::new();
    let mut marks = Vec::new();
    let kind = loop {
        let (ln, l) = lines.next().ok_or_else(|| perr(el, "missing 'targets:'".into()))?;
        if let Some(kind) = l.strip_prefix("targets:") {
            break (ln, kind.trim().to_string());
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks[..] {
            ["mark", role, node] => marks.push((ln, role.to_string(), parse_usize(ln, node)?)),
            [u, v] => edges.push((parse_usize(ln, u)?, parse_usize(ln, v)?)),
            _ => return Err(perr(ln, format!("unexpected line '{l}'"))),
        }
    };
    let (tl, kind) = kind;
    let target_rows = match kind.as_str() {
        "none" => 0,
        "node" => n,
        "graph" => 1,
        other => return Err(perr(tl, format!("unknown target kind '{other}'"))),
    };
    if (target_rows == 0) != (o == 0) {
        return Err(perr(tl, format!("target kind '{kind}' inconsistent with arity {o}")));
    }
    let mut tdata = Vec::with_capacity(target_rows * o);
    for _ in 0..target_rows {
        let (ln, l) = lines.next().ok_or_else(|| perr(tl, "missing target rows".into()))?;
        tdata.extend(parse_floats(ln, l, o)?);
    }
    if let Some((ln, l)) = lines.next() {
        return Err(perr(ln, format!("trailing content '{l}'")));
    }
    let targets = match kind.as_str() {
        "node" => Targets::Node(Tensor::matrix(n, o, tdata)),
        "graph" => Targets::Graph(Tensor::matrix(1, o, tdata)),
        _ => Targets::None,
    };
    let mut g = Graph::new(n, edges, Tensor::matrix(n, c, feats), targets)?;
    for (_, role, node) in marks {
        g = g.with_mark(&role, node)?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path(n: usize) -> Graph {
        let edges = (0..n - 1).map(|i| (i, i + 1)).collect();
        let feats = Tensor::matrix(n, 1, (0..n).map(|i| i as f64 * 0.5).collect());
        Graph::new(n, edges, feats, Targets::None).unwrap()
    }

    #[test]
    fn single_node_adjacency_is_one() {
        let g = Graph::new(1, vec![], Tensor::zeros(1, 1), Targets::None).unwrap();
        assert_eq!(normalized_adjacency(&g).to_dense().data(), &[1.0]);
    }

    #[test]
    fn two_node_adjacency_is_half() {
        let a = normalized_adjacency(&path(2)).to_dense();
        for &v in a.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_invalid_edges() {
        let f = Tensor::zeros(3, 1);
        assert_eq!(
            Graph::new(3, vec![(0, 3)], f.clone(), Targets::None),
            Err(GraphError::EdgeOutOfRange { u: 0, v: 3, n: 3 })
        );
        assert_eq!(
            Graph::new(3, vec![(1, 1)], f.clone(), Targets::None),
            Err(GraphError::SelfLoop(1))
        );
        assert_eq!(
            Graph::new(3, vec![(0, 1), (1, 0)], f, Targets::None),
            Err(GraphError::DuplicateEdge(1, 0))
        );
    }

    #[test]
    fn permutation_relabels_edges() {
        let g = Graph::new(3, vec![(0, 1)], Tensor::zeros(3, 1), Targets::None).unwrap();
        let p = permute_graph(&g, &[2, 1, 0]).unwrap();
        assert_eq!(p.edges(), &[(2, 1)]);
        assert_eq!(permute_graph(&g, &[0, 1, 2]).unwrap(), g);
        assert_eq!(
            permute_graph(&g, &[0, 0, 1]),
            Err(GraphError::NotBijective(3))
        );
        assert!(permute_graph(&g, &[0, 1]).is_err());
    }

    #[test]
    fn batching_offsets_edges() {
        let b = batch_graphs(&[path(2), path(2)]).unwrap();
        assert_eq!(b.num_nodes(), 4);
        assert_eq!(b.edges(), &[(0, 1), (2, 3)]);
        assert_eq!(b.members(), &[2, 2]);
        assert_eq!(batch_graphs(&[path(3)]).unwrap(), path(3));
    }

    #[test]
    fn batching_rejects_mixed_widths() {
        let wide = Graph::new(2, vec![(0, 1)], Tensor::zeros(2, 2), Targets::None).unwrap();
        assert_eq!(
            batch_graphs(&[path(2), wide]),
            Err(GraphError::FeatureWidth { expected: 1, found: 2 })
        );
    }

    #[test]
    fn batched_adjacency_is_block_diagonal() {
        let (a, b) = (path(3), path(2));
        let batched = normalized_adjacency(&batch_graphs(&[a.clone(), b.clone()]).unwrap()).to_dense();
        let (da, db) = (normalized_adjacency(&a).to_dense(), normalized_adjacency(&b).to_dense());
        for i in 0..5 {
            for j in 0..5 {
                let expected = match (i < 3, j < 3) {
                    (true, true) => da.get(i, j),
                    (false, false) => db.get(i - 3, j - 3),
                    _ => 0.0,
                };
                assert_eq!(batched.get(i, j), expected);
            }
        }
    }

    #[test]
    fn text_format_example() {
        let g = Graph::new(
            2,
            vec![(0, 1)],
            Tensor::matrix(2, 1, vec![0.25, 1.0]),
            Targets::Node(Tensor::matrix(2, 1, vec![1.0, 0.25])),
        )
        .unwrap()
        .with_mark(SOURCE, 1)
        .unwrap();
        let text = to_text(&g);
        assert_eq!(
            text,
            "2 1 1\n0.25\n1.0\nedges:\n0 1\nmark source 1\ntargets: node\n1.0\n0.25\n"
        );
        assert_eq!(from_text(&text).unwrap(), g);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = from_text("2 1 0\n0.5\nabc\nedges:\ntargets: none\n").unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 3, .. }), "{err:?}");
        assert!(from_text("1 1 0\n0.5\nedges:\n0 0\ntargets: none\n").is_err());
    }

    fn arb_graph() -> impl Strategy<Value = Graph> {
        (1usize..9).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> =
                (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
            let m = pairs.len();
            (
                Just(n),
                proptest::collection::vec(any::<bool>(), m),
                proptest::collection::vec(-1e3f64..1e3, n * 2),
                proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), n),
                Just(pairs),
            )
                .prop_map(|(n, keep, feats, targ, pairs)| {
                    let edges = pairs.into_iter().zip(keep).filter(|(_, k)| *k).map(|(e, _)| e).collect();
                    Graph::new(
                        n,
                        edges,
                        Tensor::matrix(n, 2, feats),
                        Targets::Node(Tensor::matrix(n, 1, targ)),
                    )
                    .unwrap()
                })
        })
    }

    fn power_iteration_radius(a: &Tensor) -> f64 {
        let n = a.rows();
        let mut v = Tensor::matrix(n, 1, (0..n).map(|i| 1.0 + i as f64 * 0.01).collect());
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = a.matmul_raw(&v);
            let norm = w.data().iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm / v.data().iter().map(|x| x * x).sum::<f64>().sqrt();
            v = w.map(|x| x / norm);
        }
        lambda
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(g in arb_graph()) {
            let back = from_text(&to_text(&g)).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(to_text(&back), to_text(&g));
        }

        #[test]
        fn adjacency_symmetric_with_unit_radius_bound(g in arb_graph()) {
            let a = normalized_adjacency(&g).to_dense();
            prop_assert_eq!(&a, &a.transpose_raw());
            prop_assert!(power_iteration_radius(&a) <= 1.0 + 1e-9);
        }

        #[test]
        fn permutations_compose(g in arb_graph(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let n = g.num_nodes();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut p: Vec<usize> = (0..n).collect();
            let mut q: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            q.shuffle(&mut rng);
            let qp: Vec<usize> = (0..n).map(|i| q[p[i]]).collect();
            let twice = permute_graph(&permute_graph(&g, &p).unwrap(), &q).unwrap();
            prop_assert_eq!(&twice, &permute_graph(&g, &qp).unwrap());
            let back = permute_graph(&permute_graph(&g, &p).unwrap(), &inverse_permutation(&p)).unwrap();
            prop_assert_eq!(&back, &g);
        }
    }
}
