//! Bipartite Tanner graphs for LDGM and LDPC codes.
//!
//! Variable nodes and check nodes are indexed densely from zero. Which side
//! carries the code bits depends on the [`CodeKind`]: for LDGM codes the
//! code bits live on check nodes (each one the product of its information
//! bits), for LDPC codes they live on variable nodes.
//!
//! Depths of neighborhoods and computational trees are counted in graph
//! edges and must be even. Distances between code bits are counted in
//! same-type hops, i.e. half the edge distance.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::substream;

/// Code family carried by a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodeKind {
    Ldgm,
    Ldpc,
}

impl CodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CodeKind::Ldgm => "ldgm",
            CodeKind::Ldpc => "ldpc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ldgm" => Some(CodeKind::Ldgm),
            "ldpc" => Some(CodeKind::Ldpc),
            _ => None,
        }
    }
}

/// A node of a Tanner graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Var(usize),
    Chk(usize),
}

/// Immutable bipartite graph with both adjacency views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TannerGraph {
    n_var: usize,
    n_chk: usize,
    adj_var: Vec<Vec<usize>>,
    adj_chk: Vec<Vec<usize>>,
    kind: CodeKind,
    l_max: usize,
    k_max: usize,
}

impl TannerGraph {
    /// Builds a graph from an edge list of `(var, chk)` pairs.
    ///
    /// Parallel edges are rejected: they would cancel modulo two and change
    /// the code.
    pub fn new(
        n_var: usize,
        n_chk: usize,
        edges: &[(usize, usize)],
        kind: CodeKind,
    ) -> Result<Self> {
        let mut adj_var = vec![Vec::new(); n_var];
        let mut adj_chk = vec![Vec::new(); n_chk];
        let mut seen = HashSet::with_capacity(edges.len());
        for &(v, c) in edges {
            if v >= n_var {
                return Err(Error::IndexOutOfRange { index: v, limit: n_var });
            }
            if c >= n_chk {
                return Err(Error::IndexOutOfRange { index: c, limit: n_chk });
            }
            if !seen.insert((v, c)) {
                return Err(Error::DuplicateEdge { var: v, chk: c });
            }
            adj_var[v].push(c);
            adj_chk[c].push(v);
        }
        for list in adj_var.iter_mut().chain(adj_chk.iter_mut()) {
            list.sort_unstable();
        }
        let l_max = adj_var.iter().map(Vec::len).max().unwrap_or(0);
        let k_max = adj_chk.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self {
            n_var,
            n_chk,
            adj_var,
            adj_chk,
            kind,
            l_max,
            k_max,
        })
    }

    pub fn n_var(&self) -> usize {
        self.n_var
    }

    pub fn n_chk(&self) -> usize {
        self.n_chk
    }

    pub fn kind(&self) -> CodeKind {
        self.kind
    }

    /// Checks adjacent to variable `v`.
    pub fn var_neighbors(&self, v: usize) -> &[usize] {
        &self.adj_var[v]
    }

    /// Variables adjacent to check `c`.
    pub fn chk_neighbors(&self, c: usize) -> &[usize] {
        &self.adj_chk[c]
    }

    pub fn neighbors(&self, node: Node) -> impl Iterator<Item = Node> + '_ {
        let (list, var_side) = match node {
            Node::Var(v) => (&self.adj_var[v], true),
            Node::Chk(c) => (&self.adj_chk[c], false),
        };
        list.iter()
            .map(move |&x| if var_side { Node::Chk(x) } else { Node::Var(x) })
    }

    pub fn degree(&self, node: Node) -> usize {
        match node {
            Node::Var(v) => self.adj_var[v].len(),
            Node::Chk(c) => self.adj_chk[c].len(),
        }
    }

    /// Maximum variable degree.
    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Maximum check degree.
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Walk-growth constant `K = l_max * k_max`.
    pub fn growth_constant(&self) -> usize {
        self.l_max * self.k_max
    }

    pub fn n_edges(&self) -> usize {
        self.adj_var.iter().map(Vec::len).sum()
    }

    /// Edges as `(var, chk)` pairs, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_edges());
        for (v, list) in self.adj_var.iter().enumerate() {
            for &c in list {
                out.push((v, c));
            }
        }
        out
    }

    /// Number of code bits (checks for LDGM, variables for LDPC).
    pub fn n_code_bits(&self) -> usize {
        match self.kind {
            CodeKind::Ldgm => self.n_chk,
            CodeKind::Ldpc => self.n_var,
        }
    }

    /// Number of free spins summed over by the Gibbs measure (information
    /// bits for LDGM, code bits for LDPC).
    pub fn n_free_spins(&self) -> usize {
        self.n_var
    }

    /// Node carrying code bit `i`.
    pub fn code_bit_node(&self, i: usize) -> Node {
        match self.kind {
            CodeKind::Ldgm => Node::Chk(i),
            CodeKind::Ldpc => Node::Var(i),
        }
    }

    /// Code-bit index of `node`, or an error if it lives on the wrong side.
    pub fn code_bit_index(&self, node: Node) -> Result<usize> {
        match (self.kind, node) {
            (CodeKind::Ldgm, Node::Chk(c)) if c < self.n_chk => Ok(c),
            (CodeKind::Ldpc, Node::Var(v)) if v < self.n_var => Ok(v),
            (_, Node::Var(x)) | (_, Node::Chk(x)) => Err(Error::WrongNodeKind(x)),
        }
    }

    /// Neighbours of code bit `i` on the other side of the graph.
    pub fn code_bit_neighbors(&self, i: usize) -> &[usize] {
        match self.kind {
            CodeKind::Ldgm => &self.adj_chk[i],
            CodeKind::Ldpc => &self.adj_var[i],
        }
    }

    fn check_node(&self, node: Node) -> Result<()> {
        match node {
            Node::Var(v) if v >= self.n_var => Err(Error::IndexOutOfRange {
                index: v,
                limit: self.n_var,
            }),
            Node::Chk(c) if c >= self.n_chk => Err(Error::IndexOutOfRange {
                index: c,
                limit: self.n_chk,
            }),
            _ => Ok(()),
        }
    }

    /// Edge distances from `src` to every node (`None` when unreachable).
    /// Returned as `(var_dist, chk_dist)`.
    pub fn bfs(&self, src: Node) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
        let mut dv = vec![None; self.n_var];
        let mut dc = vec![None; self.n_chk];
        let mut queue = VecDeque::new();
        match src {
            Node::Var(v) => dv[v] = Some(0),
            Node::Chk(c) => dc[c] = Some(0),
        }
        queue.push_back(src);
        while let Some(node) = queue.pop_front() {
            let d = match node {
                Node::Var(v) => dv[v].unwrap(),
                Node::Chk(c) => dc[c].unwrap(),
            };
            for nb in self.neighbors(node) {
                let slot = match nb {
                    Node::Var(v) => &mut dv[v],
                    Node::Chk(c) => &mut dc[c],
                };
                if slot.is_none() {
                    *slot = Some(d + 1);
                    queue.push_back(nb);
                }
            }
        }
        (dv, dc)
    }

    /// Same-type hop distance between two code-bit nodes; `None` if they are
    /// in different components.
    pub fn graph_distance(&self, i: Node, j: Node) -> Result<Option<usize>> {
        self.code_bit_index(i)?;
        let j_idx = self.code_bit_index(j)?;
        let (dv, dc) = self.bfs(i);
        let d = match self.kind {
            CodeKind::Ldgm => dc[j_idx],
            CodeKind::Ldpc => dv[j_idx],
        };
        Ok(d.map(|e| e / 2))
    }

    /// All pairwise same-type hop distances between code bits.
    pub fn code_bit_distances(&self) -> Vec<Vec<Option<usize>>> {
        (0..self.n_code_bits())
            .map(|i| {
                let (dv, dc) = self.bfs(self.code_bit_node(i));
                let d = match self.kind {
                    CodeKind::Ldgm => dc,
                    CodeKind::Ldpc => dv,
                };
                d.into_iter().map(|x| x.map(|e| e / 2)).collect()
            })
            .collect()
    }

    /// Minimum same-type hop distance between two sets of variable nodes.
    pub fn var_set_distance(&self, a: &[usize], b: &[usize]) -> Option<usize> {
        let mut best: Option<usize> = None;
        for &x in a {
            let (dv, _) = self.bfs(Node::Var(x));
            for &y in b {
                if let Some(d) = dv[y] {
                    let d = d / 2;
                    best = Some(best.map_or(d, |cur| cur.min(d)));
                }
            }
        }
        best
    }

    /// Induced subgraph on the nodes within `depth` edges of `center`.
    pub fn neighborhood(&self, center: Node, depth: usize) -> Result<Neighborhood> {
        self.check_node(center)?;
        if depth % 2 != 0 {
            return Err(Error::OddDepth(depth));
        }
        let (dv, dc) = self.bfs(center);
        let within = |d: Option<usize>| d.is_some_and(|x| x <= depth);
        let var_map: Vec<usize> = (0..self.n_var).filter(|&v| within(dv[v])).collect();
        let chk_map: Vec<usize> = (0..self.n_chk).filter(|&c| within(dc[c])).collect();
        let mut var_index = vec![usize::MAX; self.n_var];
        for (k, &v) in var_map.iter().enumerate() {
            var_index[v] = k;
        }
        let mut chk_index = vec![usize::MAX; self.n_chk];
        for (k, &c) in chk_map.iter().enumerate() {
            chk_index[c] = k;
        }
        let mut edges = Vec::new();
        for &v in &var_map {
            for &c in &self.adj_var[v] {
                if chk_index[c] != usize::MAX {
                    edges.push((var_index[v], chk_index[c]));
                }
            }
        }
        let subgraph = TannerGraph::new(var_map.len(), chk_map.len(), &edges, self.kind)?;
        let is_tree = subgraph.is_forest();
        let boundary = var_map
            .iter()
            .filter(|&&v| dv[v] == Some(depth))
            .map(|&v| Node::Var(v))
            .chain(
                chk_map
                    .iter()
                    .filter(|&&c| dc[c] == Some(depth))
                    .map(|&c| Node::Chk(c)),
            )
            .collect();
        Ok(Neighborhood {
            subgraph,
            var_map,
            chk_map,
            is_tree,
            boundary,
        })
    }

    /// True iff the graph has no cycle.
    pub fn is_forest(&self) -> bool {
        let nodes = self.n_var + self.n_chk;
        let mut components = 0;
        let mut seen_v = vec![false; self.n_var];
        let mut seen_c = vec![false; self.n_chk];
        let mut stack = Vec::new();
        for start in (0..self.n_var)
            .map(Node::Var)
            .chain((0..self.n_chk).map(Node::Chk))
        {
            let seen = match start {
                Node::Var(v) => &mut seen_v[v],
                Node::Chk(c) => &mut seen_c[c],
            };
            if *seen {
                continue;
            }
            *seen = true;
            components += 1;
            stack.push(start);
            while let Some(node) = stack.pop() {
                for nb in self.neighbors(node) {
                    let s = match nb {
                        Node::Var(v) => &mut seen_v[v],
                        Node::Chk(c) => &mut seen_c[c],
                    };
                    if !*s {
                        *s = true;
                        stack.push(nb);
                    }
                }
            }
        }
        self.n_edges() + components == nodes
    }

    /// Connected components of code bits, as a label per code bit.
    pub fn code_bit_components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n_code_bits()];
        let mut next = 0;
        for i in 0..self.n_code_bits() {
            if label[i] != usize::MAX {
                continue;
            }
            let (dv, dc) = self.bfs(self.code_bit_node(i));
            let reach = match self.kind {
                CodeKind::Ldgm => dc,
                CodeKind::Ldpc => dv,
            };
            for (j, d) in reach.iter().enumerate() {
                if d.is_some() {
                    label[j] = next;
                }
            }
            next += 1;
        }
        label
    }

    /// Serializes to the line-oriented text format: a `kind n_var n_chk`
    /// header followed by one `v c` edge per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {} {}", self.kind.as_str(), self.n_var, self.n_chk).unwrap();
        for (v, c) in self.edges() {
            writeln!(out, "{v} {c}").unwrap();
        }
        out
    }

    /// Parses the text format written by [`TannerGraph::to_text`]. Blank
    /// lines and lines starting with `#` are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut header: Option<(CodeKind, usize, usize)> = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |msg: &str| Error::Parse {
                line: lineno + 1,
                msg: msg.to_string(),
            };
            if header.is_none() {
                if fields.len() != 3 {
                    return Err(parse_err("expected header `kind n_var n_chk`"));
                }
                let kind = CodeKind::parse(fields[0]).ok_or_else(|| parse_err("unknown code kind"))?;
                let nv = fields[1].parse().map_err(|_| parse_err("bad n_var"))?;
                let nc = fields[2].parse().map_err(|_| parse_err("bad n_chk"))?;
                header = Some((kind, nv, nc));
            } else {
                if fields.len() != 2 {
                    return Err(parse_err("expected edge `v c`"));
                }
                let v = fields[0].parse().map_err(|_| parse_err("bad variable index"))?;
                let c = fields[1].parse().map_err(|_| parse_err("bad check index"))?;
                edges.push((v, c));
            }
        }
        let (kind, nv, nc) = header.ok_or(Error::Parse {
            line: 0,
            msg: "missing header".into(),
        })?;
        TannerGraph::new(nv, nc, &edges, kind)
    }
}

/// Result of [`TannerGraph::neighborhood`].
#[derive(Debug, Clone)]
pub struct Neighborhood {
    pub subgraph: TannerGraph,
    /// Subgraph variable index -> original variable index.
    pub var_map: Vec<usize>,
    /// Subgraph check index -> original check index.
    pub chk_map: Vec<usize>,
    pub is_tree: bool,
    /// Original-graph nodes at exactly the neighborhood depth.
    pub boundary: Vec<Node>,
}

/// Node-perspective degree distributions `Λ(z) = Σ Λ_l z^l` and
/// `P(z) = Σ P_r z^r`. Index `d` of each vector holds the coefficient of
/// `z^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    var_coeffs: Vec<f64>,
    chk_coeffs: Vec<f64>,
}

impl DegreeDistribution {
    pub fn new(var_coeffs: Vec<f64>, chk_coeffs: Vec<f64>) -> Result<Self> {
        for (name, c) in [("variable", &var_coeffs), ("check", &chk_coeffs)] {
            if c.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidDegreeDistribution(format!(
                    "{name} coefficients must be finite and nonnegative"
                )));
            }
            if c.first().is_some_and(|&x| x != 0.0) {
                return Err(Error::InvalidDegreeDistribution(format!(
                    "{name} degree 0 must have zero weight"
                )));
            }
            let s: f64 = c.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDegreeDistribution(format!(
                    "{name} coefficients sum to {s}"
                )));
            }
        }
        Ok(Self {
            var_coeffs,
            chk_coeffs,
        })
    }

    /// Regular ensemble `Λ(z) = z^l`, `P(z) = z^r`.
    pub fn regular(l: usize, r: usize) -> Result<Self> {
        if l == 0 || r == 0 {
            return Err(Error::InvalidDegreeDistribution("degrees must be positive".into()));
        }
        let mut v = vec![0.0; l + 1];
        v[l] = 1.0;
        let mut c = vec![0.0; r + 1];
        c[r] = 1.0;
        Self::new(v, c)
    }

    pub fn var_coeffs(&self) -> &[f64] {
        &self.var_coeffs
    }

    pub fn chk_coeffs(&self) -> &[f64] {
        &self.chk_coeffs
    }

    /// `Λ'(1)`, the mean variable degree.
    pub fn var_mean(&self) -> f64 {
        mean_degree(&self.var_coeffs)
    }

    /// `P'(1)`, the mean check degree.
    pub fn chk_mean(&self) -> f64 {
        mean_degree(&self.chk_coeffs)
    }

    /// Edge-perspective variable degree distribution `l Λ_l / Λ'(1)`.
    pub fn var_edge_perspective(&self) -> Vec<f64> {
        edge_perspective(&self.var_coeffs)
    }

    /// Edge-perspective check degree distribution `r P_r / P'(1)`.
    pub fn chk_edge_perspective(&self) -> Vec<f64> {
        edge_perspective(&self.chk_coeffs)
    }

    fn is_var_regular(&self) -> bool {
        self.var_coeffs.iter().filter(|&&x| x > 0.0).count() == 1
    }

    fn is_chk_regular(&self) -> bool {
        self.chk_coeffs.iter().filter(|&&x| x > 0.0).count() == 1
    }
}

fn mean_degree(c: &[f64]) -> f64 {
    c.iter().enumerate().map(|(d, &p)| d as f64 * p).sum()
}

fn edge_perspective(c: &[f64]) -> Vec<f64> {
    let m = mean_degree(c);
    c.iter().enumerate().map(|(d, &p)| d as f64 * p / m).collect()
}

/// Draws an index from a discrete distribution given as weights.
pub(crate) fn sample_discrete(weights: &[f64], rng: &mut impl rand::Rng) -> usize {
    let u: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

const DEGREE_RETRIES: usize = 1000;
const PAIRING_RETRIES: usize = 100_000;

/// Samples a simple graph from the configuration-model ensemble.
///
/// `n` is the number of code bits: check nodes for LDGM, variable nodes for
/// LDPC. The other side's size follows from edge balance,
/// `m = n P'(1)/Λ'(1)` (LDGM) or `m = n Λ'(1)/P'(1)` (LDPC). Node degrees
/// are drawn i.i.d. from the node-perspective distributions and redrawn
/// until the socket counts balance; pairings with a parallel edge are
/// rejected and redrawn.
pub fn sample_ensemble(
    dd: &DegreeDistribution,
    n: usize,
    kind: CodeKind,
    seed: u64,
) -> Result<TannerGraph> {
    if n == 0 {
        return Err(Error::Parameter("ensemble needs at least one code bit".into()));
    }
    let (n_var, n_chk) = match kind {
        CodeKind::Ldgm => {
            let m = (n as f64 * dd.chk_mean() / dd.var_mean()).round() as usize;
            (m, n)
        }
        CodeKind::Ldpc => {
            let m = (n as f64 * dd.var_mean() / dd.chk_mean()).round() as usize;
            (n, m)
        }
    };
    if n_var == 0 || n_chk == 0 {
        return Err(Error::Sampling("ensemble side has zero nodes".into()));
    }
    let mut rng = substream(seed, 0);
    let regular = dd.is_var_regular() && dd.is_chk_regular();
    let mut degrees = None;
    for _ in 0..DEGREE_RETRIES {
        let vd: Vec<usize> = (0..n_var)
            .map(|_| sample_discrete(dd.var_coeffs(), &mut rng))
            .collect();
        let cd: Vec<usize> = (0..n_chk)
            .map(|_| sample_discrete(dd.chk_coeffs(), &mut rng))
            .collect();
        if vd.iter().sum::<usize>() == cd.iter().sum::<usize>() {
            degrees = Some((vd, cd));
            break;
        }
        if regular {
            break;
        }
    }
    let (vd, cd) = degrees.ok_or_else(|| {
        Error::Sampling(format!(
            "socket counts do not balance for {n_var} variables and {n_chk} checks"
        ))
    })?;
    let var_sockets: Vec<usize> = vd
        .iter()
        .enumerate()
        .flat_map(|(v, &d)| std::iter::repeat_n(v, d))
        .collect();
    let mut chk_sockets: Vec<usize> = cd
        .iter()
        .enumerate()
        .flat_map(|(c, &d)| std::iter::repeat_n(c, d))
        .collect();
    for _ in 0..PAIRING_RETRIES {
        chk_sockets.shuffle(&mut rng);
        let mut seen = HashSet::with_capacity(var_sockets.len());
        let simple = var_sockets
            .iter()
            .zip(&chk_sockets)
            .all(|(&v, &c)| seen.insert((v, c)));
        if simple {
            let edges: Vec<(usize, usize)> =
                var_sockets.iter().copied().zip(chk_sockets.iter().copied()).collect();
            return TannerGraph::new(n_var, n_chk, &edges, kind);
        }
    }
    Err(Error::Sampling(format!(
        "no simple pairing found in {PAIRING_RETRIES} attempts"
    )))
}

/// A self-avoiding walk alternating variable and check nodes, starting and
/// ending on variable nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SelfAvoidingWalk {
    pub vars: Vec<usize>,
    pub chks: Vec<usize>,
}

impl SelfAvoidingWalk {
    /// Number of check nodes traversed; this is the exponent used in the
    /// walk bounds.
    pub fn len(&self) -> usize {
        self.chks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chks.is_empty()
    }

    /// Number of variable nodes on the walk (`len() + 1`).
    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    /// Replays the walk against `g`: consecutive nodes must be adjacent and
    /// no node may repeat.
    pub fn is_valid_in(&self, g: &TannerGraph) -> bool {
        if self.vars.len() != self.chks.len() + 1 {
            return false;
        }
        let vs: HashSet<_> = self.vars.iter().collect();
        let cs: HashSet<_> = self.chks.iter().collect();
        if vs.len() != self.vars.len() || cs.len() != self.chks.len() {
            return false;
        }
        self.chks.iter().enumerate().all(|(m, &c)| {
            let nb = g.chk_neighbors(c);
            nb.binary_search(&self.vars[m]).is_ok() && nb.binary_search(&self.vars[m + 1]).is_ok()
        })
    }
}

/// Enumerates the self-avoiding walks from a variable in `a` to a variable
/// in `b` with at most `max_len` check nodes.
///
/// Interior variables of a walk avoid `a ∪ b`; every walk of the looser
/// family contains one of these as a sub-walk, so sums over them still bound
/// the correlations. When `a ∩ b` is nonempty the trivial walks are
/// included. Fails once more than `cap` walks have been found.
pub fn enumerate_saws(
    g: &TannerGraph,
    a: &[usize],
    b: &[usize],
    max_len: usize,
    cap: usize,
) -> Result<Vec<SelfAvoidingWalk>> {
    for &x in a.iter().chain(b) {
        if x >= g.n_var() {
            return Err(Error::IndexOutOfRange {
                index: x,
                limit: g.n_var(),
            });
        }
    }
    let mut in_a = vec![false; g.n_var()];
    let mut in_b = vec![false; g.n_var()];
    for &x in a {
        in_a[x] = true;
    }
    for &x in b {
        in_b[x] = true;
    }
    let mut starts: Vec<usize> = a.to_vec();
    starts.sort_unstable();
    starts.dedup();

    struct Dfs<'g> {
        g: &'g TannerGraph,
        in_a: Vec<bool>,
        in_b: Vec<bool>,
        max_len: usize,
        cap: usize,
        vars: Vec<usize>,
        chks: Vec<usize>,
        used_v: Vec<bool>,
        used_c: Vec<bool>,
        out: Vec<SelfAvoidingWalk>,
    }

    impl Dfs<'_> {
        fn push(&mut self) -> Result<()> {
            if self.out.len() >= self.cap {
                return Err(Error::EnumerationCap { cap: self.cap });
            }
            self.out.push(SelfAvoidingWalk {
                vars: self.vars.clone(),
                chks: self.chks.clone(),
            });
            Ok(())
        }

        fn extend(&mut self) -> Result<()> {
            if self.chks.len() >= self.max_len {
                return Ok(());
            }
            let g = self.g;
            let cur = *self.vars.last().unwrap();
            for &c in g.var_neighbors(cur) {
                if self.used_c[c] {
                    continue;
                }
                self.used_c[c] = true;
                self.chks.push(c);
                for &v in g.chk_neighbors(c) {
                    if self.used_v[v] {
                        continue;
                    }
                    self.vars.push(v);
                    if self.in_b[v] {
                        self.push()?;
                    } else if !self.in_a[v] {
                        self.used_v[v] = true;
                        self.extend()?;
                        self.used_v[v] = false;
                    }
                    self.vars.pop();
                }
                self.chks.pop();
                self.used_c[c] = false;
            }
            Ok(())
        }
    }

    let mut dfs = Dfs {
        g,
        in_a,
        in_b,
        max_len,
        cap,
        vars: Vec::new(),
        chks: Vec::new(),
        used_v: vec![false; g.n_var()],
        used_c: vec![false; g.n_chk()],
        out: Vec::new(),
    };
    for s in starts {
        dfs.vars.push(s);
        dfs.used_v[s] = true;
        if dfs.in_b[s] {
            dfs.push()?;
        }
        dfs.extend()?;
        dfs.used_v[s] = false;
        dfs.vars.pop();
    }
    Ok(dfs.out)
}

/// Default node cap for computational trees.
pub const TREE_NODE_CAP: usize = 1_000_000;

/// One node of a computational tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    /// Image of this node in the original graph.
    pub proj: Node,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
    /// Graph neighbours of `proj` cut off by the depth truncation. They act
    /// as free spins (LDGM) or unconstrained checks (LDPC).
    pub truncated: usize,
}

/// Universal covering tree of a Tanner graph, truncated at an even depth
/// (counted in edges) and rooted at a code bit.
#[derive(Debug, Clone)]
pub struct ComputationalTree {
    nodes: Vec<TreeNode>,
    depth: usize,
    kind: CodeKind,
}

impl ComputationalTree {
    /// Unrolls `g` from code bit `root` to `depth` edges.
    pub fn build(g: &TannerGraph, root: Node, depth: usize, cap: usize) -> Result<Self> {
        g.code_bit_index(root)?;
        if depth % 2 != 0 {
            return Err(Error::OddDepth(depth));
        }
        let mut nodes = vec![TreeNode {
            proj: root,
            parent: None,
            children: Vec::new(),
            depth: 0,
            truncated: 0,
        }];
        let mut frontier = 0;
        while frontier < nodes.len() {
            let t = frontier;
            frontier += 1;
            let proj = nodes[t].proj;
            let parent_proj = nodes[t].parent.map(|p| nodes[p].proj);
            let d = nodes[t].depth;
            let next: Vec<Node> = g.neighbors(proj).filter(|&nb| Some(nb) != parent_proj).collect();
            if d == depth {
                nodes[t].truncated = next.len();
                continue;
            }
            for nb in next {
                if nodes.len() >= cap {
                    return Err(Error::TreeTooLarge { cap });
                }
                let id = nodes.len();
                nodes.push(TreeNode {
                    proj: nb,
                    parent: Some(t),
                    children: Vec::new(),
                    depth: d + 1,
                    truncated: 0,
                });
                nodes[t].children.push(id);
            }
        }
        Ok(Self {
            nodes,
            depth,
            kind: g.kind(),
        })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn kind(&self) -> CodeKind {
        self.kind
    }

    /// Projection π of tree node `t`.
    pub fn proj(&self, t: usize) -> Node {
        self.nodes[t].proj
    }

    /// True when tree node `t` carries a code bit.
    pub fn is_code_bit(&self, t: usize) -> bool {
        matches!(
            (self.kind, self.nodes[t].proj),
            (CodeKind::Ldgm, Node::Chk(_)) | (CodeKind::Ldpc, Node::Var(_))
        )
    }

    /// The tree as a Tanner graph of its own (tree nodes get fresh indices),
    /// together with the projection of each new variable and check index.
    /// Truncated neighbours are not materialised.
    pub fn as_graph(&self) -> Result<(TannerGraph, Vec<usize>, Vec<usize>)> {
        let mut var_of = vec![usize::MAX; self.nodes.len()];
        let mut chk_of = vec![usize::MAX; self.nodes.len()];
        let mut var_proj = Vec::new();
        let mut chk_proj = Vec::new();
        for (t, node) in self.nodes.iter().enumerate() {
            match node.proj {
                Node::Var(v) => {
                    var_of[t] = var_proj.len();
                    var_proj.push(v);
                }
                Node::Chk(c) => {
                    chk_of[t] = chk_proj.len();
                    chk_proj.push(c);
                }
            }
        }
        let mut edges = Vec::new();
        for (t, node) in self.nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                let (v, c) = if var_of[t] != usize::MAX {
                    (var_of[t], chk_of[p])
                } else {
                    (var_of[p], chk_of[t])
                };
                edges.push((v, c));
            }
        }
        let g = TannerGraph::new(var_proj.len(), chk_proj.len(), &edges, self.kind)?;
        Ok((g, var_proj, chk_proj))
    }

    /// Tree nodes carrying code bits, with their same-type hop distance from
    /// the root.
    pub fn code_bit_nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.nodes.len())
            .filter(|&t| self.is_code_bit(t))
            .map(|t| (t, self.nodes[t].depth / 2))
    }
}

/// Random tree-shaped Tanner graph with `n_var` variables and `n_chk`
/// checks: every new node attaches to a uniformly chosen node of the other
/// type already in the tree. Used to build tree-code corpora.
pub fn random_tree(n_var: usize, n_chk: usize, kind: CodeKind, seed: u64) -> Result<TannerGraph> {
    if n_var == 0 || n_chk == 0 {
        return Err(Error::Parameter("random tree needs nodes on both sides".into()));
    }
    let mut rng = substream(seed, 0);
    let mut vars_in = vec![0usize];
    let mut chks_in: Vec<usize> = Vec::new();
    let mut edges = Vec::new();
    let (mut next_v, mut next_c) = (1usize, 0usize);
    while next_v < n_var || next_c < n_chk {
        let add_chk = next_c < n_chk && (next_v >= n_var || chks_in.is_empty() || rng.random_bool(0.5));
        if add_chk {
            let v = vars_in[rng.random_range(0..vars_in.len())];
            edges.push((v, next_c));
            chks_in.push(next_c);
            next_c += 1;
        } else {
            let c = chks_in[rng.random_range(0..chks_in.len())];
            edges.push((next_v, c));
            vars_in.push(next_v);
            next_v += 1;
        }
    }
    TannerGraph::new(n_var, n_chk, &edges, kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> TannerGraph {
        TannerGraph::new(2, 1, &[(0, 0), (1, 0)], CodeKind::Ldgm).unwrap()
    }

    fn repetition3() -> TannerGraph {
        TannerGraph::new(3, 2, &[(0, 0), (1, 0), (1, 1), (2, 1)], CodeKind::Ldpc).unwrap()
    }

    fn four_cycle(kind: CodeKind) -> TannerGraph {
        TannerGraph::new(2, 2, &[(0, 0), (1, 0), (0, 1), (1, 1)], kind).unwrap()
    }

    #[test]
    fn build_small_graphs() {
        let g = path();
        assert_eq!(g.degree(Node::Var(0)), 1);
        assert_eq!(g.degree(Node::Var(1)), 1);
        assert_eq!(g.degree(Node::Chk(0)), 2);
        let r = repetition3();
        assert_eq!(r.n_code_bits(), 3);
        assert_eq!((r.l_max(), r.k_max()), (2, 2));
        assert_eq!(r.chk_neighbors(1), &[1, 2]);
    }

    #[test]
    fn duplicate_and_out_of_range_edges_rejected() {
        assert_eq!(
            TannerGraph::new(1, 1, &[(0, 0), (0, 0)], CodeKind::Ldpc),
            Err(Error::DuplicateEdge { var: 0, chk: 0 })
        );
        assert!(matches!(
            TannerGraph::new(1, 1, &[(1, 0)], CodeKind::Ldpc),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn distances() {
        let r = repetition3();
        assert_eq!(r.graph_distance(Node::Var(0), Node::Var(0)).unwrap(), Some(0));
        assert_eq!(r.graph_distance(Node::Var(0), Node::Var(2)).unwrap(), Some(2));
        let disc = TannerGraph::new(2, 2, &[(0, 0), (1, 1)], CodeKind::Ldpc).unwrap();
        assert_eq!(disc.graph_distance(Node::Var(0), Node::Var(1)).unwrap(), None);
        assert_eq!(
            r.graph_distance(Node::Chk(0), Node::Var(1)),
            Err(Error::WrongNodeKind(0))
        );
    }

    #[test]
    fn neighborhoods() {
        let r = repetition3();
        let n0 = r.neighborhood(Node::Var(1), 0).unwrap();
        assert_eq!(n0.var_map, vec![1]);
        assert!(n0.chk_map.is_empty());
        assert!(n0.is_tree);
        let c = four_cycle(CodeKind::Ldpc);
        for start in [Node::Var(0), Node::Var(1), Node::Chk(0), Node::Chk(1)] {
            let nb = c.neighborhood(start, 2).unwrap();
            assert_eq!(nb.subgraph.n_edges(), 4);
            assert!(!nb.is_tree);
        }
        assert!(r.neighborhood(Node::Var(0), 4).unwrap().is_tree);
        assert_eq!(r.neighborhood(Node::Var(0), 3).unwrap_err(), Error::OddDepth(3));
    }

    #[test]
    fn computational_trees() {
        let r = repetition3();
        for d in [0, 2, 4, 6] {
            let t = ComputationalTree::build(&r, Node::Var(0), d, TREE_NODE_CAP).unwrap();
            let nb = r.neighborhood(Node::Var(0), d).unwrap();
            assert_eq!(t.len(), nb.var_map.len() + nb.chk_map.len());
        }
        let c = four_cycle(CodeKind::Ldpc);
        let t = ComputationalTree::build(&c, Node::Var(0), 4, TREE_NODE_CAP).unwrap();
        // root, two checks, var 1 twice, two checks again, var 0 twice
        assert_eq!(t.len(), 1 + 2 + 2 + 2 + 2);
        let copies_of_v1 = t.nodes().iter().filter(|n| n.proj == Node::Var(1)).count();
        assert_eq!(copies_of_v1, 2);
        let copies_of_v0 = t.nodes().iter().filter(|n| n.proj == Node::Var(0)).count();
        assert_eq!(copies_of_v0, 3);
        let t0 = ComputationalTree::build(&c, Node::Var(1), 0, TREE_NODE_CAP).unwrap();
        assert_eq!(t0.len(), 1);
        assert_eq!(t0.nodes()[0].truncated, 2);
        assert!(matches!(
            ComputationalTree::build(&c, Node::Var(0), 40, 50),
            Err(Error::TreeTooLarge { cap: 50 })
        ));
    }

    #[test]
    fn tree_projections_are_graph_edges() {
        let g = sample_ensemble(&DegreeDistribution::regular(2, 3).unwrap(), 8, CodeKind::Ldgm, 5).unwrap();
        let t = ComputationalTree::build(&g, Node::Chk(0), 6, TREE_NODE_CAP).unwrap();
        for node in t.nodes() {
            assert!(node.depth <= 6);
            if let Some(p) = node.parent {
                let pp = t.proj(p);
                assert!(g.neighbors(pp).any(|x| x == node.proj));
            }
        }
    }

    #[test]
    fn saw_examples() {
        let p = path();
        let w = enumerate_saws(&p, &[0], &[1], 10, 1000).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].len(), 1);
        let c = four_cycle(CodeKind::Ldgm);
        let w = enumerate_saws(&c, &[0], &[1], 10, 1000).unwrap();
        assert_eq!(w.len(), 2);
        assert!(w.iter().all(|x| x.len() == 1 && x.is_valid_in(&c)));
        let w = enumerate_saws(&c, &[0], &[0], 10, 1000).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].len(), 0);
        assert!(matches!(
            enumerate_saws(&c, &[0], &[1], 10, 1),
            Err(Error::EnumerationCap { cap: 1 })
        ));
    }

    #[test]
    fn ensemble_regular_degrees_and_determinism() {
        let dd = DegreeDistribution::regular(2, 3).unwrap();
        let g = sample_ensemble(&dd, 12, CodeKind::Ldgm, 3).unwrap();
        assert_eq!(g.n_chk(), 12);
        assert_eq!(g.n_var(), 18);
        assert!((0..g.n_var()).all(|v| g.degree(Node::Var(v)) == 2));
        assert!((0..g.n_chk()).all(|c| g.degree(Node::Chk(c)) == 3));
        let h = sample_ensemble(&dd, 12, CodeKind::Ldgm, 3).unwrap();
        assert_eq!(g.edges(), h.edges());
        let ldpc = sample_ensemble(&dd, 12, CodeKind::Ldpc, 3).unwrap();
        assert_eq!((ldpc.n_var(), ldpc.n_chk()), (12, 8));
    }

    #[test]
    fn ensemble_socket_balance() {
        // 10 degree-2 variables give 20 sockets; checks of degree 2 balance
        // with 10 checks, checks of degree 3 cannot balance.
        let counter = |n_var: usize, l: usize, r: usize| {
            let sockets = n_var * l;
            (sockets % r == 0).then_some(sockets / r)
        };
        assert_eq!(counter(10, 2, 2), Some(10));
        assert_eq!(counter(10, 2, 3), None);
        let g = sample_ensemble(&DegreeDistribution::regular(2, 2).unwrap(), 10, CodeKind::Ldpc, 1).unwrap();
        assert_eq!(g.n_chk(), 10);
        assert_eq!(g.n_edges(), 20);
        let unbalanced = sample_ensemble(&DegreeDistribution::regular(2, 3).unwrap(), 10, CodeKind::Ldpc, 1);
        assert!(matches!(unbalanced, Err(Error::Sampling(_))));
    }

    #[test]
    fn irregular_ensemble_balances() {
        let dd = DegreeDistribution::new(vec![0.0, 0.0, 0.5, 0.5], vec![0.0, 0.0, 0.0, 0.5, 0.5]).unwrap();
        let g = sample_ensemble(&dd, 14, CodeKind::Ldpc, 9).unwrap();
        let var_sockets: usize = (0..g.n_var()).map(|v| g.degree(Node::Var(v))).sum();
        let chk_sockets: usize = (0..g.n_chk()).map(|c| g.degree(Node::Chk(c))).sum();
        assert_eq!(var_sockets, chk_sockets);
        assert!(g.l_max() <= 3 && g.k_max() <= 4);
    }

    #[test]
    fn text_round_trip() {
        let r = repetition3();
        let text = r.to_text();
        assert!(text.starts_with("ldpc 3 2\n"));
        assert_eq!(TannerGraph::from_text(&text).unwrap(), r);
        assert!(matches!(
            TannerGraph::from_text("ldpc 2\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn random_trees_are_trees() {
        for seed in 0..20 {
            let g = random_tree(5, 4, CodeKind::Ldpc, seed).unwrap();
            assert!(g.is_forest());
            assert_eq!(g.n_edges(), 8);
        }
    }
}
