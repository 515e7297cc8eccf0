//! Connectivity and conflict graphs, link rates, shortest-path bias fields.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

pub type NodeId = usize;
pub type LinkId = usize;

/// Radius of the unit-disk connectivity model.
pub const UNIT_RADIUS: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Directed connectivity graph over nodes placed in a square.
///
/// Links are stored sorted by `(src, dst)`, so the outgoing links of a node
/// form a contiguous index range. Every link `(i, j)` has its reverse `(j, i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkGraph {
    positions: Vec<Point>,
    links: Vec<(NodeId, NodeId)>,
    offsets: Vec<usize>,
    reverse: Vec<LinkId>,
    area_side: f64,
}

impl NetworkGraph {
    /// Unit-disk graph: `(i, j)` is a link iff `i != j` and their distance is at most 1.
    pub fn unit_disk(positions: Vec<Point>, area_side: f64) -> Self {
        let n = positions.len();
        let mut links = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && positions[i].dist(&positions[j]) <= UNIT_RADIUS {
                    links.push((i, j));
                }
            }
        }
        Self::assemble(positions, area_side, links)
    }

    /// Builds a graph from an explicit link list. Each link must appear with its reverse.
    pub fn from_links(
        positions: Vec<Point>,
        area_side: f64,
        mut links: Vec<(NodeId, NodeId)>,
    ) -> Result<Self> {
        let n = positions.len();
        links.sort_unstable();
        links.dedup();
        for &(i, j) in &links {
            if i >= n || j >= n || i == j {
                return Err(Error::invalid(format!("bad link ({i}, {j}) for {n} nodes")));
            }
            if links.binary_search(&(j, i)).is_err() {
                return Err(Error::invalid(format!("link ({i}, {j}) has no reverse")));
            }
        }
        Ok(Self::assemble(positions, area_side, links))
    }

    fn assemble(positions: Vec<Point>, area_side: f64, links: Vec<(NodeId, NodeId)>) -> Self {
        let n = positions.len();
        let mut offsets = vec![0usize; n + 1];
        for &(i, _) in &links {
            offsets[i + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let reverse = links
            .iter()
            .map(|&(i, j)| {
                links
                    .binary_search(&(j, i))
                    .expect("links are symmetric")
            })
            .collect();
        Self {
            positions,
            links,
            offsets,
            reverse,
            area_side,
        }
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn area_side(&self) -> f64 {
        self.area_side
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn links(&self) -> &[(NodeId, NodeId)] {
        &self.links
    }

    pub fn link(&self, e: LinkId) -> (NodeId, NodeId) {
        self.links[e]
    }

    pub fn reverse(&self, e: LinkId) -> LinkId {
        self.reverse[e]
    }

    /// Index range of the outgoing links of `i`.
    pub fn out_links(&self, i: NodeId) -> Range<LinkId> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn degree(&self, i: NodeId) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn neighbors(&self, i: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.links[self.out_links(i)].iter().map(|&(_, j)| j)
    }

    pub fn link_id(&self, i: NodeId, j: NodeId) -> Option<LinkId> {
        if i >= self.node_count() {
            return None;
        }
        let range = self.out_links(i);
        let start = range.start;
        self.links[range]
            .binary_search_by_key(&j, |&(_, d)| d)
            .ok()
            .map(|k| start + k)
    }

    /// Mean number of neighbors per node.
    pub fn mean_degree(&self) -> f64 {
        if self.node_count() == 0 {
            return 0.0;
        }
        self.link_count() as f64 / self.node_count() as f64
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }

    /// Writes the plain-text adjacency format: `nodes <n> side <L>`, then `id x y`
    /// per node, then `src dst r_e` per directed link.
    pub fn write_adjacency<W: Write>(&self, mut w: W, rates: &[f64]) -> Result<()> {
        if rates.len() != self.link_count() {
            return Err(Error::invalid("one rate per link is required"));
        }
        writeln!(w, "nodes {} side {}", self.node_count(), self.area_side)?;
        for (id, p) in self.positions.iter().enumerate() {
            writeln!(w, "{id} {} {}", p.x, p.y)?;
        }
        for (&(i, j), r) in self.links.iter().zip(rates) {
            writeln!(w, "{i} {j} {r}")?;
        }
        Ok(())
    }

    pub fn save_adjacency(&self, path: &Path, rates: &[f64]) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_adjacency(f, rates)
    }

    /// Parses the adjacency format; returns the graph and the per-link long-term rates.
    pub fn read_adjacency<R: BufRead>(r: R, path: &Path) -> Result<(Self, Vec<f64>)> {
        let bad = |line: usize, message: &str| Error::Format {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        };
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
        let header = header?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != "nodes" || h[2] != "side" {
            return Err(bad(1, "expected `nodes <n> side <L>`"));
        }
        let n: usize = h[1].parse().map_err(|_| bad(1, "bad node count"))?;
        let side: f64 = h[3].parse().map_err(|_| bad(1, "bad side length"))?;
        let mut positions = Vec::with_capacity(n);
        let mut weighted = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 3 {
                return Err(bad(lineno, "expected three fields"));
            }
            if positions.len() < n {
                let id: usize = fields[0].parse().map_err(|_| bad(lineno, "bad node id"))?;
                if id != positions.len() {
                    return Err(bad(lineno, "node ids must be consecutive from 0"));
                }
                let x: f64 = fields[1].parse().map_err(|_| bad(lineno, "bad x"))?;
                let y: f64 = fields[2].parse().map_err(|_| bad(lineno, "bad y"))?;
                positions.push(Point::new(x, y));
            } else {
                let i: usize = fields[0].parse().map_err(|_| bad(lineno, "bad src"))?;
                let j: usize = fields[1].parse().map_err(|_| bad(lineno, "bad dst"))?;
                let rate: f64 = fields[2].parse().map_err(|_| bad(lineno, "bad rate"))?;
                weighted.push(((i, j), rate));
            }
        }
        if positions.len() != n {
            return Err(bad(n + 1, "fewer node lines than declared"));
        }
        weighted.sort_by_key(|a| a.0);
        let links = weighted.iter().map(|&(l, _)| l).collect();
        let g = Self::from_links(positions, side, links)?;
        if g.link_count() != weighted.len() {
            return Err(bad(n + 2, "duplicate links"));
        }
        let rates = weighted.into_iter().map(|(_, r)| r).collect();
        Ok((g, rates))
    }

    pub fn load_adjacency(path: &Path) -> Result<(Self, Vec<f64>)> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_adjacency(f, path)
    }
}

/// Side of the square holding `n_nodes` points at the given areal density.
pub fn area_side_for(n_nodes: usize, density: f64) -> f64 {
    (n_nodes as f64 / density).sqrt()
}

/// Uniform random points in a square, resampled as a whole until the unit-disk
/// graph over them is connected.
pub fn generate_topology(
    n_nodes: usize,
    density: f64,
    seed: u64,
    max_retries: usize,
) -> Result<NetworkGraph> {
    if n_nodes < 2 {
        return Err(Error::invalid("at least two nodes are required"));
    }
    if !(density > 0.0) || !density.is_finite() {
        return Err(Error::invalid("density must be positive"));
    }
    let side = area_side_for(n_nodes, density);
    let mut rng = rng::from_seed(seed);
    for _ in 0..=max_retries {
        let positions = (0..n_nodes)
            .map(|_| Point::new(rng.gen::<f64>() * side, rng.gen::<f64>() * side))
            .collect();
        let g = NetworkGraph::unit_disk(positions, side);
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::NoConnectedTopology {
        retries: max_retries,
    })
}

/// Conflict graph whose vertices are the directed links of a [`NetworkGraph`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConflictGraph {
    adjacency: Vec<Vec<LinkId>>,
}

impl ConflictGraph {
    /// Builds a conflict graph from explicit undirected edges over `n` vertices.
    pub fn from_edges(n: usize, edges: &[(LinkId, LinkId)]) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a != b {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
            adj.dedup();
        }
        Self { adjacency }
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, e: LinkId) -> &[LinkId] {
        &self.adjacency[e]
    }

    pub fn conflicts(&self, a: LinkId, b: LinkId) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected conflict edges `(a, b)` with `a < b`, in order.
    pub fn edges(&self) -> Vec<(LinkId, LinkId)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (a, adj) in self.adjacency.iter().enumerate() {
            out.extend(adj.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    /// Mean vertex degree over directed links.
    pub fn mean_degree(&self) -> f64 {
        if self.adjacency.is_empty() {
            return 0.0;
        }
        2.0 * self.edge_count() as f64 / self.vertex_count() as f64
    }

    /// Mean degree after merging each link with its reverse, i.e. counted per
    /// transceiver pair rather than per direction.
    pub fn mean_pair_degree(&self, g: &NetworkGraph) -> f64 {
        let mut total = 0usize;
        let mut pairs = 0usize;
        let mut seen: Vec<LinkId> = Vec::new();
        for e in 0..g.link_count() {
            let r = g.reverse(e);
            if r < e {
                continue;
            }
            seen.clear();
            seen.extend(
                self.adjacency[e]
                    .iter()
                    .chain(&self.adjacency[r])
                    .filter(|&&f| f != e && f != r)
                    .map(|&f| f.min(g.reverse(f))),
            );
            seen.sort_unstable();
            seen.dedup();
            total += seen.len();
            pairs += 1;
        }
        if pairs == 0 {
            0.0
        } else {
            total as f64 / pairs as f64
        }
    }
}

/// Interface-conflict graph: two distinct directed links conflict iff they share an endpoint.
pub fn build_conflict_graph(g: &NetworkGraph) -> ConflictGraph {
    build_conflict_graph_with(g, None)
}

/// Like [`build_conflict_graph`], optionally adding interference edges between
/// links whose closest endpoints lie within `interference_radius`.
pub fn build_conflict_graph_with(
    g: &NetworkGraph,
    interference_radius: Option<f64>,
) -> ConflictGraph {
    let n = g.node_count();
    let mut incident: Vec<Vec<LinkId>> = vec![Vec::new(); n];
    for (e, &(i, j)) in g.links().iter().enumerate() {
        incident[i].push(e);
        incident[j].push(e);
    }
    let mut adjacency: Vec<Vec<LinkId>> = vec![Vec::new(); g.link_count()];
    for links in &incident {
        for &a in links {
            adjacency[a].extend(links.iter().copied().filter(|&b| b != a));
        }
    }
    if let Some(radius) = interference_radius {
        let pos = g.positions();
        let near = |a: LinkId, b: LinkId| {
            let (ai, aj) = g.link(a);
            let (bi, bj) = g.link(b);
            [ai, aj]
                .iter()
                .any(|&u| [bi, bj].iter().any(|&v| pos[u].dist(&pos[v]) <= radius))
        };
        for a in 0..g.link_count() {
            for b in (a + 1)..g.link_count() {
                if near(a, b) {
                    adjacency[a].push(b);
                    adjacency[b].push(a);
                }
            }
        }
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
        adj.dedup();
    }
    ConflictGraph { adjacency }
}

pub const DEFAULT_RATE_BOUNDS: (f64, f64) = (10.0, 42.0);
pub const DEFAULT_RATE_NOISE_STD: f64 = 3.0;
pub const DEFAULT_RATE_HALF_WIDTH: f64 = 9.0;

/// Long-term rates for every ordered node pair, so links that appear after a
/// topology change already have a rate.
#[derive(Clone, Debug, PartialEq)]
pub struct PairRates {
    n: usize,
    rates: Vec<f64>,
}

impl PairRates {
    pub fn sample(n: usize, bounds: (f64, f64), rng: &mut SimRng) -> Self {
        let (lo, hi) = bounds;
        let rates = (0..n * n).map(|_| rng.gen_range(lo..=hi)).collect();
        Self { n, rates }
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> f64 {
        self.rates[i * self.n + j]
    }
}

/// Mean link rates `r_e` and the sampler for realized per-slot rates.
///
/// Realized rates are `N(r_e, noise_std^2)` truncated to `r_e ± half_width`
/// (by rejection), rounded to the nearest nonnegative integer.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkRateModel {
    pub long_term: Vec<f64>,
    pub noise_std: f64,
    pub half_width: f64,
}

impl LinkRateModel {
    pub fn new(long_term: Vec<f64>) -> Self {
        Self {
            long_term,
            noise_std: DEFAULT_RATE_NOISE_STD,
            half_width: DEFAULT_RATE_HALF_WIDTH,
        }
    }

    /// Uniform constant rate with no per-slot noise.
    pub fn constant(n_links: usize, rate: f64) -> Self {
        Self {
            long_term: vec![rate; n_links],
            noise_std: 0.0,
            half_width: 0.0,
        }
    }

    pub fn sample(g: &NetworkGraph, bounds: (f64, f64), rng: &mut SimRng) -> Self {
        let (lo, hi) = bounds;
        Self::new((0..g.link_count()).map(|_| rng.gen_range(lo..=hi)).collect())
    }

    pub fn from_pairs(pairs: &PairRates, g: &NetworkGraph) -> Self {
        Self::new(g.links().iter().map(|&(i, j)| pairs.get(i, j)).collect())
    }

    pub fn with_noise(mut self, noise_std: f64, half_width: f64) -> Self {
        self.noise_std = noise_std;
        self.half_width = half_width;
        self
    }

    pub fn link_count(&self) -> usize {
        self.long_term.len()
    }

    /// Draws one slot of realized rates into `out`.
    pub fn sample_realized_into(&self, rng: &mut SimRng, out: &mut Vec<u32>) {
        out.clear();
        let noise = (self.noise_std > 0.0).then(|| Normal::new(0.0, self.noise_std).unwrap());
        for &r in &self.long_term {
            let x = match &noise {
                Some(normal) => loop {
                    let d = normal.sample(rng);
                    if d.abs() <= self.half_width {
                        break r + d;
                    }
                },
                None => r,
            };
            out.push(x.round().max(0.0) as u32);
        }
    }

    pub fn sample_realized(&self, rng: &mut SimRng) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.link_count());
        self.sample_realized_into(rng, &mut out);
        out
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry(f64, NodeId);

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest weighted distance `B_i^(c)` from every node `i` to every destination `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasField {
    n: usize,
    /// Row-major by commodity: `bias[c * n + i]`.
    bias: Vec<f64>,
    pub edge_weights: Vec<f64>,
}

impl BiasField {
    /// Bias from explicit per-link weights.
    pub fn from_weights(g: &NetworkGraph, edge_weights: Vec<f64>) -> Result<Self> {
        let n = g.node_count();
        let mut bias = vec![f64::INFINITY; n * n];
        let mut heap = BinaryHeap::new();
        for c in 0..n {
            let dist = &mut bias[c * n..(c + 1) * n];
            dist[c] = 0.0;
            heap.push(HeapEntry(0.0, c));
            while let Some(HeapEntry(d, v)) = heap.pop() {
                if d > dist[v] {
                    continue;
                }
                // Relax links (u, v) entering v; they are the reverses of v's out-links.
                for e in g.out_links(v) {
                    let incoming = g.reverse(e);
                    let (u, _) = g.link(incoming);
                    let cand = d + edge_weights[incoming];
                    if cand < dist[u] {
                        dist[u] = cand;
                        heap.push(HeapEntry(cand, u));
                    }
                }
            }
            if dist.iter().any(|d| d.is_infinite()) {
                return Err(Error::Disconnected);
            }
        }
        Ok(Self {
            n,
            bias,
            edge_weights,
        })
    }

    /// All-zero bias (plain backpressure).
    pub fn zero(g: &NetworkGraph) -> Self {
        let n = g.node_count();
        Self {
            n,
            bias: vec![0.0; n * n],
            edge_weights: vec![0.0; g.link_count()],
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// `B_i^(c)`.
    pub fn get(&self, i: NodeId, c: NodeId) -> f64 {
        self.bias[c * self.n + i]
    }

    /// `B_i^(c) - B_j^(c)`.
    pub fn diff(&self, i: NodeId, j: NodeId, c: NodeId) -> f64 {
        self.get(i, c) - self.get(j, c)
    }

    /// Distances of every node to destination `c`.
    pub fn column(&self, c: NodeId) -> &[f64] {
        &self.bias[c * self.n..(c + 1) * self.n]
    }
}

/// Link weights `delta_e = mean(r) * max(r) / r_e`.
pub fn bias_edge_weights(rates: &LinkRateModel) -> Result<Vec<f64>> {
    let r = &rates.long_term;
    if r.is_empty() {
        return Ok(Vec::new());
    }
    if r.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::invalid("all long-term rates must be positive"));
    }
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let max = r.iter().copied().fold(f64::MIN, f64::max);
    Ok(r.iter().map(|&x| mean * max / x).collect())
}

pub fn compute_bias_field(g: &NetworkGraph, rates: &LinkRateModel) -> Result<BiasField> {
    if rates.link_count() != g.link_count() {
        return Err(Error::invalid("rate model does not match graph"));
    }
    BiasField::from_weights(g, bias_edge_weights(rates)?)
}

/// Edge betweenness of every directed link on the unweighted, undirected
/// connectivity graph. Both directions of a pair carry the pair's value.
pub fn edge_betweenness(g: &NetworkGraph) -> Vec<f64> {
    let n = g.node_count();
    let mut eb = vec![0.0; g.link_count()];
    let mut dist = vec![usize::MAX; n];
    let mut sigma = vec![0.0f64; n];
    let mut delta = vec![0.0f64; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        sigma.iter_mut().for_each(|x| *x = 0.0);
        delta.iter_mut().for_each(|x| *x = 0.0);
        order.clear();
        dist[s] = 0;
        sigma[s] = 1.0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for w in g.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                }
            }
        }
        for &w in order.iter().rev() {
            for e in g.out_links(w) {
                let (_, v) = g.link(e);
                // v is a predecessor of w on shortest paths from s
                if dist[v] != usize::MAX && dist[v] + 1 == dist[w] {
                    let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                    eb[e] += c;
                    delta[v] += c;
                }
            }
        }
    }
    // Each unordered pair was counted from both endpoints, once per direction.
    let mut out = vec![0.0; g.link_count()];
    for e in 0..g.link_count() {
        let r = g.reverse(e);
        out[e] = (eb[e] + eb[r]) / 2.0;
    }
    out
}

/// Links sorted by descending edge betweenness, ties by link index.
pub fn edge_betweenness_ranking(g: &NetworkGraph) -> Vec<LinkId> {
    let eb = edge_betweenness(g);
    let mut order: Vec<LinkId> = (0..g.link_count()).collect();
    order.sort_by(|&a, &b| {
        // Round to suppress float noise from accumulation order.
        let qa = (eb[a] * 1e9).round();
        let qb = (eb[b] * 1e9).round();
        qb.total_cmp(&qa).then(a.cmp(&b))
    });
    order
}

/// One-line description used in run manifests.
pub fn describe(g: &NetworkGraph) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "nodes={} links={} side={:.4} mean_degree={:.3}",
        g.node_count(),
        g.link_count(),
        g.area_side(),
        g.mean_degree()
    );
    s
}
