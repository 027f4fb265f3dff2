//! Moral graphs of the parent DAG, vertex colorings, and block graphs.
//!
//! The latent field is Markov with respect to the moral graph, so sites
//! sharing a color are conditionally independent given the rest and can be
//! updated together. Vertices are DAG positions.

use rand::Rng;

use crate::error::{NngpError, Result};
use crate::geo::{LocationSet, ParentDag};
use crate::kdtree::dist2;
use crate::rng;

/// Undirected simple graph in adjacency-list form, lists sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoralGraph {
    adjacency: Vec<Vec<usize>>,
}

impl MoralGraph {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for (a, b) in edges {
            if a != b {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Self { adjacency }
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, l)| l.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
    }
}

/// Un-directs the DAG edges and marries every pair of co-parents.
pub fn moralize(dag: &ParentDag) -> MoralGraph {
    let mut edges = Vec::new();
    for (i, pa) in dag.parents.iter().enumerate() {
        for (a, &p) in pa.iter().enumerate() {
            edges.push((p, i));
            for &q in &pa[a + 1..] {
                edges.push((p, q));
            }
        }
    }
    MoralGraph::from_edges(dag.len(), edges)
}

/// Vertex colors in `1..=n_colors`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    pub color: Vec<u32>,
    pub n_colors: u32,
}

impl Coloring {
    /// No edge joins two vertices of the same color and the colors used
    /// are exactly `1..=n_colors`.
    pub fn is_valid(&self, g: &MoralGraph) -> bool {
        if self.color.len() != g.n() {
            return false;
        }
        if g.edges().any(|(a, b)| self.color[a] == self.color[b]) {
            return false;
        }
        let mut used = vec![false; self.n_colors as usize + 1];
        for &c in &self.color {
            if c == 0 || c > self.n_colors {
                return false;
            }
            used[c as usize] = true;
        }
        used[1..].iter().all(|&u| u)
    }

    /// Vertices grouped by color, each group sorted.
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_colors as usize];
        for (v, &c) in self.color.iter().enumerate() {
            out[c as usize - 1].push(v);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColoringAlgorithm {
    Naive,
    Degree,
    Dsatur,
}

impl ColoringAlgorithm {
    pub const ALL: [ColoringAlgorithm; 3] = [Self::Degree, Self::Dsatur, Self::Naive];

    pub fn name(self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::Degree => "degree",
            Self::Dsatur => "dsatur",
        }
    }
}

impl std::str::FromStr for ColoringAlgorithm {
    type Err = NngpError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(Self::Naive),
            "degree" => Ok(Self::Degree),
            "dsatur" => Ok(Self::Dsatur),
            other => Err(NngpError::InvalidInput(format!("unknown coloring algorithm '{other}'"))),
        }
    }
}

pub fn color(g: &MoralGraph, algorithm: ColoringAlgorithm) -> Coloring {
    match algorithm {
        ColoringAlgorithm::Naive => color_naive(g),
        ColoringAlgorithm::Degree => color_degree(g),
        ColoringAlgorithm::Dsatur => color_dsatur(g),
    }
}

/// Smallest color not used by an already colored neighbor.
fn smallest_free(g: &MoralGraph, v: usize, color: &[u32], stamp: &mut [usize]) -> u32 {
    for &u in g.neighbors(v) {
        let c = color[u] as usize;
        if c != 0 {
            stamp[c] = v + 1;
        }
    }
    let mut c = 1;
    while stamp[c] == v + 1 {
        c += 1;
    }
    c as u32
}

fn greedy_in_order(g: &MoralGraph, visit: impl Iterator<Item = usize>) -> Coloring {
    let n = g.n();
    let mut color = vec![0u32; n];
    let mut stamp = vec![0usize; g.max_degree() + 2];
    let mut n_colors = 0;
    for v in visit {
        let c = smallest_free(g, v, &color, &mut stamp);
        color[v] = c;
        n_colors = n_colors.max(c);
    }
    Coloring { color, n_colors }
}

/// Greedy coloring visiting vertices in stored order.
pub fn color_naive(g: &MoralGraph) -> Coloring {
    greedy_in_order(g, 0..g.n())
}

/// Greedy coloring visiting vertices by nonincreasing degree, ties by index.
pub fn color_degree(g: &MoralGraph) -> Coloring {
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.sort_by(|&a, &b| g.degree(b).cmp(&g.degree(a)).then(a.cmp(&b)));
    greedy_in_order(g, order.into_iter())
}

/// DSATUR: repeatedly colors the uncolored vertex seeing the most distinct
/// neighbor colors, ties broken by degree and then by lowest index.
pub fn color_dsatur(g: &MoralGraph) -> Coloring {
    let n = g.n();
    let words = (g.max_degree() + 2).div_ceil(64);
    let mut seen = vec![0u64; n * words];
    let mut saturation = vec![0usize; n];
    let mut color = vec![0u32; n];
    let mut stamp = vec![0usize; g.max_degree() + 2];
    let mut n_colors = 0;
    for _ in 0..n {
        let mut best = usize::MAX;
        for v in 0..n {
            if color[v] != 0 {
                continue;
            }
            if best == usize::MAX
                || saturation[v] > saturation[best]
                || (saturation[v] == saturation[best] && g.degree(v) > g.degree(best))
            {
                best = v;
            }
        }
        let c = smallest_free(g, best, &color, &mut stamp);
        color[best] = c;
        n_colors = n_colors.max(c);
        let (word, bit) = ((c as usize) / 64, 1u64 << (c as usize % 64));
        for &u in g.neighbors(best) {
            if color[u] == 0 && seen[u * words + word] & bit == 0 {
                seen[u * words + word] |= bit;
                saturation[u] += 1;
            }
        }
    }
    Coloring { color, n_colors }
}

/// Cluster label per vertex, in `1..=k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    pub block_of: Vec<usize>,
    pub k: usize,
}

impl BlockPartition {
    /// Re-indexes a site partition by DAG position.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            block_of: order.iter().map(|&s| self.block_of[s]).collect(),
            k: self.k,
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &b in &self.block_of {
            s[b - 1] += 1;
        }
        s
    }
}

const KMEANS_MAX_ITER: usize = 100;

/// K-means (k-means++ seeding, Lloyd iterations) on the site coordinates.
/// Clusters that empty out are reseeded at the point farthest from its
/// current center.
pub fn partition_blocks(locs: &LocationSet, k: usize, seed: u64) -> Result<BlockPartition> {
    let pts = locs.points();
    let n = pts.len();
    if k == 0 || k > n {
        return Err(NngpError::InvalidInput(format!(
            "block count must lie in 1..={n}, got {k}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut centers: Vec<[f64; 3]> = Vec::with_capacity(k);
    centers.push(pts[rng.gen_range(0..n)]);
    let mut d2: Vec<f64> = pts.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    pick = i;
                    if u < d {
                        break;
                    }
                    u -= d;
                }
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        let c = pts[next];
        centers.push(c);
        for (i, p) in pts.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &c));
        }
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let changed = assign_points(pts, &centers, &mut assign);
        let empty = recompute_centers(pts, &mut centers, &mut assign);
        if !changed && !empty {
            break;
        }
    }
    // Final guarantee that every block is populated.
    while recompute_centers(pts, &mut centers, &mut assign) {}
    Ok(BlockPartition {
        block_of: assign.iter().map(|a| a + 1).collect(),
        k,
    })
}

fn assign_points(pts: &[[f64; 3]], centers: &[[f64; 3]], assign: &mut [usize]) -> bool {
    let mut changed = false;
    for (i, p) in pts.iter().enumerate() {
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (c, ctr) in centers.iter().enumerate() {
            let d = dist2(p, ctr);
            if d < bd {
                bd = d;
                best = c;
            }
        }
        if assign[i] != best {
            assign[i] = best;
            changed = true;
        }
    }
    changed
}

/// Moves centers to their cluster means. An empty cluster takes over the
/// point farthest from its center (among clusters with two or more
/// points); returns whether that happened.
fn recompute_centers(pts: &[[f64; 3]], centers: &mut [[f64; 3]], assign: &mut [usize]) -> bool {
    let k = centers.len();
    let mut sums = vec![[0.0; 3]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in pts.iter().zip(assign.iter()) {
        counts[a] += 1;
        for d in 0..3 {
            sums[a][d] += p[d];
        }
    }
    let mut reseeded = false;
    for c in 0..k {
        if counts[c] == 0 {
            let far = (0..pts.len())
                .filter(|&i| counts[assign[i]] > 1)
                .max_by(|&i, &j| {
                    dist2(&pts[i], &centers[assign[i]])
                        .total_cmp(&dist2(&pts[j], &centers[assign[j]]))
                        .then(j.cmp(&i))
                })
                .expect("k <= n leaves a cluster with two points");
            let old = assign[far];
            counts[old] -= 1;
            for d in 0..3 {
                sums[old][d] -= pts[far][d];
            }
            assign[far] = c;
            counts[c] = 1;
            sums[c] = pts[far];
            reseeded = true;
        }
    }
    for c in 0..k {
        for d in 0..3 {
            centers[c][d] = sums[c][d] / counts[c] as f64;
        }
    }
    reseeded
}

/// Graph on blocks: two blocks are adjacent iff some edge of `g` joins
/// them. Block `b` becomes vertex `b - 1`.
pub fn block_graph(g: &MoralGraph, p: &BlockPartition) -> Result<MoralGraph> {
    if p.block_of.len() != g.n() {
        return Err(NngpError::InvalidInput(format!(
            "partition covers {} vertices, graph has {}",
            p.block_of.len(),
            g.n()
        )));
    }
    let edges = g
        .edges()
        .map(|(a, b)| (p.block_of[a] - 1, p.block_of[b] - 1))
        .filter(|(a, b)| a != b);
    Ok(MoralGraph::from_edges(p.k, edges))
}
