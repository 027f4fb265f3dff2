//! Spatial sites, orderings and nearest-neighbor parent sets.
//!
//! A [`LocationSet`] holds the distinct spatial sites plus the map from
//! each observation to its site. An [`Ordering`] arranges the sites, and
//! [`find_nn_parents`] builds the directed acyclic graph in which every
//! site conditions on its nearest predecessors in that arrangement.
//!
//! Unless stated otherwise, "position" below means an index into the
//! ordered arrangement and "site" means an index into the location set.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{NngpError, Result};
use crate::kdtree::{dist2, KdTree};
use crate::rng;

/// Distinct spatial sites and the observation-to-site map.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSet {
    dim: usize,
    coords: Vec<[f64; 3]>,
    site_of_obs: Vec<usize>,
}

impl LocationSet {
    /// One observation per site.
    pub fn new(coords: Vec<Vec<f64>>) -> Result<Self> {
        let n = coords.len();
        Self::from_parts(coords, (0..n).collect())
    }

    /// Explicit sites and observation map. Coordinates must be distinct.
    pub fn from_parts(coords: Vec<Vec<f64>>, site_of_obs: Vec<usize>) -> Result<Self> {
        let (dim, coords) = pack(&coords)?;
        let n = coords.len();
        let mut seen = vec![false; n];
        for &s in &site_of_obs {
            if s >= n {
                return Err(NngpError::InvalidInput(format!(
                    "observation refers to site {s} but there are {n} sites"
                )));
            }
            seen[s] = true;
        }
        if let Some(s) = seen.iter().position(|&v| !v) {
            return Err(NngpError::InvalidInput(format!("site {s} has no observation")));
        }
        let mut keys = HashMap::with_capacity(n);
        for (i, c) in coords.iter().enumerate() {
            if let Some(j) = keys.insert(bits(c), i) {
                return Err(NngpError::InvalidInput(format!(
                    "sites {j} and {i} share identical coordinates"
                )));
            }
        }
        Ok(Self {
            dim,
            coords,
            site_of_obs,
        })
    }

    /// Merges observations whose coordinates are bitwise equal into one
    /// site. Sites are numbered in order of first appearance.
    pub fn from_observations(obs_coords: &[Vec<f64>]) -> Result<Self> {
        let (dim, packed) = pack(obs_coords)?;
        let mut index: HashMap<[u64; 3], usize> = HashMap::new();
        let mut coords = Vec::new();
        let mut site_of_obs = Vec::with_capacity(packed.len());
        for c in packed {
            let next = coords.len();
            let s = *index.entry(bits(&c)).or_insert(next);
            if s == next {
                coords.push(c);
            }
            site_of_obs.push(s);
        }
        Ok(Self {
            dim,
            coords,
            site_of_obs,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_sites(&self) -> usize {
        self.coords.len()
    }

    pub fn n_obs(&self) -> usize {
        self.site_of_obs.len()
    }

    /// Site coordinates, zero-padded to three components.
    pub fn points(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn point(&self, site: usize) -> &[f64; 3] {
        &self.coords[site]
    }

    pub fn coords(&self, site: usize) -> &[f64] {
        &self.coords[site][..self.dim]
    }

    pub fn site_of_obs(&self) -> &[usize] {
        &self.site_of_obs
    }

    /// Number of observations at each site.
    pub fn obs_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_sites()];
        for &s in &self.site_of_obs {
            counts[s] += 1;
        }
        counts
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        dist2(&self.coords[a], &self.coords[b]).sqrt()
    }
}

fn pack(coords: &[Vec<f64>]) -> Result<(usize, Vec<[f64; 3]>)> {
    let dim = coords.first().map_or(2, |c| c.len());
    if !(2..=3).contains(&dim) {
        return Err(NngpError::InvalidInput(format!(
            "coordinates must have 2 or 3 components, got {dim}"
        )));
    }
    let mut out = Vec::with_capacity(coords.len());
    for c in coords {
        if c.len() != dim {
            return Err(NngpError::InvalidInput("mixed coordinate dimensions".into()));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(NngpError::InvalidInput("non-finite coordinate".into()));
        }
        let mut p = [0.0; 3];
        p[..dim].copy_from_slice(c);
        out.push(p);
    }
    Ok((dim, out))
}

fn bits(c: &[f64; 3]) -> [u64; 3] {
    // -0.0 and 0.0 describe the same place.
    [c[0] + 0.0, c[1] + 0.0, c[2] + 0.0].map(f64::to_bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrderingKind {
    Coordinate,
    Random,
    MaxMin,
}

impl OrderingKind {
    pub const ALL: [OrderingKind; 3] = [Self::Coordinate, Self::MaxMin, Self::Random];

    pub fn name(self) -> &'static str {
        match self {
            Self::Coordinate => "coordinate",
            Self::Random => "random",
            Self::MaxMin => "maxmin",
        }
    }
}

impl std::str::FromStr for OrderingKind {
    type Err = NngpError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coordinate" | "coord" => Ok(Self::Coordinate),
            "random" => Ok(Self::Random),
            "maxmin" | "max-min" => Ok(Self::MaxMin),
            other => Err(NngpError::InvalidInput(format!("unknown ordering '{other}'"))),
        }
    }
}

/// A permutation of the sites: `perm[position] = site`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    pub perm: Vec<usize>,
    pub kind: OrderingKind,
}

impl Ordering {
    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// `position_of[site]`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.perm.len()];
        for (k, &s) in self.perm.iter().enumerate() {
            pos[s] = k;
        }
        pos
    }

    pub fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.perm.len()];
        for &s in &self.perm {
            if s >= seen.len() || seen[s] {
                return false;
            }
            seen[s] = true;
        }
        true
    }
}

/// Builds the ordering of the requested kind.
pub fn order(locs: &LocationSet, kind: OrderingKind, seed: u64) -> Ordering {
    match kind {
        OrderingKind::Coordinate => order_coordinate(locs),
        OrderingKind::Random => order_random(locs, seed),
        OrderingKind::MaxMin => order_maxmin(locs, seed),
    }
}

/// Ascending first coordinate, then second, then site index.
pub fn order_coordinate(locs: &LocationSet) -> Ordering {
    let pts = locs.points();
    let mut perm: Vec<usize> = (0..pts.len()).collect();
    perm.sort_by(|&a, &b| {
        pts[a][0]
            .total_cmp(&pts[b][0])
            .then(pts[a][1].total_cmp(&pts[b][1]))
            .then(a.cmp(&b))
    });
    Ordering {
        perm,
        kind: OrderingKind::Coordinate,
    }
}

pub fn order_random(locs: &LocationSet, seed: u64) -> Ordering {
    let mut perm: Vec<usize> = (0..locs.n_sites()).collect();
    perm.shuffle(&mut rng::seeded(seed));
    Ordering {
        perm,
        kind: OrderingKind::Random,
    }
}

/// Max-min ordering. Starts at the site nearest the centroid (lowest index
/// on ties); each next site maximizes its minimum distance to the sites
/// already chosen. Exact ties are broken by a seeded random priority.
pub fn order_maxmin(locs: &LocationSet, seed: u64) -> Ordering {
    let pts = locs.points();
    let n = pts.len();
    if n == 0 {
        return Ordering {
            perm: vec![],
            kind: OrderingKind::MaxMin,
        };
    }
    let mut centroid = [0.0; 3];
    for p in pts {
        for a in 0..3 {
            centroid[a] += p[a];
        }
    }
    for c in &mut centroid {
        *c /= n as f64;
    }
    let mut first = 0;
    let mut best = f64::INFINITY;
    for (i, p) in pts.iter().enumerate() {
        let d = dist2(p, &centroid);
        if d < best {
            best = d;
            first = i;
        }
    }

    let mut rng = rng::seeded(seed);
    let priority: Vec<u64> = (0..n).map(|_| rng.gen()).collect();
    let mut chosen = vec![false; n];
    let mut min_d2: Vec<f64> = pts.iter().map(|p| dist2(p, &pts[first])).collect();
    let mut perm = Vec::with_capacity(n);
    chosen[first] = true;
    perm.push(first);
    for _ in 1..n {
        let mut next = usize::MAX;
        for j in 0..n {
            if chosen[j] {
                continue;
            }
            if next == usize::MAX
                || min_d2[j] > min_d2[next]
                || (min_d2[j] == min_d2[next] && priority[j] < priority[next])
            {
                next = j;
            }
        }
        chosen[next] = true;
        perm.push(next);
        let p = pts[next];
        for j in 0..n {
            if !chosen[j] {
                let d = dist2(&pts[j], &p);
                if d < min_d2[j] {
                    min_d2[j] = d;
                }
            }
        }
    }
    Ordering {
        perm,
        kind: OrderingKind::MaxMin,
    }
}

/// Directed acyclic graph of nearest-neighbor parent sets.
///
/// `parents[k]` lists positions strictly before `k`, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParentDag {
    pub order: Vec<usize>,
    pub parents: Vec<Vec<usize>>,
    pub m: usize,
}

impl ParentDag {
    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    /// Site sitting at `position`.
    pub fn site(&self, position: usize) -> usize {
        self.order[position]
    }

    /// Parent sites of the node at `position`.
    pub fn parent_sites(&self, position: usize) -> impl Iterator<Item = usize> + '_ {
        self.parents[position].iter().map(move |&p| self.order[p])
    }

    /// Every parent strictly precedes its child, lists are sorted and
    /// duplicate-free.
    pub fn is_topologically_valid(&self) -> bool {
        self.parents.iter().enumerate().all(|(i, pa)| {
            pa.iter().all(|&p| p < i) && pa.windows(2).all(|w| w[0] < w[1])
        })
    }
}

/// Each position's `min(i, m)` nearest predecessors in Euclidean distance,
/// ties broken by the smaller position.
pub fn find_nn_parents(locs: &LocationSet, ord: &Ordering, m: usize) -> Result<ParentDag> {
    if m == 0 {
        return Err(NngpError::InvalidInput("parent count m must be at least 1".into()));
    }
    if ord.len() != locs.n_sites() || !ord.is_permutation() {
        return Err(NngpError::InvalidInput(
            "ordering is not a permutation of the sites".into(),
        ));
    }
    let n = ord.len();
    let pts: Vec<[f64; 3]> = ord.perm.iter().map(|&s| *locs.point(s)).collect();

    // Trees over prefixes of doubling size: position i is answered by the
    // smallest prefix covering it, filtered to positions below i.
    let mut trees = Vec::new();
    let mut size = (m + 1).next_power_of_two();
    while size / 2 < n {
        let idx: Vec<usize> = (0..size.min(n)).collect();
        trees.push((size, KdTree::build(&pts, &idx, locs.dim())));
        size *= 2;
    }

    let parents: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            if i <= m {
                return (0..i).collect();
            }
            let tree = &trees
                .iter()
                .find(|(s, _)| *s >= i)
                .expect("prefix tree covers every position")
                .1;
            let mut pa: Vec<usize> = tree
                .nearest_below(&pts[i], m, i)
                .into_iter()
                .map(|(_, j)| j)
                .collect();
            pa.sort_unstable();
            pa
        })
        .collect();

    Ok(ParentDag {
        order: ord.perm.clone(),
        parents,
        m,
    })
}
