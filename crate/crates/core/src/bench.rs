//! Coloring experiments over a factorial design and the variance-based
//! sensitivity analysis of their outcomes.

use std::collections::HashMap;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{NngpError, Result};
use crate::geo::{find_nn_parents, order, LocationSet, OrderingKind};
use crate::graph::{color, moralize, ColoringAlgorithm};
use crate::rng;

/// Full factorial design of coloring experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchDesign {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub d: Vec<usize>,
    pub orderings: Vec<OrderingKind>,
    pub algorithms: Vec<ColoringAlgorithm>,
    pub reps: usize,
    pub seed: u64,
}

impl BenchDesign {
    /// The small-graph pilot grid: three sizes, three parent counts, two
    /// dimensions, three orderings and three algorithms.
    pub fn pilot(reps: usize, seed: u64) -> Self {
        Self {
            n: vec![500, 1000, 2000],
            m: vec![5, 10, 20],
            d: vec![2, 3],
            orderings: OrderingKind::ALL.to_vec(),
            algorithms: ColoringAlgorithm::ALL.to_vec(),
            reps,
            seed,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n.len() * self.m.len() * self.d.len() * self.orderings.len() * self.algorithms.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub ordering: OrderingKind,
    pub algorithm: ColoringAlgorithm,
    pub rep: usize,
    pub n_colors: u32,
    pub time_ms: f64,
}

/// CSV header of [`BenchRow`] tables.
pub const BENCH_COLUMNS: [&str; 8] = ["n", "m", "d", "ordering", "algorithm", "rep", "n_colors", "time_ms"];

fn cell_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut r = rng::seeded(seed);
    let mut h: u64 = r.gen();
    for &p in parts {
        h = rng::seeded(h ^ p.wrapping_mul(0x9E37_79B9_7F4A_7C15)).gen();
    }
    h
}

/// Uniform sites in the unit cube; the same `(n, d, rep)` gives the same
/// sites for every ordering and parent count.
pub fn bench_sites(seed: u64, n: usize, d: usize, rep: usize) -> LocationSet {
    let mut r = rng::seeded(cell_seed(seed, &[n as u64, d as u64, rep as u64]));
    let coords = (0..n).map(|_| (0..d).map(|_| r.gen::<f64>()).collect()).collect();
    LocationSet::new(coords).expect("continuous uniforms are distinct")
}

/// Runs every design cell `reps` times. Each replicate builds one graph,
/// which every algorithm then colors; only the coloring call is timed.
pub fn bench_coloring(design: &BenchDesign) -> Result<Vec<BenchRow>> {
    let mut graphs = Vec::new();
    for &n in &design.n {
        for &m in &design.m {
            for &d in &design.d {
                for &ordering in &design.orderings {
                    for rep in 0..design.reps {
                        graphs.push((n, m, d, ordering, rep));
                    }
                }
            }
        }
    }
    let rows: Vec<Vec<BenchRow>> = graphs
        .into_par_iter()
        .map(|(n, m, d, ordering, rep)| {
            let locs = bench_sites(design.seed, n, d, rep);
            let ord_seed = cell_seed(design.seed, &[n as u64, d as u64, rep as u64, 1]);
            let ord = order(&locs, ordering, ord_seed);
            let dag = find_nn_parents(&locs, &ord, m)?;
            let g = moralize(&dag);
            Ok(design
                .algorithms
                .iter()
                .map(|&algorithm| {
                    let start = Instant::now();
                    let c = color(&g, algorithm);
                    let time_ms = start.elapsed().as_secs_f64() * 1e3;
                    debug_assert!(c.is_valid(&g));
                    BenchRow {
                        n,
                        m,
                        d,
                        ordering,
                        algorithm,
                        rep,
                        n_colors: c.n_colors,
                        time_ms,
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Response table with categorical factors.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    pub factors: Vec<String>,
    pub levels: Vec<Vec<String>>,
    pub response: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Response {
    Colors,
    Time,
}

/// Factor names used for coloring tables, in reporting order.
pub const BENCH_FACTORS: [&str; 5] = ["ordering", "algo", "d", "m", "n"];

impl FactorTable {
    pub fn from_bench(rows: &[BenchRow], response: Response) -> Self {
        Self {
            factors: BENCH_FACTORS.iter().map(|s| s.to_string()).collect(),
            levels: rows
                .iter()
                .map(|r| {
                    vec![
                        r.ordering.name().to_string(),
                        r.algorithm.name().to_string(),
                        r.d.to_string(),
                        r.m.to_string(),
                        r.n.to_string(),
                    ]
                })
                .collect(),
            response: rows
                .iter()
                .map(|r| match response {
                    Response::Colors => r.n_colors as f64,
                    Response::Time => r.time_ms,
                })
                .collect(),
        }
    }
}

/// Percent of the total sum of squares per effect.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivity {
    /// `(effect name, percent)`; main effects first, then two-way
    /// interactions named `a:b`.
    pub effects: Vec<(String, f64)>,
    pub total_ss: f64,
}

impl Sensitivity {
    pub fn get(&self, effect: &str) -> Option<f64> {
        self.effects.iter().find(|(e, _)| e == effect).map(|e| e.1)
    }

    pub fn explained(&self) -> f64 {
        self.effects.iter().map(|e| e.1).sum()
    }
}

/// Main-effect and two-way interaction sums of squares of a balanced full
/// factorial table, as percentages of the total sum of squares.
pub fn variance_sensitivity(table: &FactorTable) -> Result<Sensitivity> {
    let nf = table.factors.len();
    let nrows = table.response.len();
    if nrows == 0 || table.levels.len() != nrows {
        return Err(NngpError::UnbalancedDesign("empty or ragged table".into()));
    }
    if table.levels.iter().any(|l| l.len() != nf) {
        return Err(NngpError::UnbalancedDesign("row with wrong factor count".into()));
    }
    // Encode levels as integers per factor.
    let mut codes = vec![vec![0usize; nf]; nrows];
    let mut n_levels = vec![0usize; nf];
    for f in 0..nf {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (r, row) in table.levels.iter().enumerate() {
            let next = seen.len();
            codes[r][f] = *seen.entry(row[f].as_str()).or_insert(next);
        }
        n_levels[f] = seen.len();
    }
    let mut cells: HashMap<&[usize], usize> = HashMap::new();
    for c in &codes {
        *cells.entry(c.as_slice()).or_default() += 1;
    }
    let n_cells: usize = n_levels.iter().product();
    let per_cell = cells.values().next().copied().unwrap_or(0);
    if cells.len() != n_cells || cells.values().any(|&c| c != per_cell) {
        return Err(NngpError::UnbalancedDesign(format!(
            "{} of {} cells present, counts not all equal",
            cells.len(),
            n_cells
        )));
    }

    let grand = table.response.iter().sum::<f64>() / nrows as f64;
    let total_ss: f64 = table.response.iter().map(|y| (y - grand).powi(2)).sum();

    let margin = |f: usize| {
        let mut sum = vec![0.0; n_levels[f]];
        let mut cnt = vec![0usize; n_levels[f]];
        for (c, y) in codes.iter().zip(&table.response) {
            sum[c[f]] += y;
            cnt[c[f]] += 1;
        }
        let means: Vec<f64> = sum.iter().zip(&cnt).map(|(s, &k)| s / k as f64).collect();
        (means, cnt)
    };
    let margins: Vec<_> = (0..nf).map(margin).collect();

    let pct = |ss: f64| if total_ss > 0.0 { 100.0 * ss / total_ss } else { 0.0 };
    let mut effects = Vec::new();
    for f in 0..nf {
        let (means, cnt) = &margins[f];
        let ss: f64 = means
            .iter()
            .zip(cnt)
            .map(|(m, &k)| k as f64 * (m - grand).powi(2))
            .sum();
        effects.push((table.factors[f].clone(), pct(ss)));
    }
    for a in 0..nf {
        for b in a + 1..nf {
            let (la, lb) = (n_levels[a], n_levels[b]);
            let mut sum = vec![0.0; la * lb];
            let mut cnt = vec![0usize; la * lb];
            for (c, y) in codes.iter().zip(&table.response) {
                sum[c[a] * lb + c[b]] += y;
                cnt[c[a] * lb + c[b]] += 1;
            }
            let mut ss = 0.0;
            for i in 0..la {
                for j in 0..lb {
                    let k = cnt[i * lb + j] as f64;
                    let mean = sum[i * lb + j] / k;
                    let inter = mean - margins[a].0[i] - margins[b].0[j] + grand;
                    ss += k * inter * inter;
                }
            }
            effects.push((format!("{}:{}", table.factors[a], table.factors[b]), pct(ss)));
        }
    }
    Ok(Sensitivity { effects, total_ss })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: Vec<(Vec<&str>, f64)>, factors: &[&str]) -> FactorTable {
        FactorTable {
            factors: factors.iter().map(|s| s.to_string()).collect(),
            levels: rows.iter().map(|r| r.0.iter().map(|s| s.to_string()).collect()).collect(),
            response: rows.iter().map(|r| r.1).collect(),
        }
    }

    #[test]
    fn single_factor_explains_everything() {
        let mut rows = Vec::new();
        for a in ["x", "y", "z"] {
            for b in ["p", "q"] {
                let y = match a {
                    "x" => 1.0,
                    "y" => 4.0,
                    _ => 9.0,
                };
                rows.push((vec![a, b], y));
                rows.push((vec![a, b], y));
            }
        }
        let s = variance_sensitivity(&table(rows, &["a", "b"])).unwrap();
        assert!((s.get("a").unwrap() - 100.0).abs() < 1e-10);
        assert!(s.get("b").unwrap().abs() < 1e-10);
        assert!(s.get("a:b").unwrap().abs() < 1e-10);
    }

    #[test]
    fn constant_response_gives_zeros() {
        let rows = vec![(vec!["x", "p"], 2.0), (vec!["x", "q"], 2.0), (vec!["y", "p"], 2.0), (vec!["y", "q"], 2.0)];
        let s = variance_sensitivity(&table(rows, &["a", "b"])).unwrap();
        assert_eq!(s.total_ss, 0.0);
        assert!(s.effects.iter().all(|e| e.1 == 0.0));
    }

    #[test]
    fn additive_split_is_recovered() {
        // a effects +-sqrt(0.7), b effects +-sqrt(0.3): balanced 2x2 gives a
        // 70/30 split of the sums of squares, no interaction.
        let (ea, eb) = (0.7f64.sqrt(), 0.3f64.sqrt());
        let mut rows = Vec::new();
        for (la, va) in [("lo", -ea), ("hi", ea)] {
            for (lb, vb) in [("lo", -eb), ("hi", eb)] {
                for _ in 0..3 {
                    rows.push((vec![la, lb], 10.0 + va + vb));
                }
            }
        }
        let s = variance_sensitivity(&table(rows, &["a", "b"])).unwrap();
        assert!((s.get("a").unwrap() - 70.0).abs() < 1.0);
        assert!((s.get("b").unwrap() - 30.0).abs() < 1.0);
        assert!(s.get("a:b").unwrap().abs() < 1e-9);
        assert!((s.explained() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn unbalanced_tables_are_rejected() {
        let rows = vec![(vec!["x", "p"], 1.0), (vec!["x", "q"], 2.0), (vec!["y", "p"], 3.0)];
        assert!(matches!(
            variance_sensitivity(&table(rows, &["a", "b"])),
            Err(NngpError::UnbalancedDesign(_))
        ));
        let rows = vec![(vec!["x"], 1.0), (vec!["x"], 2.0), (vec!["y"], 3.0)];
        assert!(variance_sensitivity(&table(rows, &["a"])).is_err());
    }

    #[test]
    fn single_cell_bench() {
        let design = BenchDesign {
            n: vec![300],
            m: vec![5],
            d: vec![2],
            orderings: vec![OrderingKind::Coordinate],
            algorithms: vec![ColoringAlgorithm::Naive],
            reps: 1,
            seed: 4,
        };
        let rows = bench_coloring(&design).unwrap();
        assert_eq!(rows.len(), 1);
        // A node and its married parents form an (m+1)-clique.
        assert!(rows[0].n_colors >= 6);
        let s = variance_sensitivity(&FactorTable::from_bench(&rows, Response::Colors)).unwrap();
        assert!(s.effects.iter().all(|e| e.1 == 0.0));
    }

    #[test]
    fn color_counts_respect_clique_lower_bound() {
        let design = BenchDesign {
            n: vec![500],
            m: vec![5, 10],
            d: vec![2, 3],
            orderings: OrderingKind::ALL.to_vec(),
            algorithms: ColoringAlgorithm::ALL.to_vec(),
            reps: 1,
            seed: 11,
        };
        let rows = bench_coloring(&design).unwrap();
        assert_eq!(rows.len(), design.n_cells());
        for r in rows {
            assert!(r.n_colors as usize >= r.m + 1, "{r:?}");
        }
    }
}
