//! Exponential covariance and the sparse nearest-neighbor (Vecchia)
//! precision factor.
//!
//! The factor `R` has one row per node of the parent DAG. Row `k` carries
//! `1/sqrt(v)` at the node's own site and `-b/sqrt(v)` at its parent sites,
//! where `b` and `v` are the coefficients and variance of the Gaussian
//! conditional of the node given its parents. The implied precision is
//! `Q = R'R`. Columns are site indices, so vectors passed to this module
//! are always indexed by site, whatever the DAG ordering was.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{NngpError, Result};
use crate::geo::{LocationSet, ParentDag};

/// Marginal variance and decay length of `k(d) = sigma2 * exp(-d / range)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovParams {
    pub sigma2: f64,
    pub range: f64,
}

impl CovParams {
    pub fn new(sigma2: f64, range: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite() && range > 0.0 && range.is_finite()) {
            return Err(NngpError::InvalidInput(format!(
                "covariance parameters must be positive, got sigma2={sigma2}, range={range}"
            )));
        }
        Ok(Self { sigma2, range })
    }

    /// Parameters of the kernel `sigma2 * exp(-decay * d)`.
    pub fn from_decay(sigma2: f64, decay: f64) -> Result<Self> {
        Self::new(sigma2, 1.0 / decay)
    }

    pub fn decay(&self) -> f64 {
        1.0 / self.range
    }
}

pub fn exp_covariance(d: f64, theta: &CovParams) -> f64 {
    theta.sigma2 * (-d / theta.range).exp()
}

/// Maximum parent-set size accepted by the factor.
pub const MAX_PARENTS: usize = 32;

/// Relative floor on conditional variances.
pub const CONDITIONAL_VARIANCE_FLOOR: f64 = 1e-12;

/// Sparsity structure of a factor: CSR rows in DAG order with site columns.
#[derive(Debug, Clone)]
pub struct FactorLayout {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    /// For each site, the `(row, slot)` pairs where it appears.
    incidence: Vec<Vec<(u32, u32)>>,
}

impl FactorLayout {
    pub fn from_dag(dag: &ParentDag) -> Result<Self> {
        let n = dag.len();
        if dag.m > MAX_PARENTS {
            return Err(NngpError::InvalidInput(format!(
                "at most {MAX_PARENTS} parents are supported, got {}",
                dag.m
            )));
        }
        if !dag.is_topologically_valid() {
            return Err(NngpError::InvalidInput("parent DAG is not topologically valid".into()));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut incidence = vec![Vec::new(); n];
        offsets.push(0);
        for k in 0..n {
            let row_start = cols.len();
            cols.push(dag.site(k));
            cols.extend(dag.parent_sites(k));
            for (slot, &c) in cols[row_start..].iter().enumerate() {
                incidence[c].push((k as u32, slot as u32));
            }
            offsets.push(cols.len());
        }
        Ok(Self {
            offsets,
            cols,
            incidence,
        })
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Site columns of row `k`; the first entry is the row's own site.
    pub fn row_cols(&self, k: usize) -> &[usize] {
        &self.cols[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }
}

/// Sparse triangular factor `R` with `Q = R'R`.
#[derive(Debug, Clone)]
pub struct NngpFactor {
    layout: Arc<FactorLayout>,
    theta: CovParams,
    vals: Vec<f64>,
    log_diag_sum: f64,
}

/// Rebuilds factors for new covariance parameters on fixed sites and DAG.
#[derive(Debug, Clone)]
pub struct FactorBuilder {
    points: Vec<[f64; 3]>,
    layout: Arc<FactorLayout>,
}

impl FactorBuilder {
    pub fn new(locs: &LocationSet, dag: &ParentDag) -> Result<Self> {
        if dag.len() != locs.n_sites() {
            return Err(NngpError::InvalidInput(format!(
                "DAG has {} nodes but there are {} sites",
                dag.len(),
                locs.n_sites()
            )));
        }
        Ok(Self {
            points: locs.points().to_vec(),
            layout: Arc::new(FactorLayout::from_dag(dag)?),
        })
    }

    pub fn layout(&self) -> &Arc<FactorLayout> {
        &self.layout
    }

    pub fn build(&self, theta: &CovParams) -> Result<NngpFactor> {
        let layout = &self.layout;
        let mut vals = vec![0.0; layout.nnz()];
        let mut rows: Vec<(usize, &mut [f64])> = Vec::with_capacity(layout.n());
        let mut rest = vals.as_mut_slice();
        for k in 0..layout.n() {
            let len = layout.offsets[k + 1] - layout.offsets[k];
            let (head, tail) = rest.split_at_mut(len);
            rows.push((k, head));
            rest = tail;
        }
        let logs: Vec<f64> = rows
            .into_par_iter()
            .map(|(k, row)| self.fill_row(k, theta, row))
            .collect::<Result<_>>()?;
        Ok(NngpFactor {
            layout: Arc::clone(layout),
            theta: *theta,
            vals,
            log_diag_sum: logs.iter().sum(),
        })
    }

    /// Fills one row; returns `log R_kk`.
    fn fill_row(&self, k: usize, theta: &CovParams, row: &mut [f64]) -> Result<f64> {
        let cols = self.layout.row_cols(k);
        let site = cols[0];
        let parents = &cols[1..];
        let p = parents.len();
        let corr = |a: usize, b: usize| {
            let d = crate::kdtree::dist2(&self.points[a], &self.points[b]).sqrt();
            (-d / theta.range).exp()
        };
        // Correlation scale; the conditional variance is rescaled by sigma2.
        let mut resid = 1.0;
        if p > 0 {
            let mut gram = [0.0; MAX_PARENTS * MAX_PARENTS];
            let mut rhs = [0.0; MAX_PARENTS];
            for a in 0..p {
                for b in 0..=a {
                    gram[a * p + b] = corr(parents[a], parents[b]);
                }
                rhs[a] = corr(site, parents[a]);
            }
            let cross = rhs;
            if !cholesky_solve(&mut gram[..p * p], p, &mut rhs[..p]) {
                return Err(NngpError::NonPositiveConditionalVariance {
                    site,
                    variance: 0.0,
                });
            }
            resid -= (0..p).map(|a| cross[a] * rhs[a]).sum::<f64>();
            let v = theta.sigma2 * resid;
            if !(resid > CONDITIONAL_VARIANCE_FLOOR) {
                return Err(NngpError::NonPositiveConditionalVariance { site, variance: v });
            }
            let inv_sd = 1.0 / v.sqrt();
            for a in 0..p {
                row[a + 1] = -rhs[a] * inv_sd;
            }
        }
        let v = theta.sigma2 * resid;
        row[0] = 1.0 / v.sqrt();
        Ok(row[0].ln())
    }
}

/// In-place Cholesky of the lower triangle of a row-major `p x p` matrix,
/// then solves for `rhs`. Returns false if the matrix is not positive
/// definite.
fn cholesky_solve(a: &mut [f64], p: usize, rhs: &mut [f64]) -> bool {
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * p + j] = d;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / d;
        }
    }
    for i in 0..p {
        let mut s = rhs[i];
        for k in 0..i {
            s -= a[i * p + k] * rhs[k];
        }
        rhs[i] = s / a[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = rhs[i];
        for k in i + 1..p {
            s -= a[k * p + i] * rhs[k];
        }
        rhs[i] = s / a[i * p + i];
    }
    true
}

/// One-shot factor construction.
pub fn build_factor(locs: &LocationSet, dag: &ParentDag, theta: &CovParams) -> Result<NngpFactor> {
    FactorBuilder::new(locs, dag)?.build(theta)
}

impl NngpFactor {
    pub fn n(&self) -> usize {
        self.layout.n()
    }

    pub fn theta(&self) -> &CovParams {
        &self.theta
    }

    pub fn layout(&self) -> &Arc<FactorLayout> {
        &self.layout
    }

    pub fn log_diag_sum(&self) -> f64 {
        self.log_diag_sum
    }

    /// Row `k` as `(site columns, values)`; the first entry is the diagonal.
    pub fn row(&self, k: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.layout.offsets[k], self.layout.offsets[k + 1]);
        (&self.layout.cols[a..b], &self.vals[a..b])
    }

    #[inline]
    fn row_dot(&self, k: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(k);
        cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
    }

    /// `R x`, indexed by row.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n());
        (0..self.n()).into_par_iter().map(|k| self.row_dot(k, x)).collect()
    }

    /// `R (x - mu)`, indexed by row.
    pub fn apply_centered(&self, x: &[f64], mu: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n());
        assert_eq!(mu.len(), self.n());
        (0..self.n())
            .into_par_iter()
            .map(|k| {
                let (cols, vals) = self.row(k);
                cols.iter().zip(vals).map(|(&c, &v)| v * (x[c] - mu[c])).sum()
            })
            .collect()
    }

    /// `R' u` for a row-indexed `u`, indexed by site.
    pub fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n());
        let mut out = vec![0.0; self.n()];
        for (k, &uk) in u.iter().enumerate() {
            let (cols, vals) = self.row(k);
            for (&c, &v) in cols.iter().zip(vals) {
                out[c] += v * uk;
            }
        }
        out
    }

    /// `Q x = R'R x`.
    pub fn precision_apply(&self, x: &[f64]) -> Vec<f64> {
        self.apply_transpose(&self.apply(x))
    }

    /// Prior full conditional pieces of `site`: returns `(Q_ii, s)` with
    /// `s = sum_{j != i} Q_ij (w_j - mu_j)`.
    pub fn conditional_terms(&self, site: usize, w: &[f64], mu: &[f64]) -> (f64, f64) {
        let mut qii = 0.0;
        let mut s = 0.0;
        for &(k, slot) in &self.layout.incidence[site] {
            let (cols, vals) = self.row(k as usize);
            let a = vals[slot as usize];
            let mut e = 0.0;
            for (t, (&c, &v)) in cols.iter().zip(vals).enumerate() {
                if t != slot as usize {
                    e += v * (w[c] - mu[c]);
                }
            }
            qii += a * a;
            s += a * e;
        }
        (qii, s)
    }

    /// Dense `Q`; for tests and small-model analysis.
    pub fn precision_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n();
        let mut q = nalgebra::DMatrix::zeros(n, n);
        for k in 0..n {
            let (cols, vals) = self.row(k);
            for (&a, &va) in cols.iter().zip(vals) {
                for (&b, &vb) in cols.iter().zip(vals) {
                    q[(a, b)] += va * vb;
                }
            }
        }
        q
    }
}

/// Log of the nearest-neighbor density of `w` with mean `mu`.
pub fn log_density(w: &[f64], mu: &[f64], f: &NngpFactor) -> f64 {
    let r = f.apply_centered(w, mu);
    let ss: f64 = r.iter().map(|v| v * v).sum();
    -0.5 * f.n() as f64 * (2.0 * PI).ln() + f.log_diag_sum - 0.5 * ss
}

/// `x' Q y` through two sparse triangular products.
pub fn quad_forms(f: &NngpFactor, x: &[f64], y: &[f64]) -> f64 {
    let rx = f.apply(x);
    let ry = f.apply(y);
    rx.iter().zip(&ry).map(|(a, b)| a * b).sum()
}

/// Solves `R x = u` for a row-indexed `u`; the result is site-indexed.
pub fn solve_factor(f: &NngpFactor, u: &[f64]) -> Vec<f64> {
    let n = f.n();
    assert_eq!(u.len(), n);
    let mut x = vec![0.0; n];
    for (k, &uk) in u.iter().enumerate() {
        let (cols, vals) = f.row(k);
        let mut s = uk;
        for (&c, &v) in cols[1..].iter().zip(&vals[1..]) {
            s -= v * x[c];
        }
        x[cols[0]] = s / vals[0];
    }
    x
}

/// Draws `w ~ N(mu, Q^-1)` by solving `R (w - mu) = eps`.
pub fn sample_prior<R: Rng + ?Sized>(f: &NngpFactor, mu: &[f64], rng: &mut R) -> Vec<f64> {
    assert_eq!(mu.len(), f.n());
    let eps: Vec<f64> = (0..f.n()).map(|_| rng.sample(StandardNormal)).collect();
    let dev = solve_factor(f, &eps);
    dev.iter().zip(mu).map(|(d, m)| d + m).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{find_nn_parents, order, order_coordinate, OrderingKind};
    use crate::rng;
    use nalgebra::{DMatrix, DVector};

    fn sites(n: usize, seed: u64, side: f64) -> LocationSet {
        let mut r = rng::seeded(seed);
        LocationSet::new(
            (0..n)
                .map(|_| vec![r.gen::<f64>() * side, r.gen::<f64>() * side])
                .collect(),
        )
        .unwrap()
    }

    fn dense_cov(locs: &LocationSet, theta: &CovParams) -> DMatrix<f64> {
        let n = locs.n_sites();
        DMatrix::from_fn(n, n, |i, j| exp_covariance(locs.distance(i, j), theta))
    }

    fn dense_logpdf(w: &[f64], mu: &[f64], cov: &DMatrix<f64>) -> f64 {
        let n = w.len();
        let chol = cov.clone().cholesky().unwrap();
        let d = DVector::from_iterator(n, w.iter().zip(mu).map(|(a, b)| a - b));
        let sol = chol.solve(&d);
        let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        -0.5 * (n as f64 * (2.0 * PI).ln() + logdet + d.dot(&sol))
    }

    fn full_factor(n: usize, seed: u64, theta: &CovParams) -> (LocationSet, NngpFactor) {
        let locs = sites(n, seed, 10.0);
        let ord = order(&locs, OrderingKind::Random, seed);
        let dag = find_nn_parents(&locs, &ord, n - 1).unwrap();
        let f = build_factor(&locs, &dag, theta).unwrap();
        (locs, f)
    }

    #[test]
    fn covariance_formula() {
        let t = CovParams::new(1.0, 2.0).unwrap();
        assert_eq!(exp_covariance(0.0, &CovParams::new(3.5, 1.0).unwrap()), 3.5);
        assert!((exp_covariance(2.0, &t) - (-1.0f64).exp()).abs() < 1e-15);
        let toy = CovParams::from_decay(1.0, 0.5).unwrap();
        for d in [0.0, 0.3, 1.0, 7.5] {
            assert!((exp_covariance(d, &toy) - (-0.5 * d).exp()).abs() < 1e-15);
        }
        assert!(CovParams::new(0.0, 1.0).is_err());
        assert!(CovParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn single_site_factor() {
        let locs = LocationSet::new(vec![vec![0.0, 0.0]]).unwrap();
        let dag = find_nn_parents(&locs, &order_coordinate(&locs), 3).unwrap();
        let f = build_factor(&locs, &dag, &CovParams::new(4.0, 1.0).unwrap()).unwrap();
        assert_eq!(f.row(0).1, &[0.5]);
        let lp = log_density(&[1.3], &[1.3], &f);
        assert!((lp + 0.5 * (2.0 * PI * 4.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn saturated_factor_inverts_covariance() {
        let theta = CovParams::new(1.7, 2.0).unwrap();
        let (locs, f) = full_factor(10, 11, &theta);
        let q = f.precision_dense();
        let prec = dense_cov(&locs, &theta).try_inverse().unwrap();
        assert!((&q - &prec).amax() < 1e-8, "{}", (&q - &prec).amax());
        for k in 0..10 {
            assert_eq!(f.row(k).0.len(), 1 + k);
            assert!(f.row(k).1[0] > 0.0);
        }
    }

    #[test]
    fn screening_on_a_chain() {
        let locs = LocationSet::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let theta = CovParams::new(1.0, 3.0).unwrap();
        let dag = ParentDag {
            order: vec![0, 1, 2],
            parents: vec![vec![], vec![0], vec![1]],
            m: 1,
        };
        let f = build_factor(&locs, &dag, &theta).unwrap();
        let (cols, vals) = f.row(2);
        assert_eq!(cols, &[2, 1]);
        let b = -vals[1] / vals[0];
        assert!((b - (-1.0f64 / 3.0).exp()).abs() < 1e-14);
        // The exponential kernel on a line is Markov: the m=1 factor is exact.
        let prec = dense_cov(&locs, &theta).try_inverse().unwrap();
        assert!((f.precision_dense() - prec).amax() < 1e-12);
    }

    #[test]
    fn density_matches_dense_and_is_translation_invariant() {
        let theta = CovParams::new(0.8, 1.5).unwrap();
        let (locs, f) = full_factor(10, 5, &theta);
        let mut r = rng::seeded(1);
        let w: Vec<f64> = (0..10).map(|_| r.gen::<f64>() * 2.0 - 1.0).collect();
        let mu: Vec<f64> = (0..10).map(|_| r.gen::<f64>()).collect();
        let lp = log_density(&w, &mu, &f);
        let oracle = dense_logpdf(&w, &mu, &dense_cov(&locs, &theta));
        assert!((lp - oracle).abs() < 1e-8, "{lp} vs {oracle}");
        let shift = |v: &[f64], c: f64| v.iter().map(|x| x + c).collect::<Vec<_>>();
        let lp2 = log_density(&shift(&w, 3.7), &shift(&mu, 3.7), &f);
        assert!((lp - lp2).abs() < 1e-10);
    }

    #[test]
    fn density_integrates_to_one() {
        // n = 2 on a grid over +-8 sd.
        let locs = LocationSet::new(vec![vec![0.0, 0.0], vec![0.7, 0.0]]).unwrap();
        let dag = find_nn_parents(&locs, &order_coordinate(&locs), 1).unwrap();
        let f = build_factor(&locs, &dag, &CovParams::new(1.0, 1.0).unwrap()).unwrap();
        let steps = 400;
        let h = 16.0 / steps as f64;
        let mut total = 0.0;
        for a in 0..steps {
            for b in 0..steps {
                let w = [-8.0 + (a as f64 + 0.5) * h, -8.0 + (b as f64 + 0.5) * h];
                total += log_density(&w, &[0.0, 0.0], &f).exp() * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn quad_forms_cases() {
        let locs = sites(15, 2, 1000.0);
        let m1 = LocationSet::new(locs.points().iter().map(|p| vec![p[0], p[1]]).collect()).unwrap();
        let dag = find_nn_parents(&m1, &order_coordinate(&m1), 1).unwrap();
        // Huge distances relative to the range make Q the identity.
        let f = build_factor(&m1, &dag, &CovParams::new(1.0, 1e-3).unwrap()).unwrap();
        let ones = vec![1.0; 15];
        assert!((quad_forms(&f, &ones, &ones) - 15.0).abs() < 1e-12);

        let theta = CovParams::new(1.2, 3.0).unwrap();
        let (locs, f) = full_factor(10, 8, &theta);
        let mut r = rng::seeded(2);
        let x: Vec<f64> = (0..10).map(|_| r.gen::<f64>() - 0.5).collect();
        let y: Vec<f64> = (0..10).map(|_| r.gen::<f64>() - 0.5).collect();
        let prec = dense_cov(&locs, &theta).try_inverse().unwrap();
        let oracle = (DVector::from_vec(x.clone()).transpose() * &prec * DVector::from_vec(y.clone()))[0];
        assert!((quad_forms(&f, &x, &y) - oracle).abs() < 1e-8);
        assert!(quad_forms(&f, &x, &x) >= 0.0);
        let qx = f.precision_apply(&x);
        let qx_dense = &prec * DVector::from_vec(x.clone());
        for i in 0..10 {
            assert!((qx[i] - qx_dense[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn conditional_terms_match_dense_precision() {
        let theta = CovParams::new(1.0, 2.0).unwrap();
        let locs = sites(60, 4, 10.0);
        let ord = order(&locs, OrderingKind::MaxMin, 1);
        let dag = find_nn_parents(&locs, &ord, 5).unwrap();
        let f = build_factor(&locs, &dag, &theta).unwrap();
        let q = f.precision_dense();
        let mut r = rng::seeded(3);
        let w: Vec<f64> = (0..60).map(|_| r.gen::<f64>()).collect();
        let mu: Vec<f64> = (0..60).map(|_| r.gen::<f64>()).collect();
        for i in 0..60 {
            let (qii, s) = f.conditional_terms(i, &w, &mu);
            let s_dense: f64 = (0..60).filter(|&j| j != i).map(|j| q[(i, j)] * (w[j] - mu[j])).sum();
            assert!((qii - q[(i, i)]).abs() < 1e-10);
            assert!((s - s_dense).abs() < 1e-10);
        }
    }

    #[test]
    fn rows_invariant_to_parent_listing() {
        // Parent coefficients only depend on the parent set, not on how the
        // set was enumerated.
        let locs = sites(4, 6, 3.0);
        let theta = CovParams::new(1.0, 1.0).unwrap();
        let a = ParentDag {
            order: vec![0, 1, 2, 3],
            parents: vec![vec![], vec![0], vec![0, 1], vec![0, 1, 2]],
            m: 3,
        };
        let b = ParentDag {
            order: vec![2, 0, 1, 3],
            parents: vec![vec![], vec![0], vec![0, 1], vec![0, 1, 2]],
            m: 3,
        };
        let fa = build_factor(&locs, &a, &theta).unwrap();
        let fb = build_factor(&locs, &b, &theta).unwrap();
        let coef = |f: &NngpFactor| {
            let (cols, vals) = f.row(3);
            let mut v: Vec<(usize, f64)> = cols.iter().copied().zip(vals.iter().copied()).collect();
            v.sort_by_key(|e| e.0);
            v
        };
        for ((ca, va), (cb, vb)) in coef(&fa).into_iter().zip(coef(&fb)) {
            assert_eq!(ca, cb);
            assert!((va - vb).abs() < 1e-12);
        }
    }

    #[test]
    fn near_duplicate_sites_are_rejected() {
        let locs = LocationSet::new(vec![vec![0.0, 0.0], vec![1e-14, 0.0]]).unwrap();
        let dag = find_nn_parents(&locs, &order_coordinate(&locs), 1).unwrap();
        let err = build_factor(&locs, &dag, &CovParams::new(1.0, 1.0).unwrap()).unwrap_err();
        assert!(matches!(err, NngpError::NonPositiveConditionalVariance { .. }));
    }

    #[test]
    fn prior_samples_match_dense_moments() {
        let theta = CovParams::new(1.0, 2.0).unwrap();
        let (locs, f) = full_factor(10, 21, &theta);
        let mu: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let cov = dense_cov(&locs, &theta);
        let draws = 100_000;
        let mut r = rng::seeded(77);
        let mut sum = vec![0.0; 10];
        let mut cross = DMatrix::<f64>::zeros(10, 10);
        for _ in 0..draws {
            let w = sample_prior(&f, &mu, &mut r);
            for i in 0..10 {
                sum[i] += w[i];
                for j in 0..10 {
                    cross[(i, j)] += (w[i] - mu[i]) * (w[j] - mu[j]);
                }
            }
        }
        let nd = draws as f64;
        for i in 0..10 {
            let se = (cov[(i, i)] / nd).sqrt();
            assert!((sum[i] / nd - mu[i]).abs() < 3.5 * se);
            for j in 0..10 {
                let est = cross[(i, j)] / nd;
                let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / nd).sqrt();
                assert!((est - cov[(i, j)]).abs() < 4.0 * se, "({i},{j}) {est} vs {}", cov[(i, j)]);
            }
        }
    }

    #[test]
    fn tiny_variance_samples_collapse_to_mean() {
        let (_, f) = full_factor(6, 3, &CovParams::new(1e-20, 2.0).unwrap());
        let mu = vec![2.5; 6];
        let w = sample_prior(&f, &mu, &mut rng::seeded(0));
        assert!(w.iter().all(|v| (v - 2.5).abs() < 1e-8));
    }
}
