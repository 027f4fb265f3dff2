//! Full-conditional updates of one Gibbs sweep.
//!
//! Each update takes its inputs explicitly so it can be checked against a
//! dense oracle in isolation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::error::{NngpError, Result};
use crate::rng::StreamKey;
use crate::sampler::design::{lower_cholesky, Columns, RegressionDesign};
use crate::vecchia::{log_density, CovParams, FactorBuilder, NngpFactor};

/// Gaussian `N(mean, (L L')^-1)` given the lower Cholesky factor of its precision.
#[derive(Debug, Clone)]
pub struct GaussianConditional {
    pub mean: DVector<f64>,
    precision_l: DMatrix<f64>,
}

impl GaussianConditional {
    pub fn from_precision(mean: DVector<f64>, precision_l: DMatrix<f64>) -> Self {
        Self { mean, precision_l }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let p = &self.precision_l * self.precision_l.transpose();
        p.try_inverse().expect("precision factor is invertible")
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let eps = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let dev = self
            .precision_l
            .tr_solve_lower_triangular(&eps)
            .expect("precision factor is invertible");
        &self.mean + dev
    }
}

/// Solves `(L L') x = b`.
fn chol_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let y = l.solve_lower_triangular(b).expect("invertible factor");
    l.tr_solve_lower_triangular(&y).expect("invertible factor")
}

/// Conditional of the intercept in the centered parametrization:
/// `beta0 | w ~ N(1'Qw / 1'Q1, 1 / 1'Q1)` under a flat prior.
pub fn beta0_centered_conditional(w: &[f64], factor: &NngpFactor) -> GaussianConditional {
    let ones = vec![1.0; factor.n()];
    let r1 = factor.apply(&ones);
    let rw = factor.apply(w);
    let a: f64 = r1.iter().map(|v| v * v).sum();
    let h: f64 = r1.iter().zip(&rw).map(|(x, y)| x * y).sum();
    GaussianConditional::from_precision(
        DVector::from_element(1, h / a),
        DMatrix::from_element(1, 1, a.sqrt()),
    )
}

pub fn update_beta0_centered<R: Rng + ?Sized>(w: &[f64], factor: &NngpFactor, rng: &mut R) -> f64 {
    beta0_centered_conditional(w, factor).draw(rng)[0]
}

/// Regression conditional of the coefficients on `cols` given everything else,
/// with observation-level offset `offset` already removed from `z`:
/// `beta_cols ~ N((X'X)^-1 X' r, tau2 (X'X)^-1)` where `r = z - offset - X_rest beta_rest`.
pub fn beta_conditional(
    design: &RegressionDesign,
    which: Columns,
    z: &[f64],
    offset: &[f64],
    beta: &[f64],
    tau2: f64,
) -> Result<Option<GaussianConditional>> {
    let cols = design.columns(which);
    if cols.is_empty() {
        return Ok(None);
    }
    let l = design
        .gram_factor(which)
        .ok_or_else(|| NngpError::SingularDesign("missing Gram factor".into()))?;
    let rest: Vec<usize> = (0..design.p()).filter(|j| !cols.contains(j)).collect();
    let other = design.fitted(beta, &rest);
    let x = design.matrix();
    let mut xtr = DVector::zeros(cols.len());
    for (r, &j) in cols.iter().enumerate() {
        let col = x.column(j);
        let mut s = 0.0;
        for o in 0..z.len() {
            s += col[o] * (z[o] - offset[o] - other[o]);
        }
        xtr[r] = s;
    }
    let mean = chol_solve(l, &xtr);
    Ok(Some(GaussianConditional::from_precision(mean, l / tau2.sqrt())))
}

/// Draws the `cols` block of `beta` in place.
pub fn update_beta<R: Rng + ?Sized>(
    design: &RegressionDesign,
    which: Columns,
    z: &[f64],
    offset: &[f64],
    beta: &mut [f64],
    tau2: f64,
    rng: &mut R,
) -> Result<()> {
    if let Some(g) = beta_conditional(design, which, z, offset, beta, tau2)? {
        let draw = g.draw(rng);
        for (r, j) in design.columns(which).into_iter().enumerate() {
            beta[j] = draw[r];
        }
    }
    Ok(())
}

/// Joint conditional of `(beta0, beta)` given the non-centered field:
/// regression of `z - w_s` on `[1|X]`.
pub fn joint_standard_conditional(
    design: &RegressionDesign,
    z: &[f64],
    field_at_obs: &[f64],
    tau2: f64,
) -> GaussianConditional {
    let p = design.p();
    let x = design.matrix();
    let mut rhs = DVector::zeros(p + 1);
    for o in 0..z.len() {
        let r = z[o] - field_at_obs[o];
        rhs[0] += r;
        for j in 0..p {
            rhs[j + 1] += x[(o, j)] * r;
        }
    }
    let l = design.joint_factor();
    GaussianConditional::from_precision(chol_solve(l, &rhs), l / tau2.sqrt())
}

/// Inverse-gamma draw for the nugget under the flat prior on `tau2`:
/// `tau2 ~ IG(N/2, SS/2)`.
pub fn update_tau2<R: Rng + ?Sized>(ss: f64, n_obs: usize, rng: &mut R) -> Result<f64> {
    if !(ss > 0.0 && ss.is_finite()) || n_obs == 0 {
        return Err(NngpError::NonPositiveScale);
    }
    let g = Gamma::new(n_obs as f64 / 2.0, 1.0).map_err(|_| NngpError::NonPositiveScale)?;
    let x: f64 = g.sample(rng);
    Ok((ss / 2.0) / x)
}

/// Lower bound applied when the residual sum of squares vanishes.
pub const TAU2_FLOOR: f64 = 1e-12;

/// Bounds for `(sigma2, range)`; proposals outside are rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaBounds {
    pub sigma2: (f64, f64),
    pub range: (f64, f64),
}

impl Default for ThetaBounds {
    fn default() -> Self {
        Self {
            sigma2: (1e-8, 1e8),
            range: (1e-8, 1e8),
        }
    }
}

impl ThetaBounds {
    pub fn contains(&self, t: &CovParams) -> bool {
        t.sigma2 >= self.sigma2.0 && t.sigma2 <= self.sigma2.1 && t.range >= self.range.0 && t.range <= self.range.1
    }
}

/// Random-walk proposal on `(log sigma2, log range)`: `step = exp(log_scale) L eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaProposal {
    pub log_scale: f64,
    /// Lower Cholesky factor of the shape matrix.
    pub chol: [[f64; 2]; 2],
}

impl ThetaProposal {
    pub fn isotropic(step: f64) -> Self {
        Self {
            log_scale: step.ln(),
            chol: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    /// Sets the shape from a 2x2 covariance; keeps the old shape if it is not positive definite.
    pub fn set_shape(&mut self, cov: [[f64; 2]; 2]) -> bool {
        let a = cov[0][0];
        if !(a > 0.0) {
            return false;
        }
        let l00 = a.sqrt();
        let l10 = cov[1][0] / l00;
        let rem = cov[1][1] - l10 * l10;
        if !(rem > 0.0) || !l10.is_finite() {
            return false;
        }
        self.chol = [[l00, 0.0], [l10, rem.sqrt()]];
        true
    }

    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        let s = self.log_scale.exp();
        [s * self.chol[0][0] * e0, s * (self.chol[1][0] * e0 + self.chol[1][1] * e1)]
    }
}

/// Result of one Metropolis step for `theta`.
#[derive(Debug)]
pub struct ThetaStep {
    pub accepted: bool,
    /// The new factor when the proposal was accepted.
    pub factor: Option<NngpFactor>,
    pub log_density: f64,
}

/// Random-walk Metropolis on `(log sigma2, log range)` targeting the
/// nearest-neighbor density of `w` around `mu`, with flat priors on the logs.
/// Proposals outside `bounds` or with a degenerate factor are rejected.
pub fn update_theta<R: Rng + ?Sized>(
    current: &NngpFactor,
    current_log_density: f64,
    w: &[f64],
    mu: &[f64],
    builder: &FactorBuilder,
    proposal: &ThetaProposal,
    bounds: &ThetaBounds,
    rng: &mut R,
) -> ThetaStep {
    let step = proposal.step(rng);
    let u: f64 = rng.gen();
    let t = current.theta();
    let cand = CovParams {
        sigma2: (t.sigma2.ln() + step[0]).exp(),
        range: (t.range.ln() + step[1]).exp(),
    };
    let reject = ThetaStep {
        accepted: false,
        factor: None,
        log_density: current_log_density,
    };
    if !(cand.sigma2.is_finite() && cand.range.is_finite() && cand.sigma2 > 0.0 && cand.range > 0.0)
        || !bounds.contains(&cand)
    {
        return reject;
    }
    let Ok(f) = builder.build(&cand) else {
        return reject;
    };
    let ld = log_density(w, mu, &f);
    if ld.is_finite() && u.ln() < ld - current_log_density {
        ThetaStep {
            accepted: true,
            factor: Some(f),
            log_density: ld,
        }
    } else {
        reject
    }
}

/// Random-walk Metropolis on `(log sigma2, log range)` with the whitened
/// field `u = R (w - mu)` held fixed: the candidate field is
/// `w' = mu + R'^-1 u` and the step is accepted on the data likelihood.
///
/// `resid_sums[i]` is the sum of `z` minus fixed effects over the
/// observations of site `i`. Returns the new field when accepted.
#[allow(clippy::too_many_arguments)]
pub fn update_theta_whitened<R: Rng + ?Sized>(
    current: &NngpFactor,
    w: &[f64],
    mu: &[f64],
    obs: &ObsIndex,
    resid_sums: &[f64],
    tau2: f64,
    builder: &FactorBuilder,
    proposal: &ThetaProposal,
    bounds: &ThetaBounds,
    rng: &mut R,
) -> (ThetaStep, Option<Vec<f64>>) {
    let step = proposal.step(rng);
    let u_draw: f64 = rng.gen();
    let t = current.theta();
    let cand = CovParams {
        sigma2: (t.sigma2.ln() + step[0]).exp(),
        range: (t.range.ln() + step[1]).exp(),
    };
    let reject = (
        ThetaStep {
            accepted: false,
            factor: None,
            log_density: f64::NAN,
        },
        None,
    );
    if !(cand.sigma2.is_finite() && cand.range.is_finite() && cand.sigma2 > 0.0 && cand.range > 0.0)
        || !bounds.contains(&cand)
    {
        return reject;
    }
    let Ok(f) = builder.build(&cand) else {
        return reject;
    };
    let u = current.apply_centered(w, mu);
    let dev = crate::vecchia::solve_factor(&f, &u);
    let w_new: Vec<f64> = dev.iter().zip(mu).map(|(d, m)| d + m).collect();
    // Sum of squares up to a constant: sum_i n_i w_i^2 - 2 w_i S_i.
    let ss = |x: &[f64]| -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| obs.count(i) as f64 * xi * xi - 2.0 * xi * resid_sums[i])
            .sum()
    };
    let log_ratio = -(ss(&w_new) - ss(w)) / (2.0 * tau2);
    if w_new.iter().all(|v| v.is_finite()) && u_draw.ln() < log_ratio {
        (
            ThetaStep {
                accepted: true,
                factor: Some(f),
                log_density: f64::NAN,
            },
            Some(w_new),
        )
    } else {
        reject
    }
}

/// Observation layout of sites in CSR form.
#[derive(Debug, Clone)]
pub struct ObsIndex {
    offsets: Vec<usize>,
    obs: Vec<usize>,
}

impl ObsIndex {
    pub fn new(site_of_obs: &[usize], n_sites: usize) -> Self {
        let mut counts = vec![0usize; n_sites + 1];
        for &s in site_of_obs {
            counts[s + 1] += 1;
        }
        for i in 0..n_sites {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut obs = vec![0; site_of_obs.len()];
        for (o, &s) in site_of_obs.iter().enumerate() {
            obs[fill[s]] = o;
            fill[s] += 1;
        }
        Self { offsets: counts, obs }
    }

    pub fn n_sites(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn of_site(&self, s: usize) -> &[usize] {
        &self.obs[self.offsets[s]..self.offsets[s + 1]]
    }

    pub fn count(&self, s: usize) -> usize {
        self.offsets[s + 1] - self.offsets[s]
    }

    /// Per-site sums of an observation-level vector.
    pub fn site_sums(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n_sites())
            .map(|s| self.of_site(s).iter().map(|&o| v[o]).sum())
            .collect()
    }
}

/// Mean and variance of the full conditional of one site of the field.
///
/// `resid_sum` is the sum over the site's observations of `z` minus the
/// fixed effects; `mu` is the field's prior mean.
pub fn w_site_conditional(
    site: usize,
    w: &[f64],
    mu: &[f64],
    factor: &NngpFactor,
    n_obs_site: usize,
    resid_sum: f64,
    tau2: f64,
) -> (f64, f64) {
    let (qii, s) = factor.conditional_terms(site, w, mu);
    let prec = qii + n_obs_site as f64 / tau2;
    let mean = (qii * mu[site] - s + resid_sum / tau2) / prec;
    (mean, 1.0 / prec)
}

/// Chromatic Gibbs update of the field: colour classes are visited in
/// order and all sites of a class are drawn simultaneously. Each site
/// draws from its own stream, so the result does not depend on threading.
#[allow(clippy::too_many_arguments)]
pub fn update_w_chromatic(
    w: &mut [f64],
    mu: &[f64],
    factor: &NngpFactor,
    classes: &[Vec<usize>],
    obs: &ObsIndex,
    resid_sums: &[f64],
    tau2: f64,
    key: &StreamKey,
    iteration: u64,
) {
    for class in classes {
        let fresh: Vec<f64> = {
            let w_ref: &[f64] = w;
            class
                .par_iter()
                .map(|&i| {
                    let (mean, var) = w_site_conditional(i, w_ref, mu, factor, obs.count(i), resid_sums[i], tau2);
                    let mut rng = key.rng(iteration, i as u64);
                    let eps: f64 = rng.sample(StandardNormal);
                    mean + var.sqrt() * eps
                })
                .collect()
        };
        for (&i, v) in class.iter().zip(fresh) {
            w[i] = v;
        }
    }
}

/// `R A` for the site-level design `A = [1 | X_site]`, stored transposed
/// (q x n), and the lower Cholesky factor of `G = (RA)'(RA)`.
#[derive(Debug, Clone)]
pub struct InterweaveGram {
    ra_t: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl InterweaveGram {
    pub fn new(factor: &NngpFactor, design: &RegressionDesign) -> Result<Self> {
        let n = factor.n();
        let xs = design.site_matrix_t();
        let q = xs.nrows() + 1;
        let mut a_t = DMatrix::zeros(q, n);
        a_t.row_mut(0).fill(1.0);
        if q > 1 {
            a_t.rows_mut(1, q - 1).copy_from(xs);
        }
        let mut ra_t = DMatrix::zeros(q, n);
        for k in 0..n {
            let (cols, vals) = factor.row(k);
            let mut out = ra_t.column_mut(k);
            for (&c, &v) in cols.iter().zip(vals) {
                out.axpy(v, &a_t.column(c), 1.0);
            }
        }
        let g = &ra_t * ra_t.transpose();
        let chol = lower_cholesky(g, "the interweaving Gram matrix")?;
        Ok(Self { ra_t, chol })
    }

    /// Conditional of `(beta0, beta_site)` given `v = w + X_site beta_site`
    /// in the non-centered representation: `N(G^-1 h, G^-1)`, `h = (RA)' R v`.
    pub fn conditional(&self, factor: &NngpFactor, v: &[f64]) -> GaussianConditional {
        let rv = DVector::from_vec(factor.apply(v));
        let h = &self.ra_t * rv;
        GaussianConditional::from_precision(chol_solve(&self.chol, &h), self.chol.clone())
    }
}

/// Centered conditional of the site-wise coefficients given the centered field.
pub fn beta_site_centered_conditional(
    design: &RegressionDesign,
    z: &[f64],
    w_at_obs: &[f64],
    beta: &[f64],
    tau2: f64,
) -> Result<Option<GaussianConditional>> {
    beta_conditional(design, Columns::Site, z, w_at_obs, beta, tau2)
}

/// Interweaving update of `(beta0, beta_site)` and the field.
///
/// First the site-wise coefficients are refreshed from their centered
/// conditional, then the field is moved to the ancillary representation
/// `v = w + X_site beta_site`, the coefficients are drawn given `v`, and the
/// field is mapped back with the new coefficients.
#[allow(clippy::too_many_arguments)]
pub fn interweave_regression<R: Rng + ?Sized>(
    design: &RegressionDesign,
    gram: &InterweaveGram,
    factor: &NngpFactor,
    z: &[f64],
    site_of_obs: &[usize],
    w: &mut [f64],
    beta0: &mut f64,
    beta: &mut [f64],
    tau2: f64,
    rng: &mut R,
) -> Result<()> {
    let site_cols = design.site_cols().to_vec();
    if !site_cols.is_empty() {
        let w_obs: Vec<f64> = site_of_obs.iter().map(|&s| w[s]).collect();
        if let Some(g) = beta_site_centered_conditional(design, z, &w_obs, beta, tau2)? {
            let d = g.draw(rng);
            for (r, &j) in site_cols.iter().enumerate() {
                beta[j] = d[r];
            }
        }
    }
    let bs: Vec<f64> = site_cols.iter().map(|&j| beta[j]).collect();
    let shift = design.site_fitted(&bs);
    let v: Vec<f64> = w.iter().zip(&shift).map(|(a, b)| a + b).collect();
    let gamma = gram.conditional(factor, &v).draw(rng);
    *beta0 = gamma[0];
    for (r, &j) in site_cols.iter().enumerate() {
        beta[j] = gamma[r + 1];
    }
    let bs: Vec<f64> = site_cols.iter().map(|&j| beta[j]).collect();
    let shift = design.site_fitted(&bs);
    for (wi, (vi, si)) in w.iter_mut().zip(v.iter().zip(&shift)) {
        *wi = vi - si;
    }
    Ok(())
}
