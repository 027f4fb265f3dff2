//! Covariates, automatic scaling and cached Gram factorizations.

use nalgebra::{DMatrix, DVector};

use crate::error::{NngpError, Result};

/// Whether a covariate describes the site or the individual measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateKind {
    Site,
    Obs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
    /// One value per observation.
    pub values: Vec<f64>,
}

/// Column subset used by a regression update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Columns {
    All,
    Site,
    Obs,
}

/// Scaled design matrices with the Gram factors every update needs.
///
/// Columns are centered and scaled to unit standard deviation over the
/// observations; [`RegressionDesign::to_original`] maps coefficients back.
#[derive(Debug, Clone)]
pub struct RegressionDesign {
    names: Vec<String>,
    kinds: Vec<CovariateKind>,
    means: Vec<f64>,
    sds: Vec<f64>,
    /// N x p, scaled.
    x: DMatrix<f64>,
    site_cols: Vec<usize>,
    obs_cols: Vec<usize>,
    /// p_s x n: scaled site-wise columns at site level, one column per site.
    site_x_t: DMatrix<f64>,
    chol_all: Option<DMatrix<f64>>,
    chol_site: Option<DMatrix<f64>>,
    chol_obs: Option<DMatrix<f64>>,
    /// Lower Cholesky factor of [1|X]'[1|X].
    chol_joint: DMatrix<f64>,
    n_obs: usize,
}

/// Lower Cholesky factor, rejecting pivots that vanish relative to the diagonal.
pub(crate) fn lower_cholesky(m: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let diag: Vec<f64> = m.diagonal().iter().copied().collect();
    let singular = || NngpError::SingularDesign(format!("{what} is not positive definite"));
    let l = m.cholesky().map(|c| c.l()).ok_or_else(singular)?;
    for (j, d) in diag.iter().enumerate() {
        if !(l[(j, j)] * l[(j, j)] > 1e-10 * d) {
            return Err(singular());
        }
    }
    Ok(l)
}

impl RegressionDesign {
    pub fn new(covariates: &[Covariate], site_of_obs: &[usize], n_sites: usize) -> Result<Self> {
        let n_obs = site_of_obs.len();
        let p = covariates.len();
        let mut names = Vec::with_capacity(p);
        for c in covariates {
            if c.values.len() != n_obs {
                return Err(NngpError::InvalidInput(format!(
                    "covariate '{}' has {} values for {} observations",
                    c.name,
                    c.values.len(),
                    n_obs
                )));
            }
            if c.values.iter().any(|v| !v.is_finite()) {
                return Err(NngpError::InvalidInput(format!("covariate '{}' is not finite", c.name)));
            }
            if names.contains(&c.name) {
                return Err(NngpError::InvalidInput(format!("duplicate covariate '{}'", c.name)));
            }
            names.push(c.name.clone());
        }
        let kinds: Vec<CovariateKind> = covariates.iter().map(|c| c.kind).collect();
        let mut means = Vec::with_capacity(p);
        let mut sds = Vec::with_capacity(p);
        let mut x = DMatrix::zeros(n_obs, p);
        for (j, c) in covariates.iter().enumerate() {
            let mean = c.values.iter().sum::<f64>() / n_obs as f64;
            let var = c.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n_obs as f64;
            let sd = var.sqrt();
            if !(sd > 1e-12 * mean.abs().max(1.0)) {
                return Err(NngpError::SingularDesign(format!(
                    "covariate '{}' is constant (collinear with the intercept)",
                    c.name
                )));
            }
            for (o, v) in c.values.iter().enumerate() {
                x[(o, j)] = (v - mean) / sd;
            }
            means.push(mean);
            sds.push(sd);
        }
        let site_cols: Vec<usize> = (0..p).filter(|&j| kinds[j] == CovariateKind::Site).collect();
        let obs_cols: Vec<usize> = (0..p).filter(|&j| kinds[j] == CovariateKind::Obs).collect();

        let mut site_x_t = DMatrix::zeros(site_cols.len(), n_sites);
        let mut filled = vec![false; n_sites];
        for (o, &s) in site_of_obs.iter().enumerate() {
            for (r, &j) in site_cols.iter().enumerate() {
                if filled[s] {
                    if site_x_t[(r, s)] != x[(o, j)] {
                        return Err(NngpError::InvalidInput(format!(
                            "site-wise covariate '{}' varies within site {s}",
                            names[j]
                        )));
                    }
                } else {
                    site_x_t[(r, s)] = x[(o, j)];
                }
            }
            filled[s] = true;
        }

        let gram = |cols: &[usize]| -> Result<Option<DMatrix<f64>>> {
            if cols.is_empty() {
                return Ok(None);
            }
            let sub = x.select_columns(cols);
            lower_cholesky(sub.transpose() * &sub, "the covariate Gram matrix").map(Some)
        };
        let all: Vec<usize> = (0..p).collect();
        let chol_all = gram(&all)?;
        let chol_site = gram(&site_cols)?;
        let chol_obs = gram(&obs_cols)?;
        let mut joint = DMatrix::from_element(n_obs, p + 1, 1.0);
        joint.columns_mut(1, p).copy_from(&x);
        let chol_joint = lower_cholesky(joint.transpose() * &joint, "[1|X]'[1|X]")?;

        Ok(Self {
            names,
            kinds,
            means,
            sds,
            x,
            site_cols,
            obs_cols,
            site_x_t,
            chol_all,
            chol_site,
            chol_obs,
            chol_joint,
            n_obs,
        })
    }

    /// Intercept-only design.
    pub fn empty(site_of_obs: &[usize], n_sites: usize) -> Result<Self> {
        Self::new(&[], site_of_obs, n_sites)
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[CovariateKind] {
        &self.kinds
    }

    pub fn site_cols(&self) -> &[usize] {
        &self.site_cols
    }

    pub fn obs_cols(&self) -> &[usize] {
        &self.obs_cols
    }

    pub fn columns(&self, which: Columns) -> Vec<usize> {
        match which {
            Columns::All => (0..self.p()).collect(),
            Columns::Site => self.site_cols.clone(),
            Columns::Obs => self.obs_cols.clone(),
        }
    }

    /// Scaled N x p matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Scaled site-wise columns at site level, transposed (p_s x n).
    pub fn site_matrix_t(&self) -> &DMatrix<f64> {
        &self.site_x_t
    }

    pub(crate) fn gram_factor(&self, which: Columns) -> Option<&DMatrix<f64>> {
        match which {
            Columns::All => self.chol_all.as_ref(),
            Columns::Site => self.chol_site.as_ref(),
            Columns::Obs => self.chol_obs.as_ref(),
        }
    }

    pub(crate) fn joint_factor(&self) -> &DMatrix<f64> {
        &self.chol_joint
    }

    /// `X beta` at observation level, optionally restricted to some columns.
    pub fn fitted(&self, beta: &[f64], cols: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_obs];
        for &j in cols {
            let b = beta[j];
            if b != 0.0 {
                for (o, v) in self.x.column(j).iter().enumerate() {
                    out[o] += b * v;
                }
            }
        }
        out
    }

    /// `X_site beta_site` at site level.
    pub fn site_fitted(&self, beta_site: &[f64]) -> Vec<f64> {
        if beta_site.is_empty() {
            return vec![0.0; self.site_x_t.ncols()];
        }
        let b = DVector::from_column_slice(beta_site);
        (self.site_x_t.transpose() * b).iter().copied().collect()
    }

    /// Coefficients on the original covariate scale: `(beta0, beta)`.
    pub fn to_original(&self, beta0: f64, beta: &[f64]) -> (f64, Vec<f64>) {
        let orig: Vec<f64> = beta.iter().zip(&self.sds).map(|(b, s)| b / s).collect();
        let shift: f64 = orig.iter().zip(&self.means).map(|(b, m)| b * m).sum();
        (beta0 - shift, orig)
    }

    /// Inverse of [`Self::to_original`].
    pub fn to_scaled(&self, beta0: f64, beta: &[f64]) -> (f64, Vec<f64>) {
        let shift: f64 = beta.iter().zip(&self.means).map(|(b, m)| b * m).sum();
        let scaled = beta.iter().zip(&self.sds).map(|(b, s)| b * s).collect();
        (beta0 + shift, scaled)
    }
}
