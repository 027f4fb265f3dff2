//! How much of the intercept leaks into the next field mean, and a small
//! exact Gibbs sampler to observe it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{NngpError, Result};
use crate::rng::seeded;
use crate::sampler::chains::ParamMode;
use crate::vecchia::NngpFactor;

/// `rho = sum_i alpha_i^2 / (tau2 lambda_i + 1) / n`, where `Q = V diag(lambda) V'`
/// and `alpha = V' 1`.
pub fn carryover_rho(factor: &NngpFactor, tau2: f64) -> f64 {
    carryover_rho_dense(factor.precision_dense(), tau2)
}

pub fn carryover_rho_dense(q: DMatrix<f64>, tau2: f64) -> f64 {
    let n = q.nrows();
    let eig = SymmetricEigen::new(q);
    let alpha = eig.eigenvectors.transpose() * DVector::from_element(n, 1.0);
    let rho: f64 = alpha
        .iter()
        .zip(eig.eigenvalues.iter())
        .map(|(a, l)| a * a / (tau2 * l.max(0.0) + 1.0))
        .sum::<f64>()
        / n as f64;
    rho.clamp(0.0, 1.0)
}

/// Two-block Gibbs sampler for `z = beta0 + w + eps`, one observation per
/// site, with the field precision and nugget held fixed. The field block is
/// drawn exactly from its dense Gaussian conditional.
#[derive(Debug, Clone)]
pub struct ExactInterceptGibbs {
    q: DMatrix<f64>,
    tau2: f64,
    z: DVector<f64>,
    mode: ParamMode,
    /// Lower Cholesky factor of `Q + I / tau2`.
    chol: DMatrix<f64>,
    q1: DVector<f64>,
    one_q_one: f64,
}

impl ExactInterceptGibbs {
    pub fn new(q: DMatrix<f64>, tau2: f64, z: Vec<f64>, mode: ParamMode) -> Result<Self> {
        let n = q.nrows();
        if z.len() != n || !(tau2 > 0.0) {
            return Err(NngpError::InvalidInput("response length or nugget is invalid".into()));
        }
        let prec = &q + DMatrix::identity(n, n) / tau2;
        let chol = prec
            .cholesky()
            .ok_or_else(|| NngpError::InvalidInput("field conditional precision is not positive definite".into()))?
            .l();
        let q1 = &q * DVector::from_element(n, 1.0);
        let one_q_one = q1.sum();
        Ok(Self {
            q,
            tau2,
            z: DVector::from_vec(z),
            mode,
            chol,
            q1,
            one_q_one,
        })
    }

    fn draw_field<R: Rng>(&self, rhs: DVector<f64>, rng: &mut R) -> DVector<f64> {
        let n = rhs.len();
        let y = self.chol.solve_lower_triangular(&rhs).expect("invertible");
        let mean = self.chol.tr_solve_lower_triangular(&y).expect("invertible");
        let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        mean + self.chol.tr_solve_lower_triangular(&eps).expect("invertible")
    }

    /// Runs `n_sweeps` sweeps (intercept, then field) and returns the pairs
    /// `(beta0 at t, mean of the field drawn given it)`.
    pub fn run(&self, n_sweeps: usize, seed: u64, beta0_init: f64) -> Vec<(f64, f64)> {
        let n = self.z.len();
        let nf = n as f64;
        let mut rng = seeded(seed);
        let mut beta0 = beta0_init;
        let mut out = Vec::with_capacity(n_sweeps);
        let mut w = match self.mode {
            ParamMode::Standard => DVector::zeros(n),
            ParamMode::Centered => DVector::from_element(n, beta0),
        };
        for _ in 0..n_sweeps {
            let g: f64 = rng.sample(StandardNormal);
            beta0 = match self.mode {
                ParamMode::Standard => (&self.z - &w).sum() / nf + (self.tau2 / nf).sqrt() * g,
                ParamMode::Centered => self.q1.dot(&w) / self.one_q_one + g / self.one_q_one.sqrt(),
            };
            let rhs = match self.mode {
                ParamMode::Standard => self.z.add_scalar(-beta0) / self.tau2,
                ParamMode::Centered => &self.q1 * beta0 + &self.z / self.tau2,
            };
            w = self.draw_field(rhs, &mut rng);
            out.push((beta0, w.mean()));
        }
        out
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.q
    }
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
