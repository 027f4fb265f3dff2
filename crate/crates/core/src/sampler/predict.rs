//! Kriging of the latent field at new locations from retained draws.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::diagnostics::{ChainSet, LatentDraw};
use crate::error::{NngpError, Result};
use crate::geo::LocationSet;
use crate::kdtree::KdTree;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub sd: f64,
}

/// Conditional mean and variance of the field at a point with distances
/// `d0` to its neighbors and `dnn` among them, under one draw.
pub fn kriging_conditional(d0: &[f64], dnn: &DMatrix<f64>, w_nn: &[f64], draw: &LatentDraw) -> (f64, f64) {
    let k = d0.len();
    if k == 0 {
        return (draw.prior_mean, draw.sigma2);
    }
    if let Some(j) = d0.iter().position(|&d| d == 0.0) {
        return (w_nn[j], 0.0);
    }
    let r = draw.range;
    let corr = DMatrix::from_fn(k, k, |a, b| (-dnn[(a, b)] / r).exp());
    let c0 = DVector::from_iterator(k, d0.iter().map(|d| (-d / r).exp()));
    let Some(chol) = corr.cholesky() else {
        // Numerically coincident neighbors: condition on the nearest one alone.
        let j = (0..k).min_by(|&a, &b| d0[a].total_cmp(&d0[b])).expect("k > 0");
        let rho = c0[j];
        let mean = draw.prior_mean + rho * (w_nn[j] - draw.prior_mean);
        return (mean, draw.sigma2 * (1.0 - rho * rho).max(0.0));
    };
    let b = chol.solve(&c0);
    let mean = draw.prior_mean
        + b.iter()
            .zip(w_nn)
            .map(|(bi, wi)| bi * (wi - draw.prior_mean))
            .sum::<f64>();
    let var = draw.sigma2 * (1.0 - c0.dot(&b)).max(0.0);
    (mean, var)
}

/// Predictive mean and sd of the latent field at `new_points`, conditioning
/// each retained draw on the `m` nearest observed sites.
///
/// The reported moments are the mixture over draws of the per-draw Gaussian
/// conditionals: the mean of the conditional means, and the mean
/// conditional variance plus the variance of the conditional means.
pub fn predict(chains: &ChainSet, locs: &LocationSet, new_points: &[Vec<f64>], m: usize) -> Result<Vec<Prediction>> {
    let draws: Vec<&LatentDraw> = chains.latent_draws().collect();
    if draws.is_empty() {
        return Err(NngpError::MissingLatentSamples);
    }
    if let Some(d) = draws.iter().find(|d| d.w.len() != locs.n_sites()) {
        return Err(NngpError::InvalidInput(format!(
            "latent draw has {} sites, locations have {}",
            d.w.len(),
            locs.n_sites()
        )));
    }
    let dim = locs.dim();
    let mut queries = Vec::with_capacity(new_points.len());
    for p in new_points {
        if p.len() != dim || p.iter().any(|v| !v.is_finite()) {
            return Err(NngpError::InvalidInput(format!(
                "prediction point {p:?} is not a finite {dim}-dimensional location"
            )));
        }
        let mut q = [0.0; 3];
        q[..dim].copy_from_slice(p);
        queries.push(q);
    }
    let indices: Vec<usize> = (0..locs.n_sites()).collect();
    let tree = KdTree::build(locs.points(), &indices, dim);
    let k = m.min(locs.n_sites());
    Ok(queries
        .par_iter()
        .map(|q| {
            let nn: Vec<usize> = tree.nearest_below(q, k, usize::MAX).into_iter().map(|(_, i)| i).collect();
            let d0: Vec<f64> = nn.iter().map(|&i| crate::kdtree::dist2(locs.point(i), q).sqrt()).collect();
            let dnn = DMatrix::from_fn(nn.len(), nn.len(), |a, b| locs.distance(nn[a], nn[b]));
            let mut means = Vec::with_capacity(draws.len());
            let mut var_sum = 0.0;
            for d in &draws {
                let w_nn: Vec<f64> = nn.iter().map(|&i| d.w[i]).collect();
                let (mu, v) = kriging_conditional(&d0, &dnn, &w_nn, d);
                means.push(mu);
                var_sum += v;
            }
            let s = draws.len() as f64;
            let mean = means.iter().sum::<f64>() / s;
            let spread = means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s;
            Prediction {
                mean,
                sd: (var_sum / s + spread).max(0.0).sqrt(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::Chain;
    use crate::rng;
    use rand::Rng;

    fn set_with(draws: Vec<LatentDraw>) -> ChainSet {
        let chain = Chain {
            iterations: vec![],
            values: vec![],
            latent: draws,
        };
        ChainSet::new(vec![], vec![chain]).unwrap()
    }

    fn random_sites(n: usize, seed: u64) -> LocationSet {
        let mut r = rng::seeded(seed);
        LocationSet::new((0..n).map(|_| vec![r.gen::<f64>() * 5.0, r.gen::<f64>() * 5.0]).collect()).unwrap()
    }

    fn draw(n: usize, seed: u64, prior_mean: f64) -> LatentDraw {
        let mut r = rng::seeded(seed);
        LatentDraw {
            iteration: 1,
            prior_mean,
            sigma2: 0.5 + r.gen::<f64>(),
            range: 0.5 + r.gen::<f64>() * 2.0,
            w: (0..n).map(|_| prior_mean + r.gen::<f64>() - 0.5).collect(),
        }
    }

    #[test]
    fn full_conditioning_matches_dense_kriging() {
        let n = 10;
        let locs = random_sites(n, 1);
        let d = draw(n, 2, 0.3);
        let s0 = [2.2, 3.1];
        let c = DMatrix::from_fn(n, n, |a, b| d.sigma2 * (-locs.distance(a, b) / d.range).exp());
        let c0 = DVector::from_fn(n, |a, _| {
            let p = locs.coords(a);
            d.sigma2 * (-((p[0] - s0[0]).powi(2) + (p[1] - s0[1]).powi(2)).sqrt() / d.range).exp()
        });
        let ci = c.clone().try_inverse().unwrap();
        let dev = DVector::from_iterator(n, d.w.iter().map(|w| w - d.prior_mean));
        let mean = d.prior_mean + (c0.transpose() * &ci * dev)[0];
        let var = d.sigma2 - (c0.transpose() * &ci * &c0)[0];
        let p = predict(&set_with(vec![d]), &locs, &[s0.to_vec()], n).unwrap();
        assert!((p[0].mean - mean).abs() < 1e-8);
        assert!((p[0].sd.powi(2) - var).abs() < 1e-8);
    }

    #[test]
    fn coincident_site_returns_the_draws() {
        let locs = random_sites(30, 3);
        let draws: Vec<LatentDraw> = (0..20).map(|s| draw(30, 10 + s, 1.0)).collect();
        let at = locs.coords(7).to_vec();
        let vals: Vec<f64> = draws.iter().map(|d| d.w[7]).collect();
        let p = predict(&set_with(draws), &locs, &[at], 5).unwrap()[0];
        let mean = vals.iter().sum::<f64>() / 20.0;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 20.0).sqrt();
        assert!((p.mean - mean).abs() < 1e-12);
        assert!((p.sd - sd).abs() < 1e-12);
    }

    #[test]
    fn far_point_reverts_to_prior() {
        let locs = random_sites(30, 4);
        let d = draw(30, 5, -2.0);
        let s2 = d.sigma2;
        let p = predict(&set_with(vec![d]), &locs, &[vec![1e6, 1e6]], 5).unwrap()[0];
        assert!((p.mean + 2.0).abs() < 1e-12);
        assert!((p.sd - s2.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let locs = random_sites(5, 6);
        assert_eq!(
            predict(&set_with(vec![]), &locs, &[vec![0.0, 0.0]], 3),
            Err(NngpError::MissingLatentSamples)
        );
        let d = draw(5, 7, 0.0);
        assert!(predict(&set_with(vec![d.clone()]), &locs, &[vec![0.0]], 3).is_err());
        assert!(predict(&set_with(vec![d]), &locs, &[], 3).unwrap().is_empty());
    }
}
