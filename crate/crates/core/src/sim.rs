//! Synthetic datasets on the square `[0, 50]^2`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{NngpError, Result};
use crate::geo::{find_nn_parents, order, LocationSet, OrderingKind};
use crate::rng::StreamKey;
use crate::sampler::{Covariate, CovariateKind, SpatialData};
use crate::vecchia::{build_factor, exp_covariance, sample_prior, CovParams};

pub const SIDE: f64 = 50.0;
pub const TOY_SIGMA2: f64 = 1.0;
pub const TOY_DECAY: f64 = 0.5;
pub const TOY_TAU2: f64 = 5.0;

/// Above this size the field is drawn from a dense-neighbor approximation
/// instead of the exact covariance.
pub const EXACT_LIMIT: usize = 4000;
const APPROX_NEIGHBORS: usize = 30;

#[derive(Debug, Clone)]
pub struct Simulated {
    pub coords: Vec<[f64; 2]>,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub covariates: Vec<Covariate>,
    pub beta: Vec<f64>,
    pub theta: CovParams,
    pub tau2: f64,
}

impl Simulated {
    pub fn to_data(&self) -> Result<SpatialData> {
        let locs = LocationSet::from_observations(&self.coords.iter().map(|c| c.to_vec()).collect::<Vec<_>>())?;
        Ok(SpatialData {
            locs,
            z: self.z.clone(),
            covariates: self.covariates.clone(),
        })
    }
}

/// Zero-mean field with exponential covariance at `coords`.
pub fn simulate_field(coords: &[[f64; 2]], theta: &CovParams, key: &StreamKey) -> Result<Vec<f64>> {
    let n = coords.len();
    let mut rng = key.rng(0, 1u64);
    let dist = |a: usize, b: usize| ((coords[a][0] - coords[b][0]).powi(2) + (coords[a][1] - coords[b][1]).powi(2)).sqrt();
    if n <= EXACT_LIMIT {
        let c = DMatrix::from_fn(n, n, |a, b| exp_covariance(dist(a, b), theta));
        let l = c
            .cholesky()
            .ok_or_else(|| NngpError::InvalidInput("simulation covariance is singular (duplicate sites?)".into()))?
            .l();
        let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        return Ok((l * eps).iter().copied().collect());
    }
    let locs = LocationSet::new(coords.iter().map(|c| c.to_vec()).collect())?;
    if locs.n_sites() != n {
        return Err(NngpError::InvalidInput("duplicate simulated sites".into()));
    }
    let dag = find_nn_parents(&locs, &order(&locs, OrderingKind::MaxMin, key.seed), APPROX_NEIGHBORS)?;
    let f = build_factor(&locs, &dag, theta)?;
    Ok(sample_prior(&f, &vec![0.0; n], &mut rng))
}

fn uniform_sites(n: usize, key: &StreamKey) -> Vec<[f64; 2]> {
    let mut rng = key.rng(0, 0u64);
    (0..n).map(|_| [rng.gen::<f64>() * SIDE, rng.gen::<f64>() * SIDE]).collect()
}

fn check_n(n: usize) -> Result<()> {
    if n < 10 {
        return Err(NngpError::InvalidInput(format!("simulation needs n >= 10, got {n}")));
    }
    Ok(())
}

/// Pure field plus noise: `z = w + eps`, no covariates.
pub fn toy1(n: usize, seed: u64) -> Result<Simulated> {
    check_n(n)?;
    let key = StreamKey::new(seed, 1);
    let theta = CovParams::from_decay(TOY_SIGMA2, TOY_DECAY)?;
    let coords = uniform_sites(n, &key);
    let w = simulate_field(&coords, &theta, &key)?;
    let mut rng = key.rng(0, 4u64);
    let z = w
        .iter()
        .map(|wi| wi + TOY_TAU2.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(Simulated {
        coords,
        z,
        w,
        covariates: vec![],
        beta: vec![],
        theta,
        tau2: TOY_TAU2,
    })
}

/// Index of the unit band of the first coordinate, `[k, k+1)` for
/// `k = 1..=49` with the last band closed at the domain edge.
pub fn band_of(x: f64) -> Option<usize> {
    if !(1.0..=SIDE).contains(&x) {
        return None;
    }
    Some(((x.floor() as usize).min(SIDE as usize - 1)) - 1)
}

pub const N_BANDS: usize = 49;

/// Field plus 49 band indicators and 49 white-noise covariates with
/// standard normal coefficients.
pub fn toy2(n: usize, seed: u64) -> Result<Simulated> {
    check_n(n)?;
    let key = StreamKey::new(seed, 2);
    let theta = CovParams::from_decay(TOY_SIGMA2, TOY_DECAY)?;
    let coords = uniform_sites(n, &key);
    let w = simulate_field(&coords, &theta, &key)?;
    let mut rng = key.rng(0, 2u64);
    let mut covariates = Vec::with_capacity(2 * N_BANDS);
    for k in 0..N_BANDS {
        covariates.push(Covariate {
            name: format!("band{}", k + 1),
            kind: CovariateKind::Site,
            values: coords.iter().map(|c| f64::from(band_of(c[0]) == Some(k))).collect(),
        });
    }
    for k in 0..N_BANDS {
        covariates.push(Covariate {
            name: format!("noise{}", k + 1),
            kind: CovariateKind::Site,
            values: (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        });
    }
    let mut rng = key.rng(0, 3u64);
    let beta: Vec<f64> = (0..2 * N_BANDS).map(|_| rng.sample(StandardNormal)).collect();
    let mut rng = key.rng(0, 4u64);
    let z = (0..n)
        .map(|i| {
            let xb: f64 = covariates.iter().zip(&beta).map(|(c, b)| c.values[i] * b).sum();
            w[i] + xb + TOY_TAU2.sqrt() * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    Ok(Simulated {
        coords,
        z,
        w,
        covariates,
        beta,
        theta,
        tau2: TOY_TAU2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy1_variance_is_additive() {
        let s = toy1(1000, 3).unwrap();
        let m = s.z.iter().sum::<f64>() / 1000.0;
        let v = s.z.iter().map(|z| (z - m).powi(2)).sum::<f64>() / 999.0;
        // The field is correlated, so its empirical variance is noisier than i.i.d.
        assert!((v - 6.0).abs() < 1.0, "{v}");
        assert!(s.coords.iter().all(|c| (0.0..SIDE).contains(&c[0]) && (0.0..SIDE).contains(&c[1])));
    }

    #[test]
    fn toy2_bands_are_disjoint() {
        let s = toy2(500, 4).unwrap();
        assert_eq!(s.covariates.len(), 98);
        for i in 0..500 {
            let row: f64 = s.covariates[..N_BANDS].iter().map(|c| c.values[i]).sum();
            assert!(row == 0.0 || row == 1.0);
            assert_eq!(row == 1.0, s.coords[i][0] >= 1.0);
        }
        assert_eq!(band_of(50.0), Some(48));
        assert_eq!(band_of(49.5), Some(48));
        assert_eq!(band_of(1.0), Some(0));
        assert_eq!(band_of(0.99), None);
    }

    #[test]
    fn same_seed_same_data() {
        let a = toy2(100, 9).unwrap();
        let b = toy2(100, 9).unwrap();
        assert_eq!(a.z, b.z);
        assert_eq!(a.covariates, b.covariates);
        assert_ne!(toy1(100, 9).unwrap().z, toy1(100, 10).unwrap().z);
    }

    #[test]
    fn approximate_field_has_unit_variance() {
        let key = StreamKey::new(1, 0);
        let mut r = key.rng(5, 5u64);
        let coords: Vec<[f64; 2]> = (0..EXACT_LIMIT + 500)
            .map(|_| [r.gen::<f64>() * 200.0, r.gen::<f64>() * 200.0])
            .collect();
        let w = simulate_field(&coords, &CovParams::new(1.0, 2.0).unwrap(), &key).unwrap();
        let v = w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64;
        assert!((v - 1.0).abs() < 0.15, "{v}");
    }
}
