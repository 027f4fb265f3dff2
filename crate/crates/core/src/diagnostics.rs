//! Posterior summaries and convergence diagnostics over multiple chains.

use crate::error::{NngpError, Result};

/// A retained draw of the latent field together with the parameters needed
/// to condition on it.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDraw {
    pub iteration: usize,
    /// Prior mean of the field for this draw (the intercept in the centered
    /// parametrization, zero otherwise).
    pub prior_mean: f64,
    pub sigma2: f64,
    pub range: f64,
    /// Site-indexed field values.
    pub w: Vec<f64>,
}

/// Retained draws of one chain; `values[p][t]` is parameter `p` at draw `t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Chain {
    pub iterations: Vec<usize>,
    pub values: Vec<Vec<f64>>,
    pub latent: Vec<LatentDraw>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    names: Vec<String>,
    chains: Vec<Chain>,
}

impl ChainSet {
    pub fn new(names: Vec<String>, chains: Vec<Chain>) -> Result<Self> {
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(NngpError::InvalidInput(format!("duplicate parameter '{a}'")));
            }
        }
        for c in &chains {
            if c.values.len() != names.len() || c.values.iter().any(|v| v.len() != c.iterations.len()) {
                return Err(NngpError::InvalidInput("chain shape does not match parameter names".into()));
            }
        }
        Ok(Self { names, chains })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn chains(&self) -> &[Chain] {
        &self.chains
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Draws of one parameter, one slice per chain.
    pub fn param(&self, name: &str) -> Option<Vec<&[f64]>> {
        let p = self.index_of(name)?;
        Some(self.chains.iter().map(|c| c.values[p].as_slice()).collect())
    }

    pub fn pooled(&self, name: &str) -> Option<Vec<f64>> {
        Some(self.param(name)?.concat())
    }

    /// All retained latent draws across chains, in chain order.
    pub fn latent_draws(&self) -> impl Iterator<Item = &LatentDraw> {
        self.chains.iter().flat_map(|c| c.latent.iter())
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

const WITHIN_FLOOR: f64 = 1e-300;

/// Potential scale reduction. With `split`, each chain is halved first
/// (dropping the middle draw of odd-length chains).
pub fn rhat(chains: &[&[f64]], split: bool) -> Result<f64> {
    if chains.len() < 2 || chains.iter().any(|c| c.len() < 10) {
        return Err(NngpError::NotEnoughSamples(
            "R-hat needs at least two chains of ten or more draws".into(),
        ));
    }
    let parts: Vec<&[f64]> = if split {
        chains
            .iter()
            .flat_map(|c| {
                let h = c.len() / 2;
                [&c[..h], &c[c.len() - h..]]
            })
            .collect()
    } else {
        chains.to_vec()
    };
    let n = parts.first().map_or(0, |c| c.len());
    if parts.iter().any(|c| c.len() != n) {
        return Err(NngpError::InvalidInput("R-hat needs equal-length chains".into()));
    }
    let means: Vec<f64> = parts.iter().map(|c| mean(c)).collect();
    let w = parts.iter().map(|c| var(c)).sum::<f64>() / parts.len() as f64;
    let b = n as f64 * var(&means);
    let nf = n as f64;
    let vhat = (nf - 1.0) / nf * w + b / nf;
    if vhat == 0.0 {
        // Identical constant chains.
        return Ok(1.0);
    }
    Ok((vhat / w.max(WITHIN_FLOOR)).sqrt())
}

/// Sample autocorrelation for lags `0..=max_lag` (biased normalization).
pub fn acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(NngpError::NotEnoughSamples("autocorrelation needs two draws".into()));
    }
    let n = x.len();
    let m = mean(x);
    let c0: f64 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    let max_lag = max_lag.min(n - 1);
    if !(c0 > 0.0) {
        let mut out = vec![0.0; max_lag + 1];
        out[0] = 1.0;
        return Ok(out);
    }
    Ok((0..=max_lag)
        .map(|k| {
            let c: f64 = (0..n - k).map(|t| (x[t] - m) * (x[t + k] - m)).sum::<f64>() / n as f64;
            c / c0
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ess {
    pub value: f64,
    /// Set when the sequence is constant; the value is then 0.
    pub degenerate: bool,
}

/// Effective sample size by Geyer's initial positive sequence, averaging
/// the autocorrelations of the chains.
pub fn ess(chains: &[&[f64]]) -> Result<Ess> {
    let n = chains.first().map_or(0, |c| c.len());
    if chains.is_empty() || n < 4 || chains.iter().any(|c| c.len() != n) {
        return Err(NngpError::NotEnoughSamples(
            "ESS needs equal-length chains of at least four draws".into(),
        ));
    }
    let total = (n * chains.len()) as f64;
    let constant = chains.iter().all(|c| c.iter().all(|v| *v == c[0]));
    if constant {
        return Ok(Ess {
            value: 0.0,
            degenerate: true,
        });
    }
    let max_lag = n - 1;
    let acfs: Vec<Vec<f64>> = chains.iter().map(|c| acf(c, max_lag)).collect::<Result<_>>()?;
    let rho = |k: usize| acfs.iter().map(|a| a[k]).sum::<f64>() / acfs.len() as f64;
    let mut sum = 0.0;
    let mut k = 0;
    while k + 1 <= max_lag {
        let pair = rho(k) + rho(k + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 2;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / total.log10().max(1.0));
    Ok(Ess {
        value: total / tau,
        degenerate: false,
    })
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub median: f64,
    pub q975: f64,
}

/// Posterior summary of pooled draws.
pub fn summarize(x: &[f64]) -> Result<Summary> {
    if x.is_empty() {
        return Err(NngpError::NotEnoughSamples("no draws to summarize".into()));
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(Summary {
        mean: mean(x),
        sd: if x.len() > 1 { var(x).sqrt() } else { 0.0 },
        q025: quantile_sorted(&s, 0.025),
        median: quantile_sorted(&s, 0.5),
        q975: quantile_sorted(&s, 0.975),
    })
}
