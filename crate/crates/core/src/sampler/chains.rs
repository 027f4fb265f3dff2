//! Model preparation, the Gibbs sweep and multi-chain runs.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::diagnostics::{Chain, ChainSet, LatentDraw};
use crate::error::{NngpError, Result};
use crate::geo::{find_nn_parents, order, LocationSet, OrderingKind, ParentDag};
use crate::graph::{color, moralize, ColoringAlgorithm};
use crate::rng::{Slot, StreamKey};
use crate::sampler::design::{Columns, Covariate, RegressionDesign};
use crate::sampler::updates::{
    beta0_centered_conditional, interweave_regression, joint_standard_conditional, update_beta, update_tau2,
    update_theta, update_theta_whitened, update_w_chromatic, InterweaveGram, ObsIndex, ThetaBounds, ThetaProposal, TAU2_FLOOR,
};
use crate::vecchia::{log_density, CovParams, FactorBuilder, NngpFactor};

/// Parametrization of the latent field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamMode {
    /// `w_s` has prior mean zero; the intercept sits in the mean of `z`.
    Standard,
    /// `w_c = w_s + beta0`; the intercept is the prior mean of the field.
    Centered,
}

impl ParamMode {
    pub fn name(self) -> &'static str {
        match self {
            ParamMode::Standard => "standard",
            ParamMode::Centered => "centered",
        }
    }
}

impl std::str::FromStr for ParamMode {
    type Err = NngpError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standard" => Ok(ParamMode::Standard),
            "centered" | "centred" => Ok(ParamMode::Centered),
            other => Err(NngpError::InvalidInput(format!("unknown parametrization '{other}'"))),
        }
    }
}

/// Observations: locations, response and covariates, all observation-indexed.
#[derive(Debug, Clone)]
pub struct SpatialData {
    pub locs: LocationSet,
    pub z: Vec<f64>,
    pub covariates: Vec<Covariate>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub m: usize,
    pub ordering: OrderingKind,
    pub coloring: ColoringAlgorithm,
    /// Seed of the random parts of the ordering.
    pub ordering_seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            m: 10,
            ordering: OrderingKind::MaxMin,
            coloring: ColoringAlgorithm::Dsatur,
            ordering_seed: 0,
        }
    }
}

/// Everything that stays fixed during sampling.
#[derive(Debug)]
pub struct Model {
    locs: LocationSet,
    z: Vec<f64>,
    design: RegressionDesign,
    dag: ParentDag,
    builder: FactorBuilder,
    classes: Vec<Vec<usize>>,
    obs: ObsIndex,
}

impl Model {
    pub fn new(data: SpatialData, spec: &ModelSpec) -> Result<Self> {
        let SpatialData { locs, z, covariates } = data;
        if z.len() != locs.n_obs() {
            return Err(NngpError::InvalidInput(format!(
                "{} responses for {} observations",
                z.len(),
                locs.n_obs()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(NngpError::InvalidInput("response contains non-finite values".into()));
        }
        let design = RegressionDesign::new(&covariates, locs.site_of_obs(), locs.n_sites())?;
        let ord = order(&locs, spec.ordering, spec.ordering_seed);
        let dag = find_nn_parents(&locs, &ord, spec.m)?;
        let graph = moralize(&dag);
        let coloring = color(&graph, spec.coloring);
        let classes = coloring
            .classes()
            .into_iter()
            .map(|c| c.into_iter().map(|pos| dag.site(pos)).collect())
            .collect();
        let builder = FactorBuilder::new(&locs, &dag)?;
        let obs = ObsIndex::new(locs.site_of_obs(), locs.n_sites());
        Ok(Self {
            locs,
            z,
            design,
            dag,
            builder,
            classes,
            obs,
        })
    }

    pub fn locs(&self) -> &LocationSet {
        &self.locs
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn design(&self) -> &RegressionDesign {
        &self.design
    }

    pub fn dag(&self) -> &ParentDag {
        &self.dag
    }

    pub fn builder(&self) -> &FactorBuilder {
        &self.builder
    }

    /// Colour classes as site indices.
    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn n_colors(&self) -> usize {
        self.classes.len()
    }

    pub fn obs_index(&self) -> &ObsIndex {
        &self.obs
    }

    /// A constant response carries no information about the noise variance,
    /// which is then pinned at [`TAU2_FLOOR`].
    pub fn degenerate_response(&self) -> bool {
        self.z.iter().all(|&v| v == self.z[0])
    }

    /// Names of the recorded parameters, in column order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["beta0".to_string()];
        names.extend(self.design.names().iter().map(|n| format!("beta_{n}")));
        names.extend(["tau2", "sigma2", "range", "w_mean"].map(String::from));
        names
    }

    /// Prior mean of the field under `state`.
    pub fn prior_mean(&self, state: &ModelState) -> Vec<f64> {
        let m = match state.mode {
            ParamMode::Centered => state.beta0,
            ParamMode::Standard => 0.0,
        };
        vec![m; self.locs.n_sites()]
    }

    fn field_at_obs(&self, w: &[f64]) -> Vec<f64> {
        self.locs.site_of_obs().iter().map(|&s| w[s]).collect()
    }

    /// Observation-level mean of `z` apart from the field.
    fn fixed_effects(&self, state: &ModelState) -> Vec<f64> {
        let cols: Vec<usize> = (0..self.design.p()).collect();
        let mut f = self.design.fitted(&state.beta, &cols);
        if state.mode == ParamMode::Standard {
            for v in &mut f {
                *v += state.beta0;
            }
        }
        f
    }

    /// Variance of the response around an ordinary least-squares fit and the fit itself.
    fn ols(&self) -> (f64, Vec<f64>, f64) {
        let p = self.design.p();
        let x = self.design.matrix();
        let mut rhs = DVector::zeros(p + 1);
        for (o, &zo) in self.z.iter().enumerate() {
            rhs[0] += zo;
            for j in 0..p {
                rhs[j + 1] += x[(o, j)] * zo;
            }
        }
        let l = self.design.joint_factor();
        let y = l.solve_lower_triangular(&rhs).expect("invertible factor");
        let coef = l.tr_solve_lower_triangular(&y).expect("invertible factor");
        let beta: Vec<f64> = coef.iter().skip(1).copied().collect();
        let cols: Vec<usize> = (0..p).collect();
        let fit = self.design.fitted(&beta, &cols);
        let ss: f64 = self.z.iter().zip(&fit).map(|(zo, f)| (zo - coef[0] - f).powi(2)).sum();
        let dof = (self.z.len() as f64 - p as f64 - 1.0).max(1.0);
        (coef[0], beta, ss / dof)
    }

    fn domain_diameter(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in self.locs.points() {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (0..3).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt()
    }

    /// Dispersed starting state for one chain.
    pub fn initial_state(&self, cfg: &SamplerConfig, key: &StreamKey) -> Result<ModelState> {
        if let Some(s) = &cfg.init {
            return Ok(s.clone());
        }
        let mut rng = key.rng(0, Slot::Init);
        let mut g = || -> f64 { rng.sample(StandardNormal) };
        let (b0, beta, s2) = self.ols();
        let s2 = if s2 > 1e-8 { s2 } else { 1e-8 };
        let range0 = cfg
            .range_init
            .unwrap_or_else(|| (self.domain_diameter() / 20.0).max(1e-6));
        let beta0 = b0 + 0.5 * s2.sqrt() * g();
        let tau2 = 0.5 * s2 * (0.5 * g()).exp();
        let tau2 = if self.degenerate_response() { TAU2_FLOOR } else { tau2 };
        let b = &cfg.bounds;
        let theta = CovParams::new(
            (0.5 * s2 * (0.5 * g()).exp()).clamp(b.sigma2.0, b.sigma2.1),
            (range0 * (0.5 * g()).exp()).clamp(b.range.0, b.range.1),
        )?;
        let w = match cfg.mode {
            ParamMode::Centered => vec![beta0; self.locs.n_sites()],
            ParamMode::Standard => vec![0.0; self.locs.n_sites()],
        };
        Ok(ModelState {
            beta0,
            beta,
            tau2,
            theta,
            w,
            mode: cfg.mode,
        })
    }

    /// Sampling context for `state` (factor, caches and proposal).
    pub fn context(&self, state: &ModelState, cfg: &SamplerConfig) -> Result<SweepContext> {
        Ok(SweepContext {
            factor: self.builder.build(&state.theta)?,
            gram: None,
            proposal: ThetaProposal::isotropic(cfg.theta_step),
            proposal_whitened: ThetaProposal::isotropic(cfg.theta_step),
        })
    }

    /// One full sweep: regression updates, nugget, covariance parameters,
    /// then the chromatic field update.
    pub fn sweep(
        &self,
        state: &mut ModelState,
        ctx: &mut SweepContext,
        cfg: &SamplerConfig,
        key: &StreamKey,
        iteration: u64,
    ) -> Result<SweepInfo> {
        let mut info = SweepInfo::default();
        let z = &self.z;
        match (state.mode, cfg.interweave) {
            (ParamMode::Centered, true) => {
                let w_obs = self.field_at_obs(&state.w);
                let mut rng = key.rng(iteration, Slot::Beta);
                update_beta(&self.design, Columns::Obs, z, &w_obs, &mut state.beta, state.tau2, &mut rng)?;
                if ctx.gram.is_none() {
                    ctx.gram = Some(InterweaveGram::new(&ctx.factor, &self.design)?);
                }
                let gram = ctx.gram.as_ref().expect("cached above");
                let mut rng = key.rng(iteration, Slot::Interweave);
                interweave_regression(
                    &self.design,
                    gram,
                    &ctx.factor,
                    z,
                    self.locs.site_of_obs(),
                    &mut state.w,
                    &mut state.beta0,
                    &mut state.beta,
                    state.tau2,
                    &mut rng,
                )?;
            }
            (ParamMode::Centered, false) => {
                let w_obs = self.field_at_obs(&state.w);
                let mut rng = key.rng(iteration, Slot::Beta);
                update_beta(&self.design, Columns::All, z, &w_obs, &mut state.beta, state.tau2, &mut rng)?;
                let mut rng = key.rng(iteration, Slot::Beta0);
                state.beta0 = beta0_centered_conditional(&state.w, &ctx.factor).draw(&mut rng)[0];
            }
            (ParamMode::Standard, _) => {
                let w_obs = self.field_at_obs(&state.w);
                let mut rng = key.rng(iteration, Slot::Beta);
                let d = joint_standard_conditional(&self.design, z, &w_obs, state.tau2).draw(&mut rng);
                state.beta0 = d[0];
                state.beta.copy_from_slice(&d.as_slice()[1..]);
            }
        }

        let fixed = self.fixed_effects(state);
        if cfg.update_tau2 && self.degenerate_response() {
            state.tau2 = TAU2_FLOOR;
            info.tau2_floored = true;
        } else if cfg.update_tau2 {
            let site_of_obs = self.locs.site_of_obs();
            let ss: f64 = (0..z.len())
                .map(|o| (z[o] - fixed[o] - state.w[site_of_obs[o]]).powi(2))
                .sum();
            let mut rng = key.rng(iteration, Slot::Tau2);
            state.tau2 = match update_tau2(ss, z.len(), &mut rng) {
                Ok(t) if t >= TAU2_FLOOR => t,
                Ok(_) | Err(NngpError::NonPositiveScale) => {
                    info.tau2_floored = true;
                    TAU2_FLOOR
                }
                Err(e) => return Err(e),
            };
        }

        let mu = self.prior_mean(state);
        let resid: Vec<f64> = z.iter().zip(&fixed).map(|(a, b)| a - b).collect();
        let sums = self.obs.site_sums(&resid);
        if cfg.update_theta {
            let ld = log_density(&state.w, &mu, &ctx.factor);
            let mut rng = key.rng(iteration, Slot::Theta);
            let step = update_theta(
                &ctx.factor,
                ld,
                &state.w,
                &mu,
                &self.builder,
                &ctx.proposal,
                &cfg.bounds,
                &mut rng,
            );
            if let Some(f) = step.factor {
                ctx.set_factor(f);
                state.theta = *ctx.factor.theta();
            }
            info.theta_accepted = step.accepted;
            if cfg.theta_whitened {
                let mut rng = key.rng(iteration, Slot::ThetaWhitened);
                let (step, w_new) = update_theta_whitened(
                    &ctx.factor,
                    &state.w,
                    &mu,
                    &self.obs,
                    &sums,
                    state.tau2,
                    &self.builder,
                    &ctx.proposal_whitened,
                    &cfg.bounds,
                    &mut rng,
                );
                if let (Some(f), Some(w)) = (step.factor, w_new) {
                    ctx.set_factor(f);
                    state.theta = *ctx.factor.theta();
                    state.w = w;
                }
                info.whitened_accepted = step.accepted;
            }
        }

        update_w_chromatic(
            &mut state.w,
            &mu,
            &ctx.factor,
            &self.classes,
            &self.obs,
            &sums,
            state.tau2,
            key,
            iteration,
        );
        Ok(info)
    }

    /// Parameter values recorded for `state`, in [`Model::param_names`] order.
    pub fn record(&self, state: &ModelState) -> Vec<f64> {
        let (b0, beta) = self.design.to_original(state.beta0, &state.beta);
        let mut v = Vec::with_capacity(beta.len() + 5);
        v.push(b0);
        v.extend(beta);
        v.push(state.tau2);
        v.push(state.theta.sigma2);
        v.push(state.theta.range);
        v.push(state.w.iter().sum::<f64>() / state.w.len() as f64);
        v
    }

    fn run_chain(&self, cfg: &SamplerConfig, chain: usize, latent_cap: usize) -> Result<(Chain, ChainStats)> {
        let key = StreamKey::new(cfg.seed, chain as u64);
        let mut state = self.initial_state(cfg, &key)?;
        let mut ctx = self.context(&state, cfg)?;
        let names = self.param_names();
        let mut out = Chain {
            iterations: Vec::new(),
            values: vec![Vec::new(); names.len()],
            latent: Vec::new(),
        };
        let kept = cfg.n_kept();
        let stride = if latent_cap == 0 { usize::MAX } else { kept.div_ceil(latent_cap).max(1) };
        let mut stats = ChainStats::default();
        let mut adapt = [Adaptation::default(), Adaptation::default()];
        let mut history: Vec<[f64; 2]> = Vec::new();
        for it in 0..cfg.n_iter {
            let info = self.sweep(&mut state, &mut ctx, cfg, &key, it as u64 + 1)?;
            stats.tau2_floored += info.tau2_floored as usize;
            if it < cfg.burn_in {
                history.push([state.theta.sigma2.ln(), state.theta.range.ln()]);
                if cfg.update_theta {
                    adapt[0].accepted += info.theta_accepted as usize;
                    adapt[1].accepted += info.whitened_accepted as usize;
                    if cfg.adapt_window > 0 && (it + 1) % cfg.adapt_window == 0 {
                        let shape = (it + 1 >= 100).then(|| empirical_cov(&history[history.len() / 2..]));
                        adapt[0].end_window(&mut ctx.proposal, cfg, shape);
                        adapt[1].end_window(&mut ctx.proposal_whitened, cfg, shape);
                    }
                }
                continue;
            }
            stats.accepted += info.theta_accepted as usize;
            stats.sampled += 1;
            let k = it - cfg.burn_in;
            if !k.is_multiple_of(cfg.thin) {
                continue;
            }
            let idx = k / cfg.thin;
            out.iterations.push(it + 1);
            for (col, v) in out.values.iter_mut().zip(self.record(&state)) {
                col.push(v);
            }
            if idx.is_multiple_of(stride) && out.latent.len() < latent_cap {
                out.latent.push(LatentDraw {
                    iteration: it + 1,
                    prior_mean: self.prior_mean(&state)[0],
                    sigma2: state.theta.sigma2,
                    range: state.theta.range,
                    w: state.w.clone(),
                });
            }
        }
        Ok((out, stats))
    }
}

#[derive(Debug, Default)]
struct Adaptation {
    accepted: usize,
    shaped: bool,
}

impl Adaptation {
    /// Moves the log step scale toward the target acceptance and, once
    /// enough history exists, takes the proposal shape from it.
    fn end_window(&mut self, p: &mut ThetaProposal, cfg: &SamplerConfig, shape: Option<[[f64; 2]; 2]>) {
        let rate = self.accepted as f64 / cfg.adapt_window as f64;
        p.log_scale += 2.0 * (rate - cfg.target_accept);
        self.accepted = 0;
        if let Some(c) = shape {
            if p.set_shape(c) && !self.shaped {
                self.shaped = true;
                p.log_scale = (2.38 / 2f64.sqrt()).ln();
            }
        }
    }
}

fn empirical_cov(xs: &[[f64; 2]]) -> [[f64; 2]; 2] {
    let n = xs.len() as f64;
    let m0 = xs.iter().map(|x| x[0]).sum::<f64>() / n;
    let m1 = xs.iter().map(|x| x[1]).sum::<f64>() / n;
    let mut c = [[0.0; 2]; 2];
    for x in xs {
        let d = [x[0] - m0, x[1] - m1];
        for a in 0..2 {
            for b in 0..2 {
                c[a][b] += d[a] * d[b] / (n - 1.0);
            }
        }
    }
    let jitter = 1e-10 * (c[0][0] + c[1][1]).max(1e-12);
    c[0][0] += jitter;
    c[1][1] += jitter;
    c
}

/// Current values of all unknowns. Coefficients are on the scaled design.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub tau2: f64,
    pub theta: CovParams,
    /// Site-indexed field in the parametrization given by `mode`.
    pub w: Vec<f64>,
    pub mode: ParamMode,
}

/// Mutable per-chain machinery that is not part of the state.
#[derive(Debug)]
pub struct SweepContext {
    pub factor: NngpFactor,
    gram: Option<InterweaveGram>,
    /// Proposal of the step with the field held fixed.
    pub proposal: ThetaProposal,
    /// Proposal of the step with the whitened field held fixed.
    pub proposal_whitened: ThetaProposal,
}

impl SweepContext {
    fn set_factor(&mut self, f: NngpFactor) {
        self.factor = f;
        self.gram = None;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepInfo {
    pub theta_accepted: bool,
    pub whitened_accepted: bool,
    pub tau2_floored: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct ChainStats {
    accepted: usize,
    sampled: usize,
    tau2_floored: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub n_chains: usize,
    pub thin: usize,
    pub mode: ParamMode,
    pub interweave: bool,
    pub seed: u64,
    /// Initial random-walk standard deviation on the log scale.
    pub theta_step: f64,
    pub adapt_window: usize,
    pub target_accept: f64,
    pub bounds: ThetaBounds,
    /// Starting range; defaults to a twentieth of the domain diameter.
    pub range_init: Option<f64>,
    /// Maximum number of latent-field draws kept over all chains; `None` keeps all.
    pub max_latent_draws: Option<usize>,
    pub update_theta: bool,
    /// Adds a second covariance-parameter step in the whitened parametrization.
    pub theta_whitened: bool,
    pub update_tau2: bool,
    /// Common starting state for every chain, replacing the dispersed default.
    pub init: Option<ModelState>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_iter: 3000,
            burn_in: 1000,
            n_chains: 3,
            thin: 1,
            mode: ParamMode::Centered,
            interweave: true,
            seed: 1,
            theta_step: 0.05,
            adapt_window: 25,
            target_accept: 0.23,
            bounds: ThetaBounds::default(),
            range_init: None,
            max_latent_draws: Some(500),
            update_theta: true,
            theta_whitened: true,
            update_tau2: true,
            init: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NngpError::InvalidInput(m.into()));
        if self.burn_in > self.n_iter {
            return bad("burn-in exceeds the number of iterations");
        }
        if self.n_chains == 0 {
            return bad("at least one chain is required");
        }
        if self.thin == 0 {
            return bad("thinning interval must be positive");
        }
        if !(self.theta_step >= 0.0 && self.theta_step.is_finite()) {
            return bad("theta step must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.target_accept) {
            return bad("target acceptance must lie in [0, 1]");
        }
        if let Some(s) = &self.init {
            if s.mode != self.mode {
                return bad("initial state has a different parametrization");
            }
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn n_kept(&self) -> usize {
        (self.n_iter - self.burn_in).div_ceil(self.thin)
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub chains: ChainSet,
    /// Per-chain acceptance rate of the covariance-parameter step after burn-in.
    pub acceptance: Vec<f64>,
    pub warnings: Vec<String>,
    pub elapsed_secs: f64,
}

/// Runs independent chains in parallel.
pub fn run_chains(model: &Model, cfg: &SamplerConfig) -> Result<FitResult> {
    cfg.validate()?;
    if let Some(s) = &cfg.init {
        if s.beta.len() != model.design.p() || s.w.len() != model.locs.n_sites() {
            return Err(NngpError::InvalidInput("initial state does not match the model".into()));
        }
    }
    let start = Instant::now();
    let caps: Vec<usize> = (0..cfg.n_chains)
        .map(|c| match cfg.max_latent_draws {
            None => usize::MAX,
            Some(l) => l / cfg.n_chains + usize::from(c < l % cfg.n_chains),
        })
        .collect();
    let runs: Vec<(Chain, ChainStats)> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| model.run_chain(cfg, c, caps[c]))
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    let floored: usize = runs.iter().map(|(_, s)| s.tau2_floored).sum();
    if model.degenerate_response() {
        warnings.push(format!(
            "degenerate data: response has zero variance; tau2 held at floor {TAU2_FLOOR:e}"
        ));
    } else if floored > 0 {
        warnings.push(format!(
            "degenerate data: residual sum of squares vanished in {floored} sweeps; tau2 held at floor {TAU2_FLOOR:e}"
        ));
    }
    let acceptance = runs
        .iter()
        .map(|(_, s)| if s.sampled == 0 { f64::NAN } else { s.accepted as f64 / s.sampled as f64 })
        .collect();
    let chains = ChainSet::new(model.param_names(), runs.into_iter().map(|(c, _)| c).collect())?;
    Ok(FitResult {
        chains,
        acceptance,
        warnings,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}
