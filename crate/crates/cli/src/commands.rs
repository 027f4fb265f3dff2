use std::path::{Path, PathBuf};

use nngp::bench::{bench_coloring, variance_sensitivity, FactorTable, Response, BENCH_COLUMNS};
use nngp::diagnostics::{ess, rhat, summarize, Chain, ChainSet, LatentDraw};
use nngp::geo::LocationSet;
use nngp::sampler::{predict, run_chains, CovariateKind, Model, ModelSpec, SamplerConfig};
use nngp::sim::{toy1, toy2, Simulated};

use crate::config::{bench_design, RunConfig};
use crate::error::{CliError, CliResult};
use crate::table::{num, read_observations, read_points, read_table, Writer};

const COORD_NAMES: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Toy {
    Toy1,
    Toy2,
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn chain_path(dir: &Path, stem: &str, chain: usize) -> PathBuf {
    dir.join(format!("{stem}_{chain}.csv"))
}

/// Writes `observations.csv`, the truth files and a `config.ini` ready for `fit`.
pub fn simulate(toy: Toy, n: usize, seed: u64, out: &Path) -> CliResult<()> {
    let sim: Simulated = match toy {
        Toy::Toy1 => toy1(n, seed)?,
        Toy::Toy2 => toy2(n, seed)?,
    };
    create_dir(out)?;

    let mut header = vec!["x".to_string(), "y".to_string(), "response".to_string()];
    header.extend(sim.covariates.iter().map(|c| c.name.clone()));
    let mut w = Writer::create(&out.join("observations.csv"), &header)?;
    for i in 0..sim.z.len() {
        let mut row = vec![num(sim.coords[i][0]), num(sim.coords[i][1]), num(sim.z[i])];
        row.extend(sim.covariates.iter().map(|c| num(c.values[i])));
        w.row(&row)?;
    }
    w.finish()?;

    let mut w = Writer::create(&out.join("truth.csv"), &["site", "x", "y", "w"])?;
    for (i, (c, wi)) in sim.coords.iter().zip(&sim.w).enumerate() {
        w.row(&[i.to_string(), num(c[0]), num(c[1]), num(*wi)])?;
    }
    w.finish()?;

    let mut w = Writer::create(&out.join("truth_params.csv"), &["parameter", "value"])?;
    w.row(&["beta0".to_string(), num(0.0)])?;
    for (c, b) in sim.covariates.iter().zip(&sim.beta) {
        w.row(&[format!("beta_{}", c.name), num(*b)])?;
    }
    w.row(&["tau2".to_string(), num(sim.tau2)])?;
    w.row(&["sigma2".to_string(), num(sim.theta.sigma2)])?;
    w.row(&["range".to_string(), num(sim.theta.range)])?;
    w.finish()?;

    let sampler = SamplerConfig {
        seed,
        ..SamplerConfig::default()
    };
    let cfg = RunConfig {
        input: out.join("observations.csv"),
        output: None,
        dim: 2,
        response: Some("response".into()),
        spec: ModelSpec::default(),
        sampler,
        covariates: sim
            .covariates
            .iter()
            .map(|c| (c.name.clone(), CovariateKind::Site))
            .collect(),
    };
    write_text(&out.join("config.ini"), &cfg.to_ini("observations.csv", Some("fit")))
}

/// Runs the sampler and writes chains, latent draws, summaries and diagnostics.
/// Returns the warnings raised along the way.
pub fn fit(cfg: &RunConfig, out: &Path) -> CliResult<Vec<String>> {
    if cfg.sampler.n_kept() == 0 {
        return Err(CliError::Config("no draws are retained: iterations must exceed burn_in".into()));
    }
    let (data, mut warnings) = read_observations(cfg)?;
    let n_obs = data.z.len();
    let model = Model::new(data, &cfg.spec)?;
    let res = run_chains(&model, &cfg.sampler)?;
    warnings.extend(res.warnings.iter().cloned());
    create_dir(out)?;

    let input = std::path::absolute(&cfg.input).unwrap_or_else(|_| cfg.input.clone());
    write_text(&out.join("config.ini"), &cfg.to_ini(&input.display().to_string(), None))?;

    let locs = model.locs();
    let dim = locs.dim();
    let mut header = vec!["site".to_string()];
    header.extend(COORD_NAMES[..dim].iter().map(|s| s.to_string()));
    let mut w = Writer::create(&out.join("sites.csv"), &header)?;
    for s in 0..locs.n_sites() {
        let mut row = vec![s.to_string()];
        row.extend(locs.coords(s).iter().map(|&v| num(v)));
        w.row(&row)?;
    }
    w.finish()?;

    let names = res.chains.names().to_vec();
    for (k, chain) in res.chains.chains().iter().enumerate() {
        let mut header = vec!["iteration".to_string()];
        header.extend(names.iter().cloned());
        let mut w = Writer::create(&chain_path(out, "chain", k + 1), &header)?;
        for (t, it) in chain.iterations.iter().enumerate() {
            let mut row = vec![it.to_string()];
            row.extend(chain.values.iter().map(|v| num(v[t])));
            w.row(&row)?;
        }
        w.finish()?;

        let mut header: Vec<String> = ["iteration", "prior_mean", "sigma2", "range"].map(String::from).to_vec();
        header.extend((0..locs.n_sites()).map(|s| format!("w_{s}")));
        let mut w = Writer::create(&chain_path(out, "latent", k + 1), &header)?;
        for d in &chain.latent {
            let mut row = vec![d.iteration.to_string(), num(d.prior_mean), num(d.sigma2), num(d.range)];
            row.extend(d.w.iter().map(|&v| num(v)));
            w.row(&row)?;
        }
        w.finish()?;
    }

    let mut w = Writer::create(&out.join("summary.csv"), &["parameter", "mean", "q025", "median", "q975", "sd"])?;
    for name in &names {
        let s = summarize(&res.chains.pooled(name).unwrap_or_default())?;
        w.row(&[name.clone(), num(s.mean), num(s.q025), num(s.median), num(s.q975), num(s.sd)])?;
    }
    w.finish()?;

    let mut w = Writer::create(&out.join("rhat.csv"), &["parameter", "rhat", "ess"])?;
    let mut rhat_missing = false;
    for name in &names {
        let draws = res.chains.param(name).unwrap_or_default();
        let r = match rhat(&draws, false) {
            Ok(r) => num(r),
            Err(_) => {
                rhat_missing = true;
                "NA".to_string()
            }
        };
        let e = ess(&draws).map(|e| num(e.value)).unwrap_or_else(|_| "NA".into());
        w.row(&[name.clone(), r, e])?;
    }
    w.finish()?;
    if rhat_missing {
        warnings.push("R-hat needs at least two chains of ten or more retained draws; reported as NA".into());
    }

    let draws: Vec<&LatentDraw> = res.chains.latent_draws().collect();
    if !draws.is_empty() {
        let mut w = Writer::create(&out.join("latent_summary.csv"), &["site", "mean", "sd"])?;
        for s in 0..locs.n_sites() {
            let v: Vec<f64> = draws.iter().map(|d| d.w[s]).collect();
            let sm = summarize(&v)?;
            w.row(&[s.to_string(), num(sm.mean), num(sm.sd)])?;
        }
        w.finish()?;
    }

    let mut w = Writer::create(&out.join("timing.csv"), &["metric", "value"])?;
    w.row(&["elapsed_secs".to_string(), num(res.elapsed_secs)])?;
    w.row(&["n_obs".to_string(), n_obs.to_string()])?;
    w.row(&["n_sites".to_string(), locs.n_sites().to_string()])?;
    w.row(&["n_colors".to_string(), model.n_colors().to_string()])?;
    for (k, a) in res.acceptance.iter().enumerate() {
        w.row(&[format!("theta_acceptance_{}", k + 1), num(*a)])?;
    }
    w.finish()?;

    let mut text = warnings.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    write_text(&out.join("warnings.txt"), &text)?;
    Ok(warnings)
}

fn read_latent(path: &Path, n_sites: usize) -> CliResult<Vec<LatentDraw>> {
    let (header, rows) = read_table(path)?;
    if header.len() != 4 + n_sites {
        return Err(CliError::Data(format!(
            "{}: expected {} columns for {n_sites} sites, found {}",
            path.display(),
            4 + n_sites,
            header.len()
        )));
    }
    Ok(rows
        .into_iter()
        .map(|r| LatentDraw {
            iteration: r[0] as usize,
            prior_mean: r[1],
            sigma2: r[2],
            range: r[3],
            w: r[4..].to_vec(),
        })
        .collect())
}

/// Predicts the latent field at new locations from the draws stored by `fit`.
pub fn predict_cmd(fit_dir: &Path, locations: &Path, out: &Path) -> CliResult<usize> {
    let cfg = RunConfig::from_file(&fit_dir.join("config.ini"))?;
    let (_, site_rows) = read_table(&fit_dir.join("sites.csv"))?;
    let coords: Vec<Vec<f64>> = site_rows.iter().map(|r| r[1..].to_vec()).collect();
    let locs = LocationSet::new(coords)?;
    let mut chains = Vec::new();
    for k in 1.. {
        let p = chain_path(fit_dir, "latent", k);
        if !p.exists() {
            break;
        }
        chains.push(Chain {
            latent: read_latent(&p, locs.n_sites())?,
            ..Chain::default()
        });
    }
    let set = ChainSet::new(vec![], chains)?;
    if set.latent_draws().next().is_none() {
        return Err(nngp::NngpError::MissingLatentSamples.into());
    }
    let points = read_points(locations, locs.dim())?;
    let preds = if points.is_empty() {
        Vec::new()
    } else {
        predict(&set, &locs, &points, cfg.spec.m)?
    };
    let mut w = Writer::create(out, &["location", "pred_mean", "pred_sd"])?;
    for (i, p) in preds.iter().enumerate() {
        w.row(&[i.to_string(), num(p.mean), num(p.sd)])?;
    }
    w.finish()?;
    Ok(preds.len())
}

/// Coloring benchmark over a factorial design plus its sensitivity table.
pub fn color_bench(config: Option<&Path>, seed: Option<u64>, out: &Path) -> CliResult<Vec<String>> {
    let design = bench_design(config, seed)?;
    let rows = bench_coloring(&design)?;
    create_dir(out)?;
    let mut w = Writer::create(&out.join("bench.csv"), &BENCH_COLUMNS)?;
    for r in &rows {
        w.row(&[
            r.n.to_string(),
            r.m.to_string(),
            r.d.to_string(),
            r.ordering.name().to_string(),
            r.algorithm.name().to_string(),
            r.rep.to_string(),
            r.n_colors.to_string(),
            num(r.time_ms),
        ])?;
    }
    w.finish()?;

    let colors = variance_sensitivity(&FactorTable::from_bench(&rows, Response::Colors))?;
    let time = variance_sensitivity(&FactorTable::from_bench(&rows, Response::Time))?;
    let mut w = Writer::create(&out.join("sensitivity.csv"), &["effect", "colors_pct", "time_pct"])?;
    for ((effect, c), (_, t)) in colors.effects.iter().zip(&time.effects) {
        w.row(&[effect.clone(), num(*c), num(*t)])?;
    }
    w.finish()?;

    let mut warnings = Vec::new();
    if design.n_cells() == 1 {
        warnings.push("single-cell design: every factor has one level, so all sensitivities are zero".into());
    }
    Ok(warnings)
}
