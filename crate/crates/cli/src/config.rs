//! Run and benchmark configuration files: `key = value` lines grouped in
//! `[section]` blocks, `#` or `;` comments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use nngp::bench::BenchDesign;
use nngp::geo::OrderingKind;
use nngp::graph::ColoringAlgorithm;
use nngp::sampler::{CovariateKind, ModelSpec, ParamMode, SamplerConfig};

use crate::error::{CliError, CliResult};

const DATA_KEYS: [&str; 4] = ["input", "output", "dim", "response"];
const MODEL_KEYS: [&str; 5] = ["m", "ordering", "coloring", "interweave", "parametrization"];
const MCMC_KEYS: [&str; 11] = [
    "iterations",
    "burn_in",
    "chains",
    "thin",
    "seed",
    "latent_draws",
    "range_init",
    "sigma2_min",
    "sigma2_max",
    "range_min",
    "range_max",
];
const BENCH_KEYS: [&str; 7] = ["n", "m", "d", "orderings", "algorithms", "reps", "seed"];

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Observation CSV, resolved against the config file's directory.
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    pub dim: usize,
    /// Response column name; the column after the coordinates if absent.
    pub response: Option<String>,
    pub spec: ModelSpec,
    pub sampler: SamplerConfig,
    pub covariates: Vec<(String, CovariateKind)>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn load(path: &Path) -> CliResult<Ini> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    Ini::load_from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn check_keys(ini: &Ini, section: &str, allowed: &[&str]) -> CliResult<()> {
    if let Some(props) = ini.section(Some(section)) {
        for (k, _) in props.iter() {
            if !allowed.contains(&k) {
                return Err(config_err(format!("unknown key '{k}' in [{section}]")));
            }
        }
    }
    Ok(())
}

fn get<'a>(ini: &'a Ini, section: &str, key: &str) -> Option<&'a str> {
    ini.get_from(Some(section), key).map(str::trim)
}

fn parse<T: FromStr>(ini: &Ini, section: &str, key: &str) -> CliResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    get(ini, section, key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| config_err(format!("[{section}] {key} = '{v}': {e}")))
        })
        .transpose()
}

fn parse_bool(ini: &Ini, section: &str, key: &str) -> CliResult<Option<bool>> {
    get(ini, section, key)
        .map(|v| match v.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(config_err(format!("[{section}] {key} = '{v}' is not a boolean"))),
        })
        .transpose()
}

fn parse_list<T: FromStr>(ini: &Ini, section: &str, key: &str) -> CliResult<Option<Vec<T>>>
where
    T::Err: std::fmt::Display,
{
    get(ini, section, key)
        .map(|v| {
            v.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<T>()
                        .map_err(|e| config_err(format!("[{section}] {key}: '{}': {e}", s.trim())))
                })
                .collect()
        })
        .transpose()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let ini = load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_ini(&ini, base)
    }

    fn from_ini(ini: &Ini, base: &Path) -> CliResult<Self> {
        for s in ini.sections().flatten() {
            if !["data", "model", "mcmc", "covariates"].contains(&s) {
                return Err(config_err(format!("unknown section [{s}]")));
            }
        }
        check_keys(ini, "data", &DATA_KEYS)?;
        check_keys(ini, "model", &MODEL_KEYS)?;
        check_keys(ini, "mcmc", &MCMC_KEYS)?;

        let input = get(ini, "data", "input").ok_or_else(|| config_err("[data] input is required"))?;
        let dim = parse::<usize>(ini, "data", "dim")?.unwrap_or(2);
        if !(1..=3).contains(&dim) {
            return Err(config_err(format!("[data] dim must be 1, 2 or 3, got {dim}")));
        }

        let mut spec = ModelSpec::default();
        if let Some(m) = parse::<usize>(ini, "model", "m")? {
            spec.m = m;
        }
        if let Some(o) = parse::<OrderingKind>(ini, "model", "ordering")? {
            spec.ordering = o;
        }
        if let Some(c) = parse::<ColoringAlgorithm>(ini, "model", "coloring")? {
            spec.coloring = c;
        }
        if spec.m == 0 {
            return Err(config_err("[model] m must be positive"));
        }

        let mut sampler = SamplerConfig::default();
        if let Some(v) = parse::<ParamMode>(ini, "model", "parametrization")? {
            sampler.mode = v;
        }
        if let Some(v) = parse_bool(ini, "model", "interweave")? {
            sampler.interweave = v;
        }
        if let Some(v) = parse(ini, "mcmc", "iterations")? {
            sampler.n_iter = v;
        }
        if let Some(v) = parse(ini, "mcmc", "burn_in")? {
            sampler.burn_in = v;
        }
        if let Some(v) = parse(ini, "mcmc", "chains")? {
            sampler.n_chains = v;
        }
        if let Some(v) = parse(ini, "mcmc", "thin")? {
            sampler.thin = v;
        }
        sampler.seed = parse(ini, "mcmc", "seed")?.ok_or_else(|| config_err("[mcmc] seed is required"))?;
        sampler.max_latent_draws = match get(ini, "mcmc", "latent_draws") {
            None => sampler.max_latent_draws,
            Some(v) if v.eq_ignore_ascii_case("all") => None,
            Some(_) => Some(parse::<usize>(ini, "mcmc", "latent_draws")?.unwrap_or_default()),
        };
        if let Some(r) = parse::<f64>(ini, "mcmc", "range_init")? {
            if !(r > 0.0 && r.is_finite()) {
                return Err(config_err("[mcmc] range_init must be positive"));
            }
            sampler.range_init = Some(r);
        }
        let b = &mut sampler.bounds;
        for (key, slot) in [
            ("sigma2_min", &mut b.sigma2.0),
            ("sigma2_max", &mut b.sigma2.1),
            ("range_min", &mut b.range.0),
            ("range_max", &mut b.range.1),
        ] {
            if let Some(v) = parse::<f64>(ini, "mcmc", key)? {
                *slot = v;
            }
        }
        for (name, (lo, hi)) in [("sigma2", b.sigma2), ("range", b.range)] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(config_err(format!("[mcmc] {name} bounds must satisfy 0 < min < max < inf")));
            }
        }
        spec.ordering_seed = sampler.seed;

        let mut covariates = Vec::new();
        if let Some(props) = ini.section(Some("covariates")) {
            for (name, kind) in props.iter() {
                let kind = match kind.trim().to_ascii_lowercase().as_str() {
                    "site" => CovariateKind::Site,
                    "obs" => CovariateKind::Obs,
                    other => return Err(config_err(format!("covariate '{name}': kind must be site or obs, got '{other}'"))),
                };
                covariates.push((name.to_string(), kind));
            }
        }

        let cfg = Self {
            input: base.join(input),
            output: get(ini, "data", "output").map(|o| base.join(o)),
            dim,
            response: get(ini, "data", "response").map(String::from),
            spec,
            sampler,
            covariates,
        };
        cfg.sampler.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }

    /// Text form accepted by [`RunConfig::from_file`]; `input` is written as given.
    pub fn to_ini(&self, input: &str, output: Option<&str>) -> String {
        let s = &self.sampler;
        let mut t = String::new();
        let _ = writeln!(t, "[data]\ninput = {input}");
        if let Some(o) = output {
            let _ = writeln!(t, "output = {o}");
        }
        let _ = writeln!(t, "dim = {}", self.dim);
        if let Some(r) = &self.response {
            let _ = writeln!(t, "response = {r}");
        }
        let _ = writeln!(
            t,
            "\n[model]\nm = {}\nordering = {}\ncoloring = {}\ninterweave = {}\nparametrization = {}",
            self.spec.m,
            self.spec.ordering.name(),
            self.spec.coloring.name(),
            s.interweave,
            s.mode.name()
        );
        let _ = writeln!(
            t,
            "\n[mcmc]\niterations = {}\nburn_in = {}\nchains = {}\nthin = {}\nseed = {}",
            s.n_iter, s.burn_in, s.n_chains, s.thin, s.seed
        );
        match s.max_latent_draws {
            Some(l) => {
                let _ = writeln!(t, "latent_draws = {l}");
            }
            None => {
                let _ = writeln!(t, "latent_draws = all");
            }
        }
        if let Some(r) = s.range_init {
            let _ = writeln!(t, "range_init = {r:?}");
        }
        let b = s.bounds;
        let _ = writeln!(
            t,
            "sigma2_min = {:?}\nsigma2_max = {:?}\nrange_min = {:?}\nrange_max = {:?}",
            b.sigma2.0, b.sigma2.1, b.range.0, b.range.1
        );
        if !self.covariates.is_empty() {
            let _ = writeln!(t, "\n[covariates]");
            for (name, kind) in &self.covariates {
                let k = match kind {
                    CovariateKind::Site => "site",
                    CovariateKind::Obs => "obs",
                };
                let _ = writeln!(t, "{name} = {k}");
            }
        }
        t
    }
}

/// Reads a `[bench]` design; missing keys fall back to the pilot grid.
pub fn bench_design(path: Option<&Path>, seed: Option<u64>) -> CliResult<BenchDesign> {
    let mut design = BenchDesign::pilot(10, 1);
    if let Some(path) = path {
        let ini = load(path)?;
        for s in ini.sections().flatten() {
            if s != "bench" {
                return Err(config_err(format!("unknown section [{s}]")));
            }
        }
        check_keys(&ini, "bench", &BENCH_KEYS)?;
        let b = "bench";
        if let Some(v) = parse_list(&ini, b, "n")? {
            design.n = v;
        }
        if let Some(v) = parse_list(&ini, b, "m")? {
            design.m = v;
        }
        if let Some(v) = parse_list(&ini, b, "d")? {
            design.d = v;
        }
        if let Some(v) = parse_list(&ini, b, "orderings")? {
            design.orderings = v;
        }
        if let Some(v) = parse_list(&ini, b, "algorithms")? {
            design.algorithms = v;
        }
        if let Some(v) = parse(&ini, b, "reps")? {
            design.reps = v;
        }
        if let Some(v) = parse(&ini, b, "seed")? {
            design.seed = v;
        }
    }
    if let Some(s) = seed {
        design.seed = s;
    }
    if design.n_cells() == 0 || design.reps == 0 {
        return Err(config_err("benchmark design has no cells"));
    }
    if design.d.iter().any(|d| !(1..=3).contains(d)) {
        return Err(config_err("benchmark dimensions must be 1, 2 or 3"));
    }
    if design.m.contains(&0) {
        return Err(config_err("benchmark parent counts must be positive"));
    }
    Ok(design)
}
