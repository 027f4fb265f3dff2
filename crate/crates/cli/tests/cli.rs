use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nngp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nngp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (h, rows) = table(path);
    let c = h.iter().position(|x| x == name).unwrap();
    rows.iter().map(|r| r[c].parse().unwrap()).collect()
}

fn summary_value(dir: &Path, param: &str, col: &str) -> f64 {
    let (h, rows) = table(&dir.join("summary.csv"));
    let c = h.iter().position(|x| x == col).unwrap();
    rows.iter().find(|r| r[0] == param).unwrap()[c].parse().unwrap()
}

/// Simulates toy 1 and shortens the generated config.
fn simulated(dir: &Path, n: usize, iterations: usize, burn_in: usize) -> PathBuf {
    let out = nngp(&["simulate", "toy1", "-n", &n.to_string(), "--seed", "11", "--out", s(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = dir.join("config.ini");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("iterations = 3000", &format!("iterations = {iterations}"))
        .replace("burn_in = 1000", &format!("burn_in = {burn_in}"));
    fs::write(&cfg, text).unwrap();
    cfg
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(nngp(&["simulate", "toy2", "-n", "200", "--seed", "5", "--out", s(d.path())]).status.success());
    }
    for f in ["observations.csv", "truth.csv", "truth_params.csv", "config.ini"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn toy2_band_indicators_are_disjoint() {
    let d = tempfile::tempdir().unwrap();
    assert!(nngp(&["simulate", "toy2", "-n", "300", "--seed", "2", "--out", s(d.path())]).status.success());
    let obs = d.path().join("observations.csv");
    let (h, _) = table(&obs);
    assert_eq!(h.iter().filter(|c| c.starts_with("band")).count(), 49);
    assert_eq!(h.iter().filter(|c| c.starts_with("noise")).count(), 49);
    let bands: Vec<Vec<f64>> = (1..=49).map(|k| column(&obs, &format!("band{k}"))).collect();
    let x = column(&obs, "x");
    for i in 0..x.len() {
        let total: f64 = bands.iter().map(|b| b[i]).sum();
        assert_eq!(total, f64::from(x[i] >= 1.0), "row {i}");
    }
}

#[test]
fn toy1_response_variance_adds_up() {
    let d = tempfile::tempdir().unwrap();
    assert!(nngp(&["simulate", "toy1", "-n", "1000", "--seed", "3", "--out", s(d.path())]).status.success());
    let z = column(&d.path().join("observations.csv"), "response");
    let m = z.iter().sum::<f64>() / z.len() as f64;
    let v = z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (z.len() - 1) as f64;
    // sigma2 + tau2 = 6; the spatial part makes the sample variance noisier
    // than for independent draws.
    assert!((v - 6.0).abs() < 1.2, "variance {v}");
}

#[test]
fn simulate_output_fits_without_edits_and_reruns_identically() {
    let d = tempfile::tempdir().unwrap();
    let cfg = simulated(d.path(), 150, 120, 40);
    let runs = ["fit_a", "fit_b"].map(|f| d.path().join(f));
    for (r, threads) in runs.iter().zip(["1", "2"]) {
        let out = nngp(&["fit", "--config", s(&cfg), "--out", s(r), "--threads", threads]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in [
        "chain_1.csv",
        "chain_2.csv",
        "chain_3.csv",
        "latent_1.csv",
        "summary.csv",
        "rhat.csv",
        "latent_summary.csv",
        "sites.csv",
        "config.ini",
    ] {
        assert_eq!(fs::read(runs[0].join(f)).unwrap(), fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
    let (h, rows) = table(&runs[0].join("chain_1.csv"));
    assert_eq!(h, ["iteration", "beta0", "tau2", "sigma2", "range", "w_mean"]);
    assert_eq!(rows.len(), 80);
    let (h, _) = table(&runs[0].join("summary.csv"));
    assert_eq!(h, ["parameter", "mean", "q025", "median", "q975", "sd"]);
    // The default output directory comes from the generated config.
    assert!(nngp(&["fit", "--config", s(&cfg)]).status.success());
    assert_eq!(
        fs::read(d.path().join("fit/chain_2.csv")).unwrap(),
        fs::read(runs[0].join("chain_2.csv")).unwrap()
    );
}

#[test]
fn seed_flag_changes_the_chains() {
    let d = tempfile::tempdir().unwrap();
    let cfg = simulated(d.path(), 60, 60, 20);
    let a = d.path().join("a");
    let b = d.path().join("b");
    assert!(nngp(&["fit", "--config", s(&cfg), "--out", s(&a)]).status.success());
    assert!(nngp(&["fit", "--config", s(&cfg), "--out", s(&b), "--seed", "12"]).status.success());
    assert_ne!(fs::read(a.join("chain_1.csv")).unwrap(), fs::read(b.join("chain_1.csv")).unwrap());
}

fn predict_at(fit: &Path, dir: &Path, csv: &str) -> (Vec<f64>, Vec<f64>) {
    let new = dir.join("new.csv");
    fs::write(&new, csv).unwrap();
    let preds = dir.join("pred.csv");
    let out = nngp(&["predict", s(fit), s(&new), "--out", s(&preds)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, _) = table(&preds);
    assert_eq!(h, ["location", "pred_mean", "pred_sd"]);
    (column(&preds, "pred_mean"), column(&preds, "pred_sd"))
}

#[test]
fn predictions_at_training_and_distant_sites() {
    let d = tempfile::tempdir().unwrap();
    let cfg = simulated(d.path(), 200, 400, 150);
    let fit = d.path().join("fit");
    assert!(nngp(&["fit", "--config", s(&cfg)]).status.success());

    let sites = fit.join("sites.csv");
    let (sx, sy) = (column(&sites, "x"), column(&sites, "y"));
    let csv = format!("x,y\n{:.17e},{:.17e}\n{:.17e},{:.17e}\n5000,-5000\n", sx[3], sy[3], sx[17], sy[17]);
    let (mean, sd) = predict_at(&fit, d.path(), &csv);
    assert_eq!(mean.len(), 3);
    let site_mean = column(&fit.join("latent_summary.csv"), "mean");
    assert!((mean[0] - site_mean[3]).abs() < 1e-8);
    assert!((mean[1] - site_mean[17]).abs() < 1e-8);
    // The centered field carries the intercept, so far away its variance is
    // the field variance plus the intercept's posterior variance.
    let sigma2 = summary_value(&fit, "sigma2", "mean");
    let b0_sd = summary_value(&fit, "beta0", "sd");
    let limit = (sigma2 + b0_sd * b0_sd).sqrt();
    assert!((sd[2] / limit - 1.0).abs() < 0.05, "sd {} vs {limit}", sd[2]);

    // Flat priors on the log scale let weakly informed chains drift to huge
    // ranges, under which no point is far; the bounds keep the limit reachable.
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("centered", "standard")
        .replace("range_max = 100000000.0", "range_max = 50.0");
    fs::write(&cfg, text).unwrap();
    let fit_s = d.path().join("fit_standard");
    assert!(nngp(&["fit", "--config", s(&cfg), "--out", s(&fit_s)]).status.success());
    let (mean, sd) = predict_at(&fit_s, d.path(), "x,y\n5000,-5000\n");
    let sigma2 = summary_value(&fit_s, "sigma2", "mean");
    assert!(mean[0].abs() < 1e-12, "mean {}", mean[0]);
    assert!((sd[0] / sigma2.sqrt() - 1.0).abs() < 0.05, "sd {} vs {}", sd[0], sigma2.sqrt());
}

#[test]
fn empty_locations_give_empty_predictions() {
    let d = tempfile::tempdir().unwrap();
    let cfg = simulated(d.path(), 40, 40, 10);
    assert!(nngp(&["fit", "--config", s(&cfg)]).status.success());
    let empty = d.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let preds = d.path().join("p.csv");
    let out = nngp(&["predict", s(&d.path().join("fit")), s(&empty), "--out", s(&preds)]);
    assert_eq!(out.status.code(), Some(0));
    let (_, rows) = table(&preds);
    assert!(rows.is_empty());
}

#[test]
fn predict_without_latent_draws_is_an_error() {
    let d = tempfile::tempdir().unwrap();
    let cfg = simulated(d.path(), 40, 40, 10);
    let text = fs::read_to_string(&cfg).unwrap().replace("latent_draws = 500", "latent_draws = 0");
    fs::write(&cfg, text).unwrap();
    assert!(nngp(&["fit", "--config", s(&cfg)]).status.success());
    let new = d.path().join("new.csv");
    fs::write(&new, "x,y\n1,1\n").unwrap();
    let out = nngp(&["predict", s(&d.path().join("fit")), s(&new)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("latent"));
}

#[test]
fn constant_response_warns_and_floors_tau2() {
    let d = tempfile::tempdir().unwrap();
    let mut csv = String::from("x,y,response\n");
    for i in 0..30 {
        csv.push_str(&format!("{},{},4.25\n", i % 6, i / 6));
    }
    fs::write(d.path().join("obs.csv"), csv).unwrap();
    let cfg = d.path().join("c.ini");
    fs::write(&cfg, "[data]\ninput = obs.csv\n[mcmc]\niterations = 60\nburn_in = 20\nchains = 2\nseed = 1\n").unwrap();
    let out = nngp(&["fit", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate data"));
    let fit = d.path().join("fit");
    assert!(fs::read_to_string(fit.join("warnings.txt")).unwrap().contains("degenerate data"));
    assert_eq!(summary_value(&fit, "tau2", "q975"), 1e-12);
}

#[test]
fn repeated_coordinates_share_a_site() {
    let d = tempfile::tempdir().unwrap();
    let mut csv = String::from("x,y,response,elev,reading\n");
    for i in 0..20 {
        for rep in 0..2 {
            csv.push_str(&format!("{},{},{},{},{}\n", i % 5, i / 5, (i + rep) as f64 * 0.3, i as f64 * 0.1, (i * rep) % 3));
        }
    }
    fs::write(d.path().join("obs.csv"), csv).unwrap();
    let cfg = d.path().join("c.ini");
    fs::write(
        &cfg,
        "[data]\ninput = obs.csv\n[mcmc]\niterations = 40\nburn_in = 10\nchains = 2\nseed = 1\n\
         [covariates]\nelev = site\nreading = obs\n",
    )
    .unwrap();
    let out = nngp(&["fit", "--config", s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fit = d.path().join("fit");
    assert_eq!(table(&fit.join("sites.csv")).1.len(), 20);
    let (h, _) = table(&fit.join("chain_1.csv"));
    assert_eq!(h[2..4], ["beta_elev", "beta_reading"]);
}

#[test]
fn exit_codes_follow_error_classes() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("obs.csv"), "x,y,response\n0,0,1\n1,0,2\n0,1,oops\n").unwrap();
    let no_seed = d.path().join("a.ini");
    fs::write(&no_seed, "[data]\ninput = obs.csv\n").unwrap();
    assert_eq!(nngp(&["fit", "--config", s(&no_seed)]).status.code(), Some(2));

    let missing_col = d.path().join("b.ini");
    fs::write(&missing_col, "[data]\ninput = obs.csv\n[mcmc]\nseed = 1\n[covariates]\nheight = site\n").unwrap();
    assert_eq!(nngp(&["fit", "--config", s(&missing_col)]).status.code(), Some(2));

    let bad_value = d.path().join("c.ini");
    fs::write(&bad_value, "[data]\ninput = obs.csv\n[mcmc]\nseed = 1\n").unwrap();
    assert_eq!(nngp(&["fit", "--config", s(&bad_value)]).status.code(), Some(3));

    let no_input = d.path().join("d.ini");
    fs::write(&no_input, "[data]\ninput = nowhere.csv\n[mcmc]\nseed = 1\n").unwrap();
    assert_eq!(nngp(&["fit", "--config", s(&no_input)]).status.code(), Some(3));

    assert_eq!(nngp(&["simulate", "toy1", "-n", "5", "--seed", "1", "--out", s(d.path())]).status.code(), Some(3));
    assert_eq!(nngp(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn color_bench_writes_tables() {
    let d = tempfile::tempdir().unwrap();
    let design = d.path().join("design.ini");
    fs::write(
        &design,
        "[bench]\nn = 200, 400\nm = 3, 6\nd = 2\norderings = coordinate, random\nalgorithms = naive, dsatur\nreps = 2\nseed = 4\n",
    )
    .unwrap();
    let out = d.path().join("bench");
    assert!(nngp(&["color-bench", "--config", s(&design), "--out", s(&out)]).status.success());
    let (h, rows) = table(&out.join("bench.csv"));
    assert_eq!(h, ["n", "m", "d", "ordering", "algorithm", "rep", "n_colors", "time_ms"]);
    assert_eq!(rows.len(), 2 * 2 * 2 * 2 * 2);
    let (h, rows) = table(&out.join("sensitivity.csv"));
    assert_eq!(h, ["effect", "colors_pct", "time_pct"]);
    assert!(rows.iter().any(|r| r[0] == "m"));

    // Colors, unlike timings, are reproducible.
    let again = d.path().join("again");
    assert!(nngp(&["color-bench", "--config", s(&design), "--out", s(&again)]).status.success());
    assert_eq!(column(&out.join("bench.csv"), "n_colors"), column(&again.join("bench.csv"), "n_colors"));
}

#[test]
fn single_cell_bench_has_zero_sensitivity() {
    let d = tempfile::tempdir().unwrap();
    let design = d.path().join("design.ini");
    fs::write(
        &design,
        "[bench]\nn = 300\nm = 5\nd = 2\norderings = maxmin\nalgorithms = dsatur\nreps = 3\nseed = 1\n",
    )
    .unwrap();
    let out = d.path().join("bench");
    let res = nngp(&["color-bench", "--config", s(&design), "--out", s(&out)]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("single-cell"));
    for c in ["colors_pct", "time_pct"] {
        assert!(column(&out.join("sensitivity.csv"), c).iter().all(|&v| v == 0.0));
    }
}
