use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::NaiveDate;
use etas_core::catalog::{ComcatQuery, Region};

const BIN: &str = env!("CARGO_BIN_EXE_etas");

fn etas(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("run etas")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn simulate_into(dir: &Path, duration: &str, seed: &str) -> PathBuf {
    let out = dir.join("sim");
    let o = etas(&[
        "simulate", "--mu", "0.3", "--a", "0.15", "--alpha", "1.2", "--c", "0.01", "--p", "1.3", "--d", "0.005",
        "--gamma", "1.0", "--q", "1.8", "--beta", "2.3", "--region", "0,5,0,5", "--duration", duration, "--m0", "4",
        "--seed", seed, "--out-dir", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn schema() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas/fit.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_fit_diagnose_decluster() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate_into(tmp.path(), "600", "3");
    let catalog = sim.join("catalog.csv");
    let genealogy = fs::read_to_string(sim.join("genealogy.csv")).unwrap();
    assert!(genealogy.starts_with("# etas-genealogy v1\nchild_idx,parent_idx\n"));

    let fit_dir = tmp.path().join("fit");
    let o = etas(&["fit", "--catalog", catalog.to_str().unwrap(), "--out-dir", fit_dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let line = String::from_utf8_lossy(&o.stdout);
    assert!(line.contains("loglik") && line.contains("AIC") && line.contains("branching ratio"));
    for f in ["fit.json", "probs.csv", "background.csv", "background.json", "trace.csv", "config.json", "clustering.csv"] {
        assert!(fit_dir.join(f).is_file(), "{f} missing");
    }
    let fit = read_json(&fit_dir.join("fit.json"));
    let validator = schema();
    assert!(validator.is_valid(&fit), "{:?}", validator.iter_errors(&fit).map(|e| e.to_string()).collect::<Vec<_>>());
    for csv in ["probs.csv", "background.csv", "trace.csv"] {
        let text = fs::read_to_string(fit_dir.join(csv)).unwrap();
        assert!(text.starts_with("# etas-"), "{csv} lacks a schema comment");
    }

    let o = etas(&["diagnose", "--fit-dir", fit_dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("KS statistic"));
    let diag = read_json(&fit_dir.join("diagnostics.json"));
    assert!(diag["ks"]["p_value"].as_f64().unwrap() > 0.0);

    let dc_dir = tmp.path().join("decluster");
    let o = etas(&[
        "decluster", "--catalog", catalog.to_str().unwrap(), "--out-dir", dc_dir.to_str().unwrap(), "--seed", "4",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let labels = fs::read_to_string(dc_dir.join("labels.csv")).unwrap();
    assert!(labels.starts_with("# etas-labels v1 threshold=0.95\n"));
    assert_eq!(labels.lines().count(), fit["n_events"].as_u64().unwrap() as usize + 2);
    assert!(dc_dir.join("realization.csv").is_file());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate_into(tmp.path(), "400", "9");
    let first = fs::read(sim.join("catalog.csv")).unwrap();
    let sim_json = fs::read(sim.join("simulation.json")).unwrap();
    let sim = simulate_into(tmp.path(), "400", "9");
    assert_eq!(first, fs::read(sim.join("catalog.csv")).unwrap());
    assert_eq!(sim_json, fs::read(sim.join("simulation.json")).unwrap());

    let out = tmp.path().join("run");
    let args = ["fit", "--catalog", sim.join("catalog.csv").to_str().unwrap().to_owned().leak(), "--out-dir", out.to_str().unwrap().to_owned().leak()];
    let collect = || {
        assert_eq!(code(&etas(&args)), 0);
        assert_eq!(code(&etas(&["diagnose", "--fit-dir", out.to_str().unwrap()])), 0);
        ["fit.json", "config.json", "diagnostics.json", "probs.csv", "background.json"]
            .map(|f| fs::read(out.join(f)).unwrap())
    };
    let a = collect();
    let b = collect();
    assert!(a == b, "artifacts differ between identical runs");
}

#[test]
fn fixed_parameter_and_ground_variant_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate_into(tmp.path(), "500", "5");
    let out = tmp.path().join("ground");
    let o = etas(&[
        "fit", "--catalog", sim.join("catalog.csv").to_str().unwrap(), "--scale", "calib:1000", "--variant", "ground",
        "--mag", "exp", "--optimizer", "nm", "--fix", "D", "--out-dir", out.to_str().unwrap(),
    ]);
    assert!(matches!(code(&o), 0 | 3), "{}", String::from_utf8_lossy(&o.stderr));
    let fit = read_json(&out.join("fit.json"));
    assert!(schema().is_valid(&fit));
    assert_eq!(fit["scale"], "calib:1000");
    assert_eq!(fit["variant"], "ground_temporal");
    assert!(fit["fixed"].as_array().unwrap().iter().any(|v| v == "D"));
    for name in ["mu", "A", "alpha", "c", "p", "D"] {
        assert!(fit["params"][name].is_number(), "{name}");
    }
}

#[test]
fn non_convergence_exits_three_with_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate_into(tmp.path(), "400", "6");
    let cfg = tmp.path().join("run.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"schema": "etas-run v1", "catalog": "{}", "out_dir": "out",
                "fit": {{"max_outer": 1, "optim": {{"max_iter": 2}}}}}}"#,
            sim.join("catalog.csv").display()
        ),
    )
    .unwrap();
    let o = etas(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let fit = read_json(&tmp.path().join("out/fit.json"));
    assert_eq!(fit["converged"], false);
    let snapshot = read_json(&tmp.path().join("out/config.json"));
    assert_eq!(snapshot["fit"]["max_outer"], 1);
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(code(&etas(&["fit", "--bogus"])), 1);
    assert_eq!(code(&etas(&["fit", "--catalog", "/nonexistent/catalog.csv"])), 1);
    assert_eq!(code(&etas(&["fit", "--catalog", BIN, "--scale", "warp:3"])), 1);
    let o = etas(&["fetch", "--region", "79,88,27,30", "--start", "1990-13-45", "--end", "2022-05-20", "--minmag", "5", "--out", "x.csv"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("date"));
    assert_eq!(code(&etas(&["--help"])), 0);
}

#[test]
fn fetch_serves_a_warm_cache_offline() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    fs::create_dir_all(&cache).unwrap();
    let query = ComcatQuery::new(
        Region::new(79.0, 88.0, 27.0, 30.0).unwrap(),
        NaiveDate::from_ymd_opt(1990, 1, 11).unwrap(),
        NaiveDate::from_ymd_opt(2022, 5, 20).unwrap(),
        5.0,
    )
    .unwrap();
    fs::write(
        cache.join(query.cache_key()),
        "time,latitude,longitude,depth,mag\n1990-02-01T00:00:00.000Z,28.1,84.2,10,5.2\n1991-03-04T12:00:00.000Z,29.0,81.0,15,5.6\n",
    )
    .unwrap();
    let out = tmp.path().join("nepal.csv");
    let o = etas(&[
        "fetch", "--region", "79,88,27,30", "--start", "1990-01-11", "--end", "2022-05-20", "--minmag", "5", "--out",
        out.to_str().unwrap(), "--cache-dir", cache.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out).unwrap();
    assert!(text.starts_with("# etas-catalog v1"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn scale_command_rescales_times() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate_into(tmp.path(), "300", "2");
    let out = tmp.path().join("scaled.csv");
    let o = etas(&["scale", "--catalog", sim.join("catalog.csv").to_str().unwrap(), "--scale", "calib:10", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out).unwrap();
    assert!(text.lines().next().unwrap().contains("duration=30"));
}
