use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isac_cli::config::{db_to_linear, ExperimentConfig, SweepSection};
use isac_cli::default_scenario;
use tempfile::TempDir;

fn default_toml() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")
}

fn isac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, cfg: &ExperimentConfig) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, cfg.to_toml()).unwrap();
    p
}

/// Header row and data rows of a CSV table, skipping `#` lines.
fn csv_body(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn small_sweep() -> ExperimentConfig {
    let mut cfg = default_scenario();
    cfg.sweep = Some(SweepSection {
        variable: "rate_target".into(),
        values: Some(vec![5.0, 6.5]),
        start: None,
        stop: None,
        step: None,
    });
    cfg
}

#[test]
fn shipped_config_is_the_default_scenario() {
    let cfg = ExperimentConfig::load(&default_toml()).unwrap();
    assert_eq!(cfg, default_scenario());
    let w: f64 = cfg.prior.weights.iter().sum();
    assert!((w - 1.0).abs() < 1e-12);
    assert_eq!(cfg.benchmark.perturb_variance, db_to_linear(-15.0));
}

#[test]
fn toml_round_trip() {
    let cfg = default_scenario();
    let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn default_sweep_grid() {
    let g = default_scenario().sweep.unwrap().grid().unwrap();
    assert_eq!(g.len(), 12);
    assert_eq!(g[0], 5.0);
    assert_eq!(g[3], 5.6);
    assert_eq!(g[11], 7.2);
}

#[test]
fn unknown_field_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(default_toml()).unwrap() + "\nbogus = 1\n";
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, text).unwrap();
    let out = isac(&["feasibility", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn missing_config_is_a_config_error() {
    let out = isac(&["bounds", "--config", "/nonexistent/isac.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_prior_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let mut cfg = default_scenario();
    cfg.prior.weights[0] = 0.5;
    let p = dir.path().join("w.toml");
    std::fs::write(&p, toml::to_string(&cfg).unwrap()).unwrap();
    let out = isac(&["feasibility", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_rate_exits_3() {
    let dir = TempDir::new().unwrap();
    let mut cfg = default_scenario();
    cfg.rate_target = 60.0;
    let p = write_config(&dir, "inf.toml", &cfg);
    let out = isac(&["solve-optimal", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let out = isac(&["feasibility", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let (_, rows) = csv_body(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows[0][2], "0");
}

#[test]
fn feasibility_table() {
    let out = isac(&["feasibility", "--config", default_toml().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# command: feasibility\n"));
    assert!(text.contains("# channel_seed: 7\n"));
    let (header, rows) = csv_body(&text);
    assert_eq!(header, ["rbar", "r_max", "feasible"]);
    let r_max: f64 = rows[0][1].parse().unwrap();
    assert!(r_max > 6.5);
    assert_eq!(rows[0][2], "1");
}

#[test]
fn beampattern_columns_and_prior() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("bp.csv");
    let out = isac(&[
        "beampattern",
        "--config",
        default_toml().to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = csv_body(&std::fs::read_to_string(&out_path).unwrap());
    assert_eq!(header, ["theta", "power", "prior_density"]);
    assert_eq!(rows.len(), 1024);
    let num = |r: &Vec<String>, i: usize| r[i].parse::<f64>().unwrap();
    // prior density integrates to one over the grid
    let h = num(&rows[1], 0) - num(&rows[0], 0);
    let mass: f64 = rows.iter().map(|r| num(r, 2) * h).sum();
    assert!((mass - 1.0).abs() < 1e-3, "{mass}");
    // total radiated power over the grid is positive and finite
    assert!(rows
        .iter()
        .all(|r| num(r, 1) >= -1e-12 && num(r, 1).is_finite()));
}

#[test]
fn sweep_columns_and_determinism() {
    let dir = TempDir::new().unwrap();
    let p = write_config(&dir, "sweep.toml", &small_sweep());
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for o in [&a, &b] {
        let out = isac(&[
            "sweep",
            "--config",
            p.to_str().unwrap(),
            "--out",
            o.to_str().unwrap(),
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let ta = std::fs::read(&a).unwrap();
    assert_eq!(ta, std::fs::read(&b).unwrap());
    let (header, rows) = csv_body(std::str::from_utf8(&ta).unwrap());
    assert_eq!(
        header,
        [
            "rbar",
            "pcrb_opt",
            "pcrb_sub",
            "pcrb_upper_sub",
            "crb_expected_bench1",
            "crb_expected_bench2"
        ]
    );
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "5.0");
    assert_eq!(rows[1][0], "6.5");
    for r in &rows {
        let v: Vec<f64> = r.iter().map(|c| c.parse().unwrap()).collect();
        assert!(v[1] <= v[2] * (1.0 + 1e-9), "opt above sub: {r:?}");
        assert!(v[5] > v[4], "bench2 below bench1: {r:?}");
    }
}

#[test]
fn json_output_matches_csv() {
    let dir = TempDir::new().unwrap();
    let c = dir.path().join("f.csv");
    let j = dir.path().join("f.json");
    let cfg = default_toml();
    for o in [&c, &j] {
        let out = isac(&[
            "solve-suboptimal",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            o.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&j).unwrap()).unwrap();
    assert_eq!(v["command"], "solve-suboptimal");
    assert_eq!(v["meta"]["branch"], "dual");
    let (header, rows) = csv_body(&std::fs::read_to_string(&c).unwrap());
    assert_eq!(header, ["row", "col", "re", "im"]);
    assert_eq!(rows.len(), 100);
    assert_eq!(v["rows"].as_array().unwrap().len(), 100);
    let re: f64 = rows[0][2].parse().unwrap();
    assert_eq!(v["rows"][0][2].as_f64().unwrap(), re);
}

#[test]
fn montecarlo_overrides_and_reproducibility() {
    let dir = TempDir::new().unwrap();
    let mut cfg = default_scenario();
    let mc = cfg.montecarlo.as_mut().unwrap();
    mc.snr = vec![db_to_linear(0.0)];
    mc.grid_points = 512;
    let p = write_config(&dir, "mc.toml", &cfg);
    let run = |seed: &str, name: &str| {
        let o = dir.path().join(name);
        let out = isac(&[
            "montecarlo",
            "--config",
            p.to_str().unwrap(),
            "--out",
            o.to_str().unwrap(),
            "--seed",
            seed,
            "--trials",
            "20",
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read_to_string(o).unwrap()
    };
    let a = run("11", "a.csv");
    let b = run("11", "b.csv");
    let c = run("12", "c.csv");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.contains("# seed: 11\n"));
    assert!(a.contains("# trials: 20\n"));
    let (header, rows) = csv_body(&a);
    assert_eq!(header.len(), 9);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "0.0");
}

#[test]
fn bounds_chain_for_every_design() {
    let out = isac(&["bounds", "--config", default_toml().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = csv_body(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(
        header,
        [
            "design",
            "rate",
            "trace",
            "pcrb",
            "pcrb_upper",
            "crb_expected"
        ]
    );
    assert_eq!(rows.len(), 5);
    for r in &rows {
        let v: Vec<f64> = r[1..].iter().map(|c| c.parse().unwrap()).collect();
        assert!((v[1] - 1.0).abs() < 1e-6, "power: {r:?}");
        assert!(v[3] >= v[2] * (1.0 - 1e-10), "{r:?}");
        assert!(v[4] >= v[3] * (1.0 - 1e-10), "{r:?}");
    }
}
