mod common;

use std::path::Path;

use common::*;

fn setup(n: usize, doses: Doses, extra: &str) -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    write_cohort(&dir.path().join("cohort.csv"), n, 5, doses, 2.0);
    let cfg = write_config(dir.path(), "cohort.csv", extra);
    (dir, cfg.to_str().unwrap().to_string())
}

fn out(dir: &tempfile::TempDir, name: &str) -> std::path::PathBuf {
    dir.path().join("out").join(name)
}

#[test]
fn thousand_units_with_hundred_sinks_give_450_pairs() {
    let (dir, cfg) = setup(1000, Doses::Randomized, "");
    let o = ivmatch(&["match", "--config", &cfg]);
    assert_ok(&o);
    assert_eq!(csv_rows(&out(&dir, "pairs.csv")).len(), 450);
    assert_eq!(csv_rows(&out(&dir, "eliminated.csv")).len(), 100);
    let prov = read_json(&out(&dir, "provenance.json"));
    assert_eq!(prov["provenance"]["n_sinks"], 100);
    assert_eq!(prov["provenance"]["auto_sink"], false);
    assert!(prov["invariants"]["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn odd_vertex_count_adds_one_auto_sink() {
    let (dir, cfg) = setup(301, Doses::Randomized, "");
    assert_ok(&ivmatch(&["match", "--config", &cfg]));
    let prov = read_json(&out(&dir, "provenance.json"));
    assert_eq!(prov["provenance"]["auto_sink"], true);
    assert_eq!(prov["provenance"]["n_sinks"], 31);
    assert_eq!(prov["n_pairs"], 135);
}

#[test]
fn missing_input_exits_2_with_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "absent.csv", "");
    let o = ivmatch(&["match", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!(e["kind"], "MissingInput");
    assert!(e["message"].as_str().unwrap().contains("absent.csv"));

    let o = ivmatch(&["match", "--config", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["kind"], "MissingInput");
    // No design yet.
    let o = ivmatch(&["infer", "--config", cfg.to_str().unwrap()]);
    assert_eq!(error_json(&o)["kind"], "MissingInput");
}

#[test]
fn analysis_errors_exit_1() {
    let (_dir, cfg) = setup(60, Doses::Constant, "[template]\nfraction = 0.0\n\n[inference]\ngamma_cap = 1.17\n");
    assert_ok(&ivmatch(&["match", "--config", &cfg]));
    let o = ivmatch(&["infer", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["kind"], "AllZeroGaps");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(ivmatch(&["simulate", "3"]).status.code(), Some(2));
    assert_eq!(ivmatch(&["frobnicate"]).status.code(), Some(2));
    let o = ivmatch(&["match"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["kind"], "Config");
}

fn infer_config() -> String {
    let grid: Vec<String> = (0..30).map(|i| format!("{:.1}", 0.5 + 0.1 * i as f64)).collect();
    format!(
        r#"[template]
fraction = 0.0

[inference]
k0 = 0.0
k1 = 3.0
k1_grid = [{}]
gamma = 0.01

[[inference.subgroups]]
name = "risk A"
where = [{{ covariate = "risk=A", op = "==", value = 1.0 }}]

[[inference.subgroups]]
name = "risk B"
where = [{{ covariate = "risk=B", op = "==", value = 1.0 }}]

[[inference.subgroups]]
name = "nobody"
where = [{{ covariate = "x1", op = ">", value = 5.0 }}]
"#,
        grid.join(", ")
    )
}

#[test]
fn infer_writes_reports_sweeps_and_skips_empty_subgroups() {
    let dir = tempfile::tempdir().unwrap();
    write_cohort(&dir.path().join("cohort.csv"), 200, 9, Doses::Randomized, 2.0);
    // Exact keys come from the schema's `exact` list.
    let cfg = write_config(dir.path(), "cohort.csv", &infer_config());
    let text = std::fs::read_to_string(&cfg).unwrap().replace(
        "categorical = [\"risk\"]",
        "categorical = [\"risk\"]\nexact = [\"risk\"]",
    );
    std::fs::write(&cfg, text).unwrap();
    let cfg = cfg.to_str().unwrap();
    assert_ok(&ivmatch(&["match", "--config", cfg]));
    assert_ok(&ivmatch(&["infer", "--config", cfg]));

    let report = read_json(&dir.path().join("out/infer.json"));
    let entries = report["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    let n = |name: &str| entries.iter().find(|e| e["subgroup"] == name).unwrap()["n_pairs"].as_u64().unwrap();
    let mixed: u64 = entries.iter().map(|e| e["mixed_pairs_excluded"].as_u64().unwrap()).sum();
    assert_eq!(n("all"), 100);
    assert_eq!(mixed, 0, "exact matching on risk leaves no mixed pairs");
    assert_eq!(n("risk A") + n("risk B"), n("all"));
    assert!(entries[0]["biased"]["lb_lower"].as_f64().unwrap() <= entries[0]["randomization"]["lb_lower"].as_f64().unwrap());

    let skipped = report["skipped"].as_array().unwrap();
    assert_eq!(skipped.len(), 1);
    assert_eq!(skipped[0]["kind"], "EmptySubgroup");
    assert_eq!(skipped[0]["subgroup"], "nobody");

    for name in ["sweep_y_all.csv", "sweep_y_risk_A.csv", "sweep_y_risk_B.csv"] {
        let rows = csv_rows(&dir.path().join("out").join(name));
        assert_eq!(rows.len(), 30, "{name}");
        let ub: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
        assert!(ub.windows(2).all(|w| w[1] > w[0]), "upper bound grows with K1");
    }
}

#[test]
fn mixed_pairs_are_counted_and_excluded() {
    let dir = tempfile::tempdir().unwrap();
    write_cohort(&dir.path().join("cohort.csv"), 120, 4, Doses::Randomized, 1.0);
    let cfg = write_config(
        dir.path(),
        "cohort.csv",
        "[template]\nfraction = 0.0\n\n[[inference.subgroups]]\nname = \"high\"\nwhere = [{ covariate = \"x1\", op = \">=\", value = 0.0 }]\n",
    );
    let cfg = cfg.to_str().unwrap();
    assert_ok(&ivmatch(&["match", "--config", cfg]));
    assert_ok(&ivmatch(&["infer", "--config", cfg]));
    let report = read_json(&dir.path().join("out/infer.json"));
    let g = &report["entries"][1];
    assert_eq!(g["subgroup"], "high");
    let kept = g["n_pairs"].as_u64().unwrap();
    let mixed = g["mixed_pairs_excluded"].as_u64().unwrap();
    assert!(mixed > 0);
    assert!(kept + mixed <= 60);
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn commands_are_idempotent() {
    let extra = "[diagnostics]\nn_perm = 199\nn_splits = 2\nbiased_gamma = [1.5]\n\n[inference]\nk1_grid = [1.0, 2.0]\ngamma = 0.01\n";
    let (dir, cfg) = setup(300, Doses::Randomized, extra);
    let mut snaps = Vec::new();
    for run in ["a", "b"] {
        let o = dir.path().join(run);
        let o = o.to_str().unwrap();
        for cmd in ["match", "diagnose", "infer"] {
            assert_ok(&ivmatch(&[cmd, "--config", &cfg, "--out", o]));
        }
        snaps.push(snapshot(Path::new(o)));
    }
    assert_eq!(snaps[0].len(), 11);
    assert_eq!(snaps[0], snaps[1]);
    // A different seed changes the template sample and so the design.
    let c = dir.path().join("c");
    assert_ok(&ivmatch(&["match", "--config", &cfg, "--out", c.to_str().unwrap(), "--seed", "12"]));
    assert_ne!(std::fs::read(c.join("pairs.csv")).unwrap(), std::fs::read(dir.path().join("a/pairs.csv")).unwrap());
}

#[test]
fn dose_confounded_design_fails_the_permutation_test() {
    let (dir, cfg) = setup(400, Doses::Confounded, "[template]\nfraction = 0.0\n\n[diagnostics]\nn_perm = 1999\n");
    assert_ok(&ivmatch(&["match", "--config", &cfg]));
    assert_ok(&ivmatch(&["diagnose", "--config", &cfg]));
    let cpt = read_json(&out(&dir, "cpt.json"));
    let p = cpt["p_value"].as_f64().unwrap();
    assert!(p < 0.001, "p = {p}");
    let balance = std::fs::read_to_string(out(&dir, "balance.txt")).unwrap();
    assert!(balance.lines().any(|l| l.starts_with("x1")));
}

#[test]
fn gamma_cap_search_output_shape() {
    let extra = "[template]\nfraction = 0.0\n\n[diagnostics]\nn_perm = 199\nn_splits = 1\ngamma_cap_search = true\n";
    let (dir, cfg) = setup(200, Doses::Confounded, extra);
    assert_ok(&ivmatch(&["match", "--config", &cfg]));
    let o = ivmatch(&["diagnose", "--config", &cfg]);
    assert_ok(&o);
    let v = read_json(&out(&dir, "gamma_cap.json"));
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["Gamma", "gamma", "p_value"]);
    let big = v["Gamma"].as_f64().unwrap();
    let small = v["gamma"].as_f64().unwrap();
    assert!(big > 1.0 && small > 0.0);
    assert!(v["p_value"].as_f64().unwrap() > 0.05);
    assert!(String::from_utf8_lossy(&o.stdout).contains("calibrated Gamma"));

    // Shape fixture with the published calibration values.
    let fixture: ivmatch_core::diagnostics::GammaCapResult =
        serde_json::from_str(r#"{"Gamma": 1.17, "gamma": 0.0012, "p_value": 0.06}"#).unwrap();
    assert_eq!(fixture.gamma_cap, 1.17);
    assert_eq!(fixture.gamma, 0.0012);
}

#[test]
fn planted_effect_ratio_is_recovered() {
    let (dir, cfg) = setup(400, Doses::Randomized, "[template]\nfraction = 0.0\n");
    assert_ok(&ivmatch(&["match", "--config", &cfg]));
    assert_ok(&ivmatch(&["infer", "--config", &cfg]));
    let er = &read_json(&out(&dir, "infer.json"))["entries"][0]["effect_ratio"];
    let (hat, lo, hi) = (er["lambda_hat"].as_f64().unwrap(), er["lower"].as_f64().unwrap(), er["upper"].as_f64().unwrap());
    assert!(lo <= hat && hat <= hi);
    assert!(lo <= 2.0 && 2.0 <= hi, "[{lo}, {hi}] misses 2");
    assert!(hi - lo < 1.0);
}

#[test]
fn second_outcome_is_reported_separately() {
    let (dir, cfg) = setup(100, Doses::Randomized, "[template]\nfraction = 0.0\n");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("outcomes = [\"y\"]", "outcomes = [\"y\", \"y2\"]");
    std::fs::write(&cfg, text).unwrap();
    assert_ok(&ivmatch(&["match", "--config", &cfg]));
    assert_ok(&ivmatch(&["infer", "--config", &cfg]));
    let r = read_json(&out(&dir, "infer.json"));
    let e = r["entries"].as_array().unwrap();
    assert_eq!(e.len(), 2);
    assert_eq!(e[1]["outcome"], "y2");
    assert_ne!(e[0]["randomization"]["itt_hat"], e[1]["randomization"]["itt_hat"]);
}

#[test]
fn simulation_output_does_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    std::fs::write(
        &cfg,
        "[simulate.study2]\npairs = [50]\ngammas = [0.0, 0.05]\nscenarios = [1]\nreplicates = 6\n\n[simulate.study1]\nn = 60\nreplicates = 3\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let mut snaps = Vec::new();
    for threads in ["1", "3"] {
        let o = dir.path().join(format!("t{threads}"));
        for study in ["1", "2"] {
            let od = o.join(study);
            assert_ok(&ivmatch(&["simulate", study, "--config", cfg, "--threads", threads, "--out", od.to_str().unwrap()]));
        }
        snaps.push((snapshot(&o.join("1")), snapshot(&o.join("2"))));
    }
    assert_eq!(snaps[0], snaps[1]);
    let t3 = csv_rows(&dir.path().join("t1/2/table3.csv"));
    assert_eq!(t3.len(), 4);
    let t2 = csv_rows(&dir.path().join("t1/1/table2.csv"));
    assert_eq!(t2.len(), 4);
    let m = read_json(&dir.path().join("t1/2/manifest.json"));
    assert_eq!(m["inputs"][0]["blob_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["config"]["replicates"], 6);
}
