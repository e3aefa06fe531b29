use std::path::Path;

use ivmatch::config::{CmpOp, PipelineConfig};
use ivmatch::CliError;

const BASE: &str = r#"
seed = 3
input = "data.csv"

[schema]
id = "id"
dose = "z"
treatment = "d"
outcomes = ["r"]
exact = ["site"]

[inference]
k0 = -1.0
k1 = 1.0
k1_grid = [1.0, 2.0]

[[inference.subgroups]]
name = "low"
where = [{ covariate = "x", op = "<", value = 0.5 }]
"#;

fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn parses_and_resolves_paths() {
    let c = PipelineConfig::from_toml(BASE, env(&[]), Path::new("/data")).unwrap();
    assert_eq!(c.seed, Some(3));
    assert_eq!(c.input.as_deref(), Some(Path::new("/data/data.csv")));
    assert_eq!(c.output, Path::new("/data/out"));
    assert_eq!(c.template.fraction, 0.10);
    assert_eq!(c.design.exact_match, ["site"]);
    assert_eq!(c.inference.subgroups[0].predicates[0].op, CmpOp::Lt);
    assert_eq!(c.diagnostics.n_perm, 999);
    assert_eq!(c.simulate.study1.replicates, 200);
}

#[test]
fn environment_overrides_nested_keys() {
    let c = PipelineConfig::from_toml(
        BASE,
        env(&[
            ("IVMATCH_INFERENCE__ALPHA", "0.1"),
            ("IVMATCH_SEED", "99"),
            ("IVMATCH_DESIGN__DOSE_CALIPER", "15.0"),
            ("IVMATCH_SIMULATE__STUDY2__REPLICATES", "7"),
            ("IVMATCH_OUTPUT", "elsewhere"),
            ("OTHER_VAR", "ignored"),
        ]),
        Path::new("/base"),
    )
    .unwrap();
    assert_eq!(c.inference.alpha, 0.1);
    assert_eq!(c.seed, Some(99));
    assert_eq!(c.design.dose_caliper, 15.0);
    assert_eq!(c.simulate.study2.replicates, 7);
    assert_eq!(c.output, Path::new("/base/elsewhere"));
}

#[test]
fn invalid_values_are_rejected() {
    for bad in [
        ("IVMATCH_INFERENCE__ALPHA", "1.5"),
        ("IVMATCH_INFERENCE__K0", "2.0"),
        ("IVMATCH_TEMPLATE__FRACTION", "1.0"),
        ("IVMATCH_DESIGN__DOSE_PENALTY", "-1.0"),
        ("IVMATCH_NOT_A_KEY", "1"),
    ] {
        let r = PipelineConfig::from_toml(BASE, env(&[bad]), Path::new("."));
        assert!(matches!(r, Err(CliError::Config(_)) | Err(CliError::Analysis(_))), "{bad:?}: {r:?}");
    }
}

#[test]
fn missing_file_is_missing_input() {
    let r = PipelineConfig::load(Path::new("/nonexistent/ivmatch.toml"));
    assert!(matches!(r, Err(CliError::MissingInput(_))));
}

#[test]
fn readme_example_parses() {
    let readme = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap();
    let block = readme.split("```toml\n").nth(1).unwrap().split("```").next().unwrap();
    let c = PipelineConfig::from_toml(block, env(&[]), Path::new("/p")).unwrap();
    assert_eq!(c.inference.gamma_cap, Some(1.17));
    assert_eq!(c.inference.subgroups[0].name, "low birth weight");
    assert_eq!(c.design.exact_match, ["risk_category"]);
    assert_eq!(c.simulate.study2.gammas, [0.0, 0.025, 0.05]);
}
