use qedlab_harness::config::{parse_seed_list, parse_str};
use qedlab_harness::{run_experiment, ExperimentKind, HarnessError, RunManifest};

fn config_key(err: HarnessError) -> String {
    match err {
        HarnessError::Config { key, .. } => key,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn negative_k_is_rejected_naming_its_key() {
    let err = parse_str("kind = \"tabular-qed\"\nseeds = [0, 1]\n[tabular]\nks = [-1.0]\n").unwrap_err();
    assert!(err.to_string().contains("tabular.ks[0]"), "{err}");
    assert_eq!(config_key(err), "tabular.ks[0]");
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    let err = parse_str("kind = \"toy\"\nseeds = [0]\n[toy.train]\nstepz = 3\n").unwrap_err();
    assert_eq!(config_key(err), "toy.train.stepz");
    let err = parse_str("kind = \"toy\"\nseeds = [0]\nverbose = true\n").unwrap_err();
    assert_eq!(config_key(err), "verbose");
}

#[test]
fn blocks_for_other_kinds_are_rejected() {
    let err = parse_str("kind = \"verify-thm1\"\nseeds = [0]\n[toy]\nalphas = [0.1]\n").unwrap_err();
    assert_eq!(config_key(err), "toy");
}

#[test]
fn seeds_must_be_present_and_distinct() {
    for seeds in ["[]", "[1, 1]"] {
        let err = parse_str(&format!("kind = \"verify-thm1\"\nseeds = {seeds}\n")).unwrap_err();
        assert_eq!(config_key(err), "seeds");
    }
}

#[test]
fn toy_expectation_needs_a_configured_alpha() {
    let err = parse_str("kind = \"toy\"\nseeds = [0]\n[toy]\nalphas = [0.1]\n[[toy.expect]]\nalpha = 0.3\nmin_near = 1\n").unwrap_err();
    assert_eq!(config_key(err), "toy.expect[0].alpha");
}

#[test]
fn canonical_form_round_trips_and_hash_ignores_location() {
    let mut cfg = parse_str("kind = \"tabular-qed\"\nseeds = [0, 1]\n[tabular]\nks = [0.2]\n").unwrap();
    cfg.validate().unwrap();
    let text = cfg.canonical_toml().unwrap();
    let mut again = parse_str(&text).unwrap();
    again.validate().unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.canonical_toml().unwrap(), again.canonical_toml().unwrap());
    let hash = cfg.config_hash().unwrap();
    again.out_dir = Some("elsewhere".into());
    assert_eq!(again.config_hash().unwrap(), hash);
    again.seeds = vec![0, 2];
    assert_ne!(again.config_hash().unwrap(), hash);
}

#[test]
fn seed_lists_accept_ranges() {
    assert_eq!(parse_seed_list("0,1,5..8").unwrap(), vec![0, 1, 5, 6, 7]);
    assert!(parse_seed_list("a").is_err());
}

#[test]
fn minimal_config_echoes_every_default_into_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_str("kind = \"verify-thm1\"\nseeds = [3]\n[thm1]\ntuples = 20\n").unwrap();
    let manifest = run_experiment(cfg, dir.path()).unwrap();
    let block = &manifest.config["thm1"];
    assert_eq!(block["tuples"], 20);
    for key in ["min_actions", "max_actions", "kappa_min", "kappa_max", "q_scale", "alpha_min", "tolerance"] {
        assert!(!block[key].is_null(), "default `{key}` missing from manifest config");
    }
    assert_eq!(manifest.kind, ExperimentKind::VerifyThm1.name());
    assert_eq!(RunManifest::load(dir.path()).unwrap(), manifest);
    for file in &manifest.files {
        let bytes = std::fs::read(dir.path().join(&file.path)).unwrap();
        assert_eq!(bytes.len() as u64, file.bytes);
    }
}
