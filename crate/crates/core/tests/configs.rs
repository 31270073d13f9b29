use std::path::Path;

use lumiloc::RunConfig;

fn shipped(name: &str) -> RunConfig {
    RunConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

#[test]
fn default_json_matches_builtin_defaults() {
    assert_eq!(shipped("default.json"), RunConfig::default());
}

#[test]
fn shipped_configs_validate() {
    for name in ["default.json", "one_rp.json", "stress.json"] {
        shipped(name).validate().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    let stress = shipped("stress.json");
    assert!(stress.stress.enabled);
    assert_eq!(stress.stress.drop_fraction, 0.5);
    assert_eq!(stress.augmentation.samples, 6000);
}

#[test]
fn pretty_json_round_trips() {
    let cfg = shipped("stress.json");
    assert_eq!(RunConfig::from_json(&cfg.to_json_pretty()).unwrap(), cfg);
}
