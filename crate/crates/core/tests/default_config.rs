use std::path::Path;

use cellfree_core::{ExperimentConfig, Preset};

fn shipped() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../default.cfg"))
}

#[test]
fn shipped_defaults_match_the_full_preset() {
    for base in [Preset::Paper, Preset::Small] {
        let cfg = ExperimentConfig::load(shipped(), base).unwrap();
        assert_eq!(cfg, Preset::Paper.config(), "over {base:?}");
    }
}

#[test]
fn serialized_config_reloads_unchanged() {
    let cfg = Preset::Small.config();
    let text = cfg.to_toml_string().unwrap();
    assert_eq!(ExperimentConfig::from_toml_str(&text, Preset::Paper).unwrap(), cfg);
}
