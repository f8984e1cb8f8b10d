use std::path::PathBuf;

use kgresolve::pipeline::{parse_config, ConfigOverrides, Mode};

#[test]
fn shipped_example_config_is_valid() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../kgresolve.example.toml");
    let cfg = parse_config(Some(&path), ConfigOverrides::default()).unwrap();
    assert_eq!(cfg.mode, Mode::Full);
    assert_eq!(cfg.tau, 1.0);
    assert_eq!(cfg.model.url.as_deref(), Some("http://localhost:8000/v1"));
}
