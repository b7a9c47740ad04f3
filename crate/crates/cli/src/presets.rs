//! Built-in configurations.

use crate::config::ExperimentConfig;
use crate::exit::{Stage, StageError};

const PRESETS: [(&str, &str); 5] = [
    ("duffing-l2", include_str!("../presets/duffing-l2.toml")),
    ("duffing-l2-n1", include_str!("../presets/duffing-l2-n1.toml")),
    ("resonant-control", include_str!("../presets/resonant-control.toml")),
    ("zero-eps", include_str!("../presets/zero-eps.toml")),
    ("harmonic-l1", include_str!("../presets/harmonic-l1.toml")),
];

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load(name: &str) -> Result<ExperimentConfig, StageError> {
    let t = text(name).ok_or_else(|| {
        StageError::new(Stage::Usage, format!("unknown preset '{name}' (known: {})", names().join(", ")))
    })?;
    ExperimentConfig::from_toml_str(t)
}
