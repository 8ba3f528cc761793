//! Built-in experiment specs, one per reproduced figure.

use std::path::{Path, PathBuf};

use super::spec::ExperimentSpec;
use crate::error::{Error, Result};

pub const PRESETS: [(&str, &str); 11] = [
    ("fig3", include_str!("../../presets/fig3.toml")),
    ("fig4", include_str!("../../presets/fig4.toml")),
    ("fig5", include_str!("../../presets/fig5.toml")),
    ("fig6", include_str!("../../presets/fig6.toml")),
    ("fig7", include_str!("../../presets/fig7.toml")),
    ("fig8", include_str!("../../presets/fig8.toml")),
    ("fig9", include_str!("../../presets/fig9.toml")),
    ("fig10", include_str!("../../presets/fig10.toml")),
    ("fig11", include_str!("../../presets/fig11.toml")),
    ("fig13", include_str!("../../presets/fig13.toml")),
    ("fig14", include_str!("../../presets/fig14.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::Config(format!("unknown preset `{name}`; known: {}", names().collect::<Vec<_>>().join(", "))))
}

pub fn preset(name: &str) -> Result<ExperimentSpec> {
    ExperimentSpec::parse(preset_text(name)?, Path::new(&format!("{name}.toml")), PathBuf::new())
}
