//! Persistence and interchange: the control protocol, image files and CSV tables.

pub mod formats;
pub mod protocol;
pub mod tables;

use std::path::Path;

use crate::env::{EpisodeConfig, RolloutRecord};
use crate::error::{Error, Result};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn load_config(path: &Path) -> Result<EpisodeConfig> {
    EpisodeConfig::from_toml(&read_text(path)?)
}

pub fn save_config(path: &Path, config: &EpisodeConfig) -> Result<()> {
    Ok(std::fs::write(path, config.to_toml()?)?)
}

pub fn load_rollout(path: &Path) -> Result<RolloutRecord> {
    RolloutRecord::from_json(&read_text(path)?)
}

pub fn save_rollout(path: &Path, record: &RolloutRecord) -> Result<()> {
    Ok(std::fs::write(path, record.to_json()?)?)
}
