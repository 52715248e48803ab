//! JSON checkpoints: agent and optimizer state, the frozen configuration,
//! the serialized topologies and the sampling RNG.

use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::agents::Agent;
use crate::error::{Error, Result};
use crate::substrate::{parse_topology, SubstrateGraph};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub timestep: u64,
    pub config: RunConfig,
    /// Topology documents in round-robin order.
    pub topologies: Vec<String>,
    pub agent: Agent,
    pub rng: ChaCha8Rng,
}

impl Checkpoint {
    pub fn file_name(seed: u64, timestep: u64) -> String {
        format!("seed-{seed}-step-{timestep:012}.json")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let version = value.get("version").and_then(|v| v.as_u64());
        if version != Some(CHECKPOINT_VERSION.into()) {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported checkpoint version {version:?}",
                path.display()
            )));
        }
        serde_json::from_value(value).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn graphs(&self) -> Result<Vec<SubstrateGraph>> {
        self.topologies.iter().map(|t| parse_topology(t)).collect()
    }
}

/// The newest checkpoint of every seed found under `run_dir/checkpoints`,
/// ordered by seed.
pub fn latest_checkpoints(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let dir = run_dir.join("checkpoints");
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut best: std::collections::BTreeMap<u64, (u64, PathBuf)> = Default::default();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(rest) = name.strip_prefix("seed-").and_then(|r| r.strip_suffix(".json")) else { continue };
        let Some((seed, step)) = rest.split_once("-step-") else { continue };
        let (Ok(seed), Ok(step)) = (seed.parse::<u64>(), step.parse::<u64>()) else { continue };
        if best.get(&seed).is_none_or(|(s, _)| step > *s) {
            best.insert(seed, (step, path));
        }
    }
    if best.is_empty() {
        return Err(Error::Checkpoint(format!("no checkpoints under {}", dir.display())));
    }
    Ok(best.into_values().map(|(_, p)| p).collect())
}
