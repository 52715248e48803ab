//! Run configuration: one TOML document with a section per module.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, AgentKind};
use crate::environment::{EnvConfig, ObsNormalization};
use crate::error::{Error, Result};
use crate::splitmodel::{CostParams, CrosshaulLoad, SplitCatalog};
use crate::substrate::{generate_topology, parse_topology, SubstrateGraph, TopologySpec};
use crate::traffic::SessionConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(with = "agent_name")]
    pub agent: AgentKind,
    pub seeds: Vec<u64>,
    pub total_timesteps: u64,
    pub eval_episodes: usize,
    /// Timesteps between evaluations and checkpoints.
    pub eval_interval: u64,
    pub output_dir: PathBuf,
    /// Stamp metrics with elapsed seconds. Disable for bitwise-comparable
    /// streams.
    pub record_wall_clock: bool,
    /// Topology file; takes precedence over `topology`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topology_file: Option<PathBuf>,
    pub topology: TopologySpec,
    /// Extra topologies for multi-topology training. When non-empty these
    /// replace `topology` and environments are assigned round-robin.
    pub topologies: Vec<TopologySpec>,
    pub session: SessionConfig,
    pub costs: CostParams,
    pub observation: ObsNormalization,
    pub hyperparameters: AgentConfig,
    pub splits: SplitCatalog,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            agent: AgentKind::Mppo,
            seeds: vec![0],
            total_timesteps: 100_000,
            eval_episodes: 10,
            eval_interval: 50_000,
            output_dir: PathBuf::from("runs"),
            record_wall_clock: true,
            topology_file: None,
            topology: TopologySpec::new(4, 2, 1, 0.1, 0),
            topologies: Vec::new(),
            session: SessionConfig::default(),
            costs: CostParams::default(),
            observation: ObsNormalization::default(),
            hyperparameters: AgentConfig::default(),
            splits: SplitCatalog::default(),
        }
    }
}

mod agent_name {
    use super::AgentKind;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(k: &AgentKind, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&k.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<AgentKind, D::Error> {
        let name = String::deserialize(d)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        if self.topology_file.is_none() {
            self.topology.validate()?;
        }
        for t in &self.topologies {
            t.validate()?;
        }
        self.env_config().validate()?;
        self.hyperparameters.validate()
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            session: self.session.clone(),
            catalog: self.splits.clone(),
            costs: self.costs.clone(),
            normalization: self.observation.clone(),
        }
    }

    /// The training topologies, in round-robin order.
    pub fn load_topologies(&self) -> Result<Vec<SubstrateGraph>> {
        if !self.topologies.is_empty() {
            return self.topologies.iter().map(generate_topology).collect();
        }
        match &self.topology_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let g = parse_topology(&text)?;
                g.check_feasible()?;
                Ok(vec![g])
            }
            None => Ok(vec![generate_topology(&self.topology)?]),
        }
    }

    /// Full configuration with every default spelled out, preceded by a
    /// readable summary of the split table.
    pub fn render(&self) -> String {
        let mut out = String::from("# split  option  cross-haul load (Gbps)  DU-CU delay (ms)  DU CC/Mbps  CU CC/Mbps\n");
        for s in &self.splits.splits {
            let load = match s.crosshaul_load {
                CrosshaulLoad::Affine { slope, offset_gbps } if offset_gbps == 0.0 && slope == 1.0 => "λ".to_string(),
                CrosshaulLoad::Affine { slope, offset_gbps } => format!("{slope}λ + {offset_gbps}"),
                CrosshaulLoad::Constant { constant_gbps } => format!("{constant_gbps}"),
            };
            let _ = writeln!(
                out,
                "# {:<6} {:<7} {:<22} {:<17} {:<11} {}",
                s.id.to_string(),
                format!("{:?}", s.hls_option),
                load,
                s.crosshaul_delay_bound_ms,
                s.du_coeff,
                s.cu_coeff
            );
        }
        out.push('\n');
        out.push_str(&self.to_toml());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = RunConfig::from_toml("agent = \"gppo\"\nseeds = [1, 2]\n[hyperparameters]\nn_envs = 2\n").unwrap();
        assert_eq!(cfg.agent, AgentKind::Gppo);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.hyperparameters.n_envs, 2);
        assert_eq!(cfg.hyperparameters.batch_size, 128);
    }

    #[test]
    fn unknown_agent_lists_valid_names() {
        let err = RunConfig::from_toml("agent = \"A3C\"").unwrap_err().to_string();
        for name in ["GPPO", "MPPO", "PPO", "DDPG"] {
            assert!(err.contains(name), "{err}");
        }
    }

    #[test]
    fn unknown_keys_and_empty_seeds_are_rejected() {
        assert!(RunConfig::from_toml("learning_rate = 0.1").is_err());
        assert!(RunConfig::from_toml("[costs]\nprice = 3").is_err());
        assert!(RunConfig::from_toml("seeds = []").is_err());
    }

    #[test]
    fn multi_topology_list_is_used_in_order() {
        let mut cfg = RunConfig::default();
        cfg.topologies = (0..3).map(|s| TopologySpec::new(8, 3, 2, 0.1, s)).collect();
        let gs = cfg.load_topologies().unwrap();
        assert_eq!(gs.len(), 3);
        assert_eq!(gs[1].spec().unwrap().seed, 1);
    }
}
