//! Learning agents: masked and unmasked multi-discrete PPO with a flat or
//! graph front-end, and a DDPG baseline.

pub mod ddpg;
pub mod distribution;
pub mod policy;
pub mod ppo;
pub mod rollout;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::environment::{ActionMask, Observation};
use crate::error::{Error, Result};
use crate::nn::Adam;
use ddpg::{ddpg_act, Ddpg, DdpgConfig};
use distribution::MultiCategorical;
use policy::ActorCritic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    #[serde(rename = "GPPO")]
    Gppo,
    #[serde(rename = "MPPO")]
    Mppo,
    #[serde(rename = "PPO")]
    Ppo,
    #[serde(rename = "DDPG")]
    Ddpg,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [AgentKind::Gppo, AgentKind::Mppo, AgentKind::Ppo, AgentKind::Ddpg];

    pub fn is_masked(self) -> bool {
        matches!(self, AgentKind::Gppo | AgentKind::Mppo)
    }

    pub fn uses_graph(self) -> bool {
        self == AgentKind::Gppo
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Gppo => "GPPO",
            AgentKind::Mppo => "MPPO",
            AgentKind::Ppo => "PPO",
            AgentKind::Ddpg => "DDPG",
        })
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown agent '{s}'; expected one of GPPO, MPPO, PPO, DDPG")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    /// Rollout horizon per environment.
    pub n_steps: usize,
    pub n_epochs: usize,
    pub n_envs: usize,
    pub adam_eps: f64,
    pub normalize_advantage: bool,
    pub hidden: Vec<usize>,
    pub encoder: EncoderConfig,
    pub ddpg: DdpgConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 128,
            gamma: 0.98,
            gae_lambda: 0.97,
            clip_range: 0.3,
            ent_coef: 1e-6,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            n_steps: 256,
            n_epochs: 10,
            n_envs: 8,
            adam_eps: 1e-5,
            normalize_advantage: true,
            hidden: vec![256, 256],
            encoder: EncoderConfig::default(),
            ddpg: DdpgConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.gamma) || !unit(self.gae_lambda) {
            return Err(Error::Config("gamma and gae_lambda must lie in (0, 1]".into()));
        }
        if !(self.clip_range > 0.0) {
            return Err(Error::Config("clip_range must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || self.ent_coef < 0.0 || self.vf_coef < 0.0 || !(self.max_grad_norm > 0.0) {
            return Err(Error::Config("learning rate, coefficients and gradient clip must be positive".into()));
        }
        if self.batch_size == 0 || self.n_steps == 0 || self.n_epochs == 0 || self.n_envs == 0 {
            return Err(Error::Config("batch size, horizon, epochs and env count must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        self.encoder.validate()?;
        self.ddpg.validate()
    }
}

/// A trainable agent with its optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Agent {
    Ppo { kind: AgentKind, model: ActorCritic, opt: Adam },
    Ddpg(Box<Ddpg>),
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        kind: AgentKind,
        cfg: &AgentConfig,
        obs_dim: usize,
        head_sizes: Vec<usize>,
        rng: &mut R,
    ) -> Self {
        match kind {
            AgentKind::Ddpg => Agent::Ddpg(Box::new(Ddpg::new(obs_dim, &cfg.hidden, head_sizes, cfg.ddpg.learning_rate, rng))),
            _ => {
                let model = if kind.uses_graph() {
                    ActorCritic::graph(&cfg.encoder, &cfg.hidden, head_sizes, rng)
                } else {
                    ActorCritic::flat(obs_dim, &cfg.hidden, head_sizes, rng)
                };
                let opt = Adam::new(&model, cfg.learning_rate, cfg.adam_eps);
                Agent::Ppo { kind, model, opt }
            }
        }
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Ppo { kind, .. } => *kind,
            Agent::Ddpg(_) => AgentKind::Ddpg,
        }
    }

    /// Deterministic action: per-head argmax (under the mask for masked
    /// agents), or the rounded actor output for DDPG.
    pub fn greedy_action(&self, obs: &Observation, mask: &ActionMask) -> Result<Vec<usize>> {
        match self {
            Agent::Ppo { kind, model, .. } => {
                let out = model.forward(&[obs]);
                let m = kind.is_masked().then(|| mask.flat());
                let row = out.logits.row(0);
                Ok(MultiCategorical::new(row.as_slice().expect("row-major"), &model.head_sizes, m)?.mode())
            }
            Agent::Ddpg(d) => Ok(ddpg_act(&d.act(&obs.flat), &d.head_sizes)),
        }
    }
}
