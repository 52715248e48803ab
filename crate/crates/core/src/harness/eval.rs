//! Greedy evaluation episodes and their summary statistics.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::Agent;
use crate::environment::{EnvConfig, Environment, Observation};
use crate::error::{Error, Result};
use crate::evaluator::CostBreakdown;
use crate::oracle::enumerate_optimal;
use crate::substrate::SubstrateGraph;

/// Keeps evaluation demand sequences apart from training ones.
const EVAL_STREAM: u64 = 0x0E7A_1000_5EED;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub topology: usize,
    pub reward: f64,
    pub success: bool,
    pub slots: usize,
    pub steps: usize,
    /// Summed over slots; only reported for successful episodes.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cost: Option<CostBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean_reward: f64,
    pub std_reward: f64,
    pub success_rate: f64,
    /// Over successful episodes only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std_cost: Option<f64>,
    pub episodes: Vec<EpisodeOutcome>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalSummary {
    pub fn from_episodes(episodes: Vec<EpisodeOutcome>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::Usage("no episodes to summarize".into()));
        }
        let rewards: Vec<f64> = episodes.iter().map(|e| e.reward).collect();
        let costs: Vec<f64> = episodes.iter().filter_map(|e| e.cost.map(|c| c.total)).collect();
        let (mean_reward, std_reward) = mean_std(&rewards);
        let (mean_cost, std_cost) = if costs.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(&costs);
            (Some(m), Some(s))
        };
        Ok(Self {
            mean_reward,
            std_reward,
            success_rate: episodes.iter().filter(|e| e.success).count() as f64 / episodes.len() as f64,
            mean_cost,
            std_cost,
            episodes,
        })
    }
}

pub trait Policy {
    fn act(&mut self, env: &Environment, obs: &Observation) -> Result<Vec<usize>>;
}

/// Deterministic per-head argmax of a trained agent.
pub struct Greedy<'a>(pub &'a Agent);

impl Policy for Greedy<'_> {
    fn act(&mut self, env: &Environment, obs: &Observation) -> Result<Vec<usize>> {
        self.0.greedy_action(obs, env.mask())
    }
}

/// Plays the exact single-slot optimum given the previous placement. When
/// no strictly feasible allocation exists it falls back to the first
/// allowed value of every head.
pub struct OracleReplay {
    pub limit: u64,
}

impl Policy for OracleReplay {
    fn act(&mut self, env: &Environment, _obs: &Observation) -> Result<Vec<usize>> {
        let st = env.state();
        let cfg = env.config();
        let res = enumerate_optimal(&st.graph, &st.requests, st.prev_alloc.as_ref(), &cfg.catalog, &cfg.costs, self.limit)?;
        Ok(match res.best_alloc {
            Some(a) => env.action_space().encode(&a),
            None => {
                let m = env.mask();
                (0..m.num_heads())
                    .map(|h| m.head(h).iter().position(|&b| b).expect("non-empty head"))
                    .collect()
            }
        })
    }
}

pub fn run_episode(env: &mut Environment, policy: &mut dyn Policy, seed: u64, topology: usize) -> Result<EpisodeOutcome> {
    let mut obs = env.reset(seed).observation;
    let (mut reward, mut steps, mut success) = (0.0, 0, true);
    let mut cost = CostBreakdown::default();
    loop {
        let action = policy.act(env, &obs)?;
        let res = env.step(&action)?;
        reward += res.reward;
        steps += 1;
        success &= res.info.report.n_fail == 0;
        if let Some(c) = res.info.cost {
            cost.compute += c.compute;
            cost.reconfiguration += c.reconfiguration;
            cost.routing += c.routing;
            cost.sla += c.sla;
            cost.total += c.total;
        }
        if res.done() {
            return Ok(EpisodeOutcome {
                topology,
                reward,
                success,
                slots: res.info.slot,
                steps,
                cost: success.then_some(cost),
            });
        }
        obs = res.observation;
    }
}

/// Runs `n_episodes` episodes, cycling through `graphs`.
pub fn evaluate(
    policy: &mut dyn Policy,
    graphs: &[Arc<SubstrateGraph>],
    env_cfg: &Arc<EnvConfig>,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    if graphs.is_empty() {
        return Err(Error::Usage("evaluation needs at least one topology".into()));
    }
    let mut envs = graphs
        .iter()
        .map(|g| Environment::new(g.clone(), env_cfg.clone(), 0))
        .collect::<Result<Vec<_>>>()?;
    let mut seeds = ChaCha8Rng::seed_from_u64(seed ^ EVAL_STREAM);
    let episodes = (0..n_episodes)
        .map(|k| {
            let t = k % envs.len();
            run_episode(&mut envs[t], policy, seeds.random(), t)
        })
        .collect::<Result<Vec<_>>>()?;
    EvalSummary::from_episodes(episodes)
}
