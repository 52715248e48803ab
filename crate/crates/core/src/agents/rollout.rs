//! Vectorized environments, on-policy rollout storage and advantage
//! estimation.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distribution::MultiCategorical;
use super::policy::ActorCritic;
use crate::environment::{ActionMask, Environment, Observation, StepResult};
use crate::error::{Error, Result};
use crate::evaluator::CostBreakdown;

/// Summary of one finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub env: usize,
    pub topology: usize,
    pub reward: f64,
    /// Steps taken, including retried infeasible ones.
    pub steps: usize,
    pub slots: usize,
    /// No step in the episode had a missing link.
    pub success: bool,
    pub early_terminated: bool,
    /// Sums over the connected steps.
    pub cost: CostBreakdown,
}

#[derive(Debug, Clone)]
struct Tracker {
    reward: f64,
    steps: usize,
    success: bool,
    cost: CostBreakdown,
}

impl Tracker {
    fn new() -> Self {
        Self {
            reward: 0.0,
            steps: 0,
            success: true,
            cost: CostBreakdown::default(),
        }
    }

    fn record(&mut self, res: &StepResult) {
        self.reward += res.reward;
        self.steps += 1;
        if res.info.report.n_fail > 0 {
            self.success = false;
        }
        if let Some(c) = &res.info.cost {
            self.cost.compute += c.compute;
            self.cost.reconfiguration += c.reconfiguration;
            self.cost.routing += c.routing;
            self.cost.sla += c.sla;
            self.cost.total += c.total;
        }
    }
}

/// What one environment reported for one step.
#[derive(Debug, Clone)]
pub struct VecStep {
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    /// Observation the episode ended on, before auto-reset.
    pub final_observation: Option<Observation>,
}

/// Environments stepped in lockstep. Finished episodes are reset
/// immediately with seeds drawn from a dedicated stream.
#[derive(Debug, Clone)]
pub struct VecEnv {
    envs: Vec<Environment>,
    topology: Vec<usize>,
    obs: Vec<Observation>,
    trackers: Vec<Tracker>,
    seeds: ChaCha8Rng,
    finished: Vec<EpisodeStats>,
}

impl VecEnv {
    /// `topology[i]` labels environment `i` in episode statistics.
    pub fn new(mut envs: Vec<Environment>, topology: Vec<usize>, seed: u64) -> Result<Self> {
        if envs.is_empty() {
            return Err(Error::Config("at least one environment is required".into()));
        }
        if topology.len() != envs.len() {
            return Err(Error::Usage("one topology label per environment is required".into()));
        }
        let space = *envs[0].action_space();
        if envs.iter().any(|e| *e.action_space() != space) {
            return Err(Error::Config("all environments must share the action space".into()));
        }
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let obs = envs.iter_mut().map(|e| e.reset(seeds.random()).observation).collect();
        let trackers = vec![Tracker::new(); envs.len()];
        Ok(Self {
            envs,
            topology,
            obs,
            trackers,
            seeds,
            finished: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[Environment] {
        &self.envs
    }

    pub fn observations(&self) -> &[Observation] {
        &self.obs
    }

    pub fn mask(&self, i: usize) -> &Arc<ActionMask> {
        self.envs[i].mask()
    }

    pub fn head_sizes(&self) -> Vec<usize> {
        self.envs[0].action_space().head_sizes()
    }

    pub fn step(&mut self, actions: &[Vec<usize>]) -> Result<Vec<VecStep>> {
        let mut out = Vec::with_capacity(self.envs.len());
        for (i, action) in actions.iter().enumerate() {
            let res = self.envs[i].step(action)?;
            self.trackers[i].record(&res);
            let mut step = VecStep {
                reward: res.reward,
                terminated: res.terminated,
                truncated: res.truncated,
                final_observation: None,
            };
            if res.done() {
                let t = std::mem::replace(&mut self.trackers[i], Tracker::new());
                self.finished.push(EpisodeStats {
                    env: i,
                    topology: self.topology[i],
                    reward: t.reward,
                    steps: t.steps,
                    slots: res.info.slot,
                    success: t.success,
                    early_terminated: res.terminated,
                    cost: t.cost,
                });
                step.final_observation = Some(res.observation);
                self.obs[i] = self.envs[i].reset(self.seeds.random()).observation;
            } else {
                self.obs[i] = res.observation;
            }
            out.push(step);
        }
        Ok(out)
    }

    /// Episodes finished since the last call.
    pub fn drain_finished(&mut self) -> Vec<EpisodeStats> {
        std::mem::take(&mut self.finished)
    }
}

/// Transitions of one rollout, stored time-major: index `t * n_envs + e`.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub observations: Vec<Observation>,
    pub actions: Vec<Vec<usize>>,
    /// `None` when the policy acts unmasked.
    pub masks: Vec<Option<Arc<ActionMask>>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// The step ended its episode (termination or truncation).
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn has_advantages(&self) -> bool {
        !self.is_empty() && self.advantages.len() == self.len()
    }

    /// Generalized advantage estimation; `last_values` bootstraps each
    /// environment's unfinished tail.
    pub fn compute_advantages(&mut self, last_values: &[f64], gamma: f64, lambda: f64) {
        let n = self.n_envs;
        let horizon = self.len() / n;
        self.advantages = vec![0.0; self.len()];
        for e in 0..n {
            let mut gae = 0.0;
            for t in (0..horizon).rev() {
                let i = t * n + e;
                let not_done = if self.dones[i] { 0.0 } else { 1.0 };
                let next_value = if t + 1 == horizon {
                    last_values[e]
                } else {
                    self.values[i + n]
                };
                let delta = self.rewards[i] + gamma * next_value * not_done - self.values[i];
                gae = delta + gamma * lambda * not_done * gae;
                self.advantages[i] = gae;
            }
        }
        self.returns = self.advantages.iter().zip(&self.values).map(|(a, v)| a + v).collect();
    }
}

/// Steps every environment `horizon` times under the current policy and
/// computes advantages. Truncated episodes fold the discounted value of
/// their final observation into the last reward.
pub fn collect_rollouts<R: Rng + ?Sized>(
    envs: &mut VecEnv,
    model: &ActorCritic,
    horizon: usize,
    masked: bool,
    gamma: f64,
    lambda: f64,
    rng: &mut R,
) -> Result<RolloutBuffer> {
    let n = envs.len();
    let sizes = envs.head_sizes();
    let mut buf = RolloutBuffer {
        n_envs: n,
        ..Default::default()
    };
    for _ in 0..horizon {
        let obs: Vec<Observation> = envs.observations().to_vec();
        let refs: Vec<&Observation> = obs.iter().collect();
        let out = model.forward(&refs);
        let mut actions = Vec::with_capacity(n);
        for (e, row) in out.logits.rows().into_iter().enumerate() {
            let mask = masked.then(|| envs.mask(e).clone());
            let dist = MultiCategorical::new(row.as_slice().expect("row-major"), &sizes, mask.as_deref().map(ActionMask::flat))?;
            let a = dist.sample(rng);
            buf.log_probs.push(dist.log_prob(&a));
            buf.masks.push(mask);
            actions.push(a);
        }
        let steps = envs.step(&actions)?;
        for (e, st) in steps.into_iter().enumerate() {
            let mut r = st.reward;
            if st.truncated && !st.terminated {
                let fin = st.final_observation.as_ref().expect("finished episodes keep their last observation");
                r += gamma * model.values(&[fin])[0];
            }
            buf.rewards.push(r);
            buf.dones.push(st.terminated || st.truncated);
            buf.values.push(out.values[e]);
        }
        buf.observations.extend(obs);
        buf.actions.extend(actions);
    }
    let refs: Vec<&Observation> = envs.observations().iter().collect();
    let last = model.values(&refs);
    buf.compute_advantages(last.as_slice().expect("contiguous"), gamma, lambda);
    Ok(buf)
}
