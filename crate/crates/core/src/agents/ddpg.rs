//! DDPG baseline over a continuous relaxation of the multi-discrete action
//! space. Actions are rescaled and rounded per head and never masked.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp, Parameters};

/// Maps `u` in `[-1, 1]` to `round(1 + (u + 1) / 2 * (n - 1))` in `1..=n`
/// and returns the zero-based index.
pub fn ddpg_act(u: &[f64], head_sizes: &[usize]) -> Vec<usize> {
    u.iter()
        .zip(head_sizes)
        .map(|(&x, &n)| {
            let x = x.clamp(-1.0, 1.0);
            let one_based = (1.0 + (x + 1.0) / 2.0 * (n as f64 - 1.0)).round();
            (one_based.clamp(1.0, n as f64) as usize) - 1
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpgConfig {
    pub buffer_size: usize,
    pub tau: f64,
    pub noise_sigma: f64,
    pub learning_rate: f64,
    /// Transitions collected with random actions before updates begin.
    pub learning_starts: usize,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            buffer_size: 100_000,
            tau: 0.005,
            noise_sigma: 0.1,
            learning_rate: 1e-3,
            learning_starts: 1000,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.buffer_size == 0 || !(self.tau > 0.0 && self.tau <= 1.0) || self.noise_sigma < 0.0 || self.learning_rate <= 0.0 {
            return Err(Error::Config("invalid DDPG settings".into()));
        }
        Ok(())
    }
}

/// Ring buffer of flat transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    next_obs: Vec<Vec<f64>>,
    terminal: Vec<bool>,
    pos: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_obs: Vec::new(),
            terminal: Vec::new(),
            pos: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, obs: Vec<f64>, action: Vec<f64>, reward: f64, next_obs: Vec<f64>, terminal: bool) {
        if self.len() < self.capacity {
            self.obs.push(obs);
            self.actions.push(action);
            self.rewards.push(reward);
            self.next_obs.push(next_obs);
            self.terminal.push(terminal);
        } else {
            let i = self.pos;
            self.obs[i] = obs;
            self.actions[i] = action;
            self.rewards[i] = reward;
            self.next_obs[i] = next_obs;
            self.terminal[i] = terminal;
        }
        self.pos = (self.pos + 1) % self.capacity;
    }
}

fn stack(rows: &[&Vec<f64>]) -> Array2<f64> {
    let w = rows[0].len();
    Array2::from_shape_fn((rows.len(), w), |(i, j)| rows[i][j])
}

fn concat(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("matching rows")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ddpg {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub head_sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DdpgStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
}

impl Ddpg {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], head_sizes: Vec<usize>, lr: f64, rng: &mut R) -> Self {
        let act_dim = head_sizes.len();
        let widths = |input, out| {
            let mut v = vec![input];
            v.extend_from_slice(hidden);
            v.push(out);
            v
        };
        let actor = Mlp::new(&widths(obs_dim, act_dim), rng);
        let critic = Mlp::new(&widths(obs_dim + act_dim, 1), rng);
        Self {
            actor_opt: Adam::new(&actor, lr, 1e-8),
            critic_opt: Adam::new(&critic, lr, 1e-8),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            head_sizes,
        }
    }

    /// Deterministic continuous action in `[-1, 1]`.
    pub fn act(&self, obs: &[f64]) -> Vec<f64> {
        let x = Array2::from_shape_vec((1, obs.len()), obs.to_vec()).expect("row vector");
        self.actor.forward(&x).mapv(f64::tanh).into_raw_vec_and_offset().0
    }

    pub fn act_noisy<R: Rng + ?Sized>(&self, obs: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
        let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
        self.act(obs)
            .into_iter()
            .map(|u| (u + noise.sample(rng)).clamp(-1.0, 1.0))
            .collect()
    }

    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        replay: &ReplayBuffer,
        batch_size: usize,
        gamma: f64,
        tau: f64,
        rng: &mut R,
    ) -> DdpgStats {
        let idx: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..replay.len())).collect();
        let b = batch_size as f64;
        let obs = stack(&idx.iter().map(|&i| &replay.obs[i]).collect::<Vec<_>>());
        let act = stack(&idx.iter().map(|&i| &replay.actions[i]).collect::<Vec<_>>());
        let next = stack(&idx.iter().map(|&i| &replay.next_obs[i]).collect::<Vec<_>>());

        let next_act = self.actor_target.forward(&next).mapv(f64::tanh);
        let q_next = self.critic_target.forward(&concat(&next, &next_act));
        let target: Array1<f64> = idx
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let cont = if replay.terminal[i] { 0.0 } else { 1.0 };
                replay.rewards[i] + gamma * cont * q_next[[k, 0]]
            })
            .collect();

        let (q, trace) = self.critic.forward_trace(&concat(&obs, &act));
        let err = &q.column(0) - &target;
        let critic_loss = err.mapv(|e| e * e).sum() / b;
        let mut grad = self.critic.zeros_like();
        self.critic
            .backward(&trace, &err.mapv(|e| 2.0 * e / b).insert_axis(Axis(1)), &mut grad);
        self.critic_opt.step(&mut self.critic, &grad);

        let (pre, atrace) = self.actor.forward_trace(&obs);
        let u = pre.mapv(f64::tanh);
        let (q_pi, ctrace) = self.critic.forward_trace(&concat(&obs, &u));
        let actor_loss = -q_pi.sum() / b;
        let mut scratch = self.critic.zeros_like();
        let dx = self
            .critic
            .backward(&ctrace, &Array2::from_elem((batch_size, 1), -1.0 / b), &mut scratch);
        let du = dx.slice(s![.., obs.ncols()..]).to_owned();
        let dpre = &du * &u.mapv(|v| 1.0 - v * v);
        let mut agrad = self.actor.zeros_like();
        self.actor.backward(&atrace, &dpre, &mut agrad);
        self.actor_opt.step(&mut self.actor, &agrad);

        self.actor_target.soft_update_from(&self.actor, tau);
        self.critic_target.soft_update_from(&self.critic, tau);
        DdpgStats {
            critic_loss,
            actor_loss,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rescale_and_round_endpoints() {
        assert_eq!(ddpg_act(&[-1.0, -1.0], &[4, 3]), vec![0, 0]);
        assert_eq!(ddpg_act(&[1.0, 1.0], &[4, 3]), vec![3, 2]);
        // 1 + 1.5 = 2.5 rounds to the 1-based index 3.
        assert_eq!(ddpg_act(&[0.0], &[4]), vec![2]);
        assert_eq!(ddpg_act(&[0.3], &[1]), vec![0]);
        assert_eq!(ddpg_act(&[7.0], &[2]), vec![1]);
    }

    #[test]
    fn replay_wraps_around() {
        let mut r = ReplayBuffer::new(3);
        for i in 0..5 {
            r.push(vec![i as f64], vec![0.0], i as f64, vec![0.0], false);
        }
        assert_eq!(r.len(), 3);
        let mut rewards = r.rewards.clone();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn learns_a_one_step_bandit() {
        // Reward is highest when the single action output is near +1.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut agent = Ddpg::new(2, &[16, 16], vec![5], 1e-3, &mut rng);
        let mut replay = ReplayBuffer::new(10_000);
        for _ in 0..2000 {
            let a: f64 = rng.random_range(-1.0..=1.0);
            replay.push(vec![1.0, 0.0], vec![a], a, vec![1.0, 0.0], true);
        }
        for _ in 0..1500 {
            agent.train_step(&replay, 64, 0.98, 0.01, &mut rng);
        }
        let u = agent.act(&[1.0, 0.0]);
        assert!(u[0] > 0.8, "{u:?}");
        assert_eq!(ddpg_act(&u, &[5]), vec![4]);
    }
}
