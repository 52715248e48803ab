//! Clipped-surrogate PPO update over a completed rollout.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::distribution::MultiCategorical;
use super::policy::ActorCritic;
use super::rollout::RolloutBuffer;
use super::AgentConfig;
use crate::environment::{ActionMask, Observation};
use crate::error::{Error, Result};
use crate::nn::{Adam, Parameters};

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// Diagnostics averaged over all minibatches of an update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub explained_variance: f64,
    pub grad_norm: f64,
}

pub fn explained_variance(pred: &[f64], target: &[f64]) -> f64 {
    let var = |v: &mut dyn Iterator<Item = f64>, n: usize| {
        let xs: Vec<f64> = v.collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64
    };
    let n = target.len();
    let vt = var(&mut target.iter().copied(), n);
    if vt == 0.0 {
        return f64::NAN;
    }
    1.0 - var(&mut target.iter().zip(pred).map(|(t, p)| t - p), n) / vt
}

/// Runs `n_epochs` passes of shuffled minibatches over `buffer`.
pub fn ppo_update<R: Rng + ?Sized>(
    model: &mut ActorCritic,
    opt: &mut Adam,
    buffer: &RolloutBuffer,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    if buffer.is_empty() {
        return Err(Error::Usage("cannot update from an empty rollout buffer".into()));
    }
    if !buffer.has_advantages() {
        return Err(Error::Usage("rollout buffer has no advantages yet".into()));
    }
    let sizes = model.head_sizes.clone();
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut stats = UpdateStats::default();
    let mut batches = 0usize;
    let mut grad = model.zeros_like();
    for _ in 0..cfg.n_epochs {
        order.shuffle(rng);
        for idx in order.chunks(cfg.batch_size) {
            let b = idx.len() as f64;
            let obs: Vec<&Observation> = idx.iter().map(|&i| &buffer.observations[i]).collect();
            let (out, trace) = model.forward_trace(&obs);

            let mut adv: Vec<f64> = idx.iter().map(|&i| buffer.advantages[i]).collect();
            if cfg.normalize_advantage && adv.len() > 1 {
                let mean = adv.iter().sum::<f64>() / b;
                let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (b - 1.0)).sqrt();
                adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
            }

            let mut d_logits = Array2::zeros(out.logits.raw_dim());
            let mut d_values = Array1::zeros(idx.len());
            let (mut pl, mut vl, mut ent, mut kl, mut clipped) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (k, &i) in idx.iter().enumerate() {
                let mask = buffer.masks[i].as_deref().map(ActionMask::flat);
                let row = out.logits.row(k);
                let dist = MultiCategorical::new(row.as_slice().expect("row-major"), &sizes, mask)?;
                let logp = dist.log_prob(&buffer.actions[i]);
                let log_ratio = logp - buffer.log_probs[i];
                let ratio = log_ratio.exp();
                let a = adv[k];
                pl -= clipped_surrogate(ratio, a, cfg.clip_range);
                let h = dist.entropy();
                ent += h;
                kl += (ratio - 1.0) - log_ratio;
                if (ratio - 1.0).abs() > cfg.clip_range {
                    clipped += 1.0;
                }
                // The unclipped branch carries the gradient whenever it is
                // the smaller one; otherwise the clipped term is constant.
                let c_logp = if ratio * a <= ratio.clamp(1.0 - cfg.clip_range, 1.0 + cfg.clip_range) * a {
                    -a * ratio / b
                } else {
                    0.0
                };
                let mut g = d_logits.row_mut(k);
                dist.accumulate_grad(
                    &buffer.actions[i],
                    c_logp,
                    -cfg.ent_coef / b,
                    g.as_slice_mut().expect("row-major"),
                );
                let err = out.values[k] - buffer.returns[i];
                vl += err * err;
                d_values[k] = cfg.vf_coef * 2.0 * err / b;
            }
            grad.zero();
            model.backward(&trace, &d_logits, &d_values, &mut grad);
            let norm = grad.clip_norm(cfg.max_grad_norm);
            opt.step(model, &grad);

            stats.policy_loss += pl / b;
            stats.value_loss += vl / b;
            stats.entropy += ent / b;
            stats.approx_kl += kl / b;
            stats.clip_fraction += clipped / b;
            stats.grad_norm += norm;
            batches += 1;
        }
    }
    let k = batches as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.approx_kl /= k;
    stats.clip_fraction /= k;
    stats.grad_norm /= k;
    stats.explained_variance = explained_variance(&buffer.values, &buffer.returns);
    Ok(stats)
}
