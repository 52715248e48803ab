//! Factorized categorical distribution over independent action heads, with
//! optional per-head masks.
//!
//! Masked entries get probability exactly zero and contribute nothing to
//! log-probabilities, entropies or their gradients.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MultiCategorical {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    probs: Vec<f64>,
    /// `-inf` on masked entries.
    log_probs: Vec<f64>,
}

impl MultiCategorical {
    /// `logits` and `mask` are laid out head after head.
    pub fn new(logits: &[f64], sizes: &[usize], mask: Option<&[bool]>) -> Result<Self> {
        let total: usize = sizes.iter().sum();
        if logits.len() != total {
            return Err(Error::Usage(format!("{} logits for {total} head entries", logits.len())));
        }
        if let Some(m) = mask {
            if m.len() != total {
                return Err(Error::Usage(format!("mask of {} entries for {total} logits", m.len())));
            }
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut probs = vec![0.0; total];
        let mut log_probs = vec![f64::NEG_INFINITY; total];
        let mut off = 0;
        for (h, &size) in sizes.iter().enumerate() {
            offsets.push(off);
            let allowed = |k: usize| mask.is_none_or(|m| m[off + k]);
            let max = (0..size)
                .filter(|&k| allowed(k))
                .map(|k| logits[off + k])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::Config(format!("action head {h} has no allowed value")));
            }
            let norm: f64 = (0..size)
                .filter(|&k| allowed(k))
                .map(|k| (logits[off + k] - max).exp())
                .sum();
            let log_norm = max + norm.ln();
            for k in (0..size).filter(|&k| allowed(k)) {
                log_probs[off + k] = logits[off + k] - log_norm;
                probs[off + k] = log_probs[off + k].exp();
            }
            off += size;
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            offsets,
            probs,
            log_probs,
        })
    }

    pub fn num_heads(&self) -> usize {
        self.sizes.len()
    }

    pub fn head_probs(&self, h: usize) -> &[f64] {
        &self.probs[self.offsets[h]..self.offsets[h] + self.sizes[h]]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        (0..self.num_heads())
            .map(|h| {
                let p = self.head_probs(h);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut last_allowed = 0;
                for (k, &pk) in p.iter().enumerate() {
                    if pk > 0.0 {
                        acc += pk;
                        last_allowed = k;
                        if u < acc {
                            return k;
                        }
                    }
                }
                last_allowed
            })
            .collect()
    }

    /// Per-head argmax; ties go to the lowest index.
    pub fn mode(&self) -> Vec<usize> {
        (0..self.num_heads())
            .map(|h| {
                let p = self.head_probs(h);
                let mut best = 0;
                for k in 1..p.len() {
                    if p[k] > p[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub fn log_prob(&self, action: &[usize]) -> f64 {
        action
            .iter()
            .enumerate()
            .map(|(h, &a)| self.log_probs[self.offsets[h] + a])
            .sum()
    }

    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .zip(&self.log_probs)
            .filter(|(&p, _)| p > 0.0)
            .map(|(&p, &lp)| -p * lp)
            .sum()
    }

    /// Adds `d(c_logp * log_prob(action) + c_ent * entropy) / d logits`
    /// into `out`.
    pub fn accumulate_grad(&self, action: &[usize], c_logp: f64, c_ent: f64, out: &mut [f64]) {
        for h in 0..self.num_heads() {
            let off = self.offsets[h];
            let range = off..off + self.sizes[h];
            let ent: f64 = range
                .clone()
                .filter(|&i| self.probs[i] > 0.0)
                .map(|i| -self.probs[i] * self.log_probs[i])
                .sum();
            for i in range {
                let p = self.probs[i];
                if p == 0.0 {
                    continue;
                }
                let onehot = if i == off + action[h] { 1.0 } else { 0.0 };
                out[i] += c_logp * (onehot - p) - c_ent * p * (self.log_probs[i] + ent);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_renormalize_over_allowed() {
        let d = MultiCategorical::new(&[0.0; 4], &[4], Some(&[true, false, true, false])).unwrap();
        assert_eq!(d.head_probs(0), &[0.5, 0.0, 0.5, 0.0]);
        assert!((d.entropy() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_allowed_entry_is_deterministic() {
        let d = MultiCategorical::new(&[3.0, -1.0, 0.2], &[3], Some(&[false, true, false])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(d.sample(&mut rng), vec![1]);
        }
        assert_eq!(d.entropy(), 0.0);
        assert_eq!(d.log_prob(&[1]), 0.0);
    }

    #[test]
    fn all_false_head_is_a_config_error() {
        let r = MultiCategorical::new(&[0.0; 5], &[2, 3], Some(&[true, false, false, false, false]));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn gradient_matches_finite_differences_and_is_zero_when_masked() {
        let logits = [0.3, -0.7, 1.1, 0.2, 0.5, -0.4, 0.9];
        let sizes = [4, 3];
        let mask = [true, false, true, true, true, true, false];
        let action = [2, 1];
        let f = |z: &[f64]| {
            let d = MultiCategorical::new(z, &sizes, Some(&mask)).unwrap();
            0.7 * d.log_prob(&action) + 0.3 * d.entropy()
        };
        let d = MultiCategorical::new(&logits, &sizes, Some(&mask)).unwrap();
        let mut g = vec![0.0; 7];
        d.accumulate_grad(&action, 0.7, 0.3, &mut g);
        let h = 1e-6;
        for i in 0..7 {
            let mut up = logits;
            up[i] += h;
            let mut dn = logits;
            dn[i] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "{i}: {fd} vs {}", g[i]);
        }
        assert_eq!(g[1], 0.0);
        assert_eq!(g[6], 0.0);
    }

    #[test]
    fn mode_respects_mask() {
        let d = MultiCategorical::new(&[5.0, 1.0, 2.0], &[3], Some(&[false, true, true])).unwrap();
        assert_eq!(d.mode(), vec![2]);
    }
}
