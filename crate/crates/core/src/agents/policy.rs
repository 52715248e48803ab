//! Actor-critic networks with a flat or graph front-end.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, EncoderTrace, GraphBatch, GraphEncoder};
use crate::environment::Observation;
use crate::nn::{Mlp, MlpTrace, Parameters};

/// Policy and value networks. With a graph encoder both heads read the
/// pooled embedding and the encoder receives gradients from both losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub encoder: Option<GraphEncoder>,
    pub policy: Mlp,
    pub value: Mlp,
    pub head_sizes: Vec<usize>,
}

pub struct PolicyTrace {
    graph: Option<(GraphBatch, EncoderTrace)>,
    policy: MlpTrace,
    value: MlpTrace,
}

#[derive(Debug, Clone)]
pub struct PolicyOutput {
    /// One row of concatenated head logits per sample.
    pub logits: Array2<f64>,
    pub values: Array1<f64>,
}

impl ActorCritic {
    /// Flat front-end over observations of width `obs_dim`.
    pub fn flat<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], head_sizes: Vec<usize>, rng: &mut R) -> Self {
        Self::with_input(None, obs_dim, hidden, head_sizes, rng)
    }

    pub fn graph<R: Rng + ?Sized>(
        config: &EncoderConfig,
        hidden: &[usize],
        head_sizes: Vec<usize>,
        rng: &mut R,
    ) -> Self {
        let encoder = GraphEncoder::new(config, rng);
        Self::with_input(Some(encoder), config.embed_dim, hidden, head_sizes, rng)
    }

    fn with_input<R: Rng + ?Sized>(
        encoder: Option<GraphEncoder>,
        input: usize,
        hidden: &[usize],
        head_sizes: Vec<usize>,
        rng: &mut R,
    ) -> Self {
        let logits: usize = head_sizes.iter().sum();
        let sizes = |out| {
            let mut v = vec![input];
            v.extend_from_slice(hidden);
            v.push(out);
            v
        };
        let policy = Mlp::new(&sizes(logits), rng);
        let value = Mlp::new(&sizes(1), rng);
        Self {
            encoder,
            policy,
            value,
            head_sizes,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.as_ref().map(GraphEncoder::zeros_like),
            policy: self.policy.zeros_like(),
            value: self.value.zeros_like(),
            head_sizes: self.head_sizes.clone(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.policy.in_dim()
    }

    fn features(&self, obs: &[&Observation]) -> (Array2<f64>, Option<(GraphBatch, EncoderTrace)>) {
        match &self.encoder {
            Some(enc) => {
                let batch = GraphBatch::new(obs.iter().map(|o| &o.graph));
                let (pooled, trace) = enc.forward(&batch);
                (pooled, Some((batch, trace)))
            }
            None => {
                let width = self.input_dim();
                let mut x = Array2::zeros((obs.len(), width));
                for (mut row, o) in x.axis_iter_mut(Axis(0)).zip(obs) {
                    assert_eq!(o.flat.len(), width, "observation width differs from the network input");
                    row.assign(&ndarray::ArrayView1::from(&o.flat[..]));
                }
                (x, None)
            }
        }
    }

    pub fn forward(&self, obs: &[&Observation]) -> PolicyOutput {
        let (x, _) = self.features(obs);
        PolicyOutput {
            logits: self.policy.forward(&x),
            values: self.value.forward(&x).column(0).to_owned(),
        }
    }

    pub fn values(&self, obs: &[&Observation]) -> Array1<f64> {
        let (x, _) = self.features(obs);
        self.value.forward(&x).column(0).to_owned()
    }

    pub fn forward_trace(&self, obs: &[&Observation]) -> (PolicyOutput, PolicyTrace) {
        let (x, graph) = self.features(obs);
        let (logits, policy) = self.policy.forward_trace(&x);
        let (values, value) = self.value.forward_trace(&x);
        (
            PolicyOutput {
                logits,
                values: values.column(0).to_owned(),
            },
            PolicyTrace { graph, policy, value },
        )
    }

    /// Accumulates parameter gradients of a loss with the given gradients
    /// with respect to logits and values.
    pub fn backward(&self, trace: &PolicyTrace, d_logits: &Array2<f64>, d_values: &Array1<f64>, grad: &mut ActorCritic) {
        let mut dx = self.policy.backward(&trace.policy, d_logits, &mut grad.policy);
        let dv = d_values.clone().insert_axis(Axis(1));
        dx += &self.value.backward(&trace.value, &dv, &mut grad.value);
        if let (Some(enc), Some((batch, etrace)), Some(genc)) = (&self.encoder, &trace.graph, grad.encoder.as_mut()) {
            enc.backward(batch, etrace, &dx, genc);
        }
    }
}

impl Parameters for ActorCritic {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.encoder.as_ref().map(|e| e.tensors()).unwrap_or_default();
        t.extend(self.policy.tensors());
        t.extend(self.value.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.encoder.as_mut().map(|e| e.tensors_mut()).unwrap_or_default();
        t.extend(self.policy.tensors_mut());
        t.extend(self.value.tensors_mut());
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::GraphObs;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs(flat: Vec<f64>) -> Observation {
        let n = flat.len() / 4;
        Observation {
            graph: GraphObs {
                node_features: Array2::from_shape_vec((n, 4), flat.clone()).unwrap(),
                edges: vec![(0, 1), (1, 0)],
                edge_features: array![[0.5, 0.1], [0.5, 0.1]],
            },
            flat,
        }
    }

    fn check_gradients(model: ActorCritic) {
        let batch = [obs(vec![0.2, -0.4, 0.9, 0.1, 0.3, 0.7, -0.2, 0.5]), obs(vec![-0.6, 0.1, 0.4, 0.8, 0.0, -0.3, 0.6, 0.2])];
        let refs: Vec<&Observation> = batch.iter().collect();
        let wl = Array2::from_shape_fn((2, 5), |(i, j)| 0.1 * (i + 2 * j) as f64 - 0.3);
        let wv = array![0.7, -1.2];
        let loss = |m: &ActorCritic| {
            let out = m.forward(&refs);
            (&out.logits * &wl).sum() + (&out.values * &wv).sum()
        };
        let (_, trace) = model.forward_trace(&refs);
        let mut grad = model.zeros_like();
        model.backward(&trace, &wl, &wv, &mut grad);
        let h = 1e-6;
        let mut probe = model.clone();
        for (t, gt) in grad.tensors().iter().enumerate() {
            for i in (0..gt.len()).step_by(5) {
                let orig = probe.tensors()[t][i];
                probe.tensors_mut()[t][i] = orig + h;
                let up = loss(&probe);
                probe.tensors_mut()[t][i] = orig - h;
                let down = loss(&probe);
                probe.tensors_mut()[t][i] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!((fd - gt[i]).abs() < 1e-5 * (1.0 + fd.abs()), "{t}/{i}: {fd} vs {}", gt[i]);
            }
        }
    }

    #[test]
    fn flat_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        check_gradients(ActorCritic::flat(8, &[6, 6], vec![3, 2], &mut rng));
    }

    #[test]
    fn graph_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = EncoderConfig {
            embed_dim: 4,
            hidden: 7,
            n_layers: 2,
        };
        check_gradients(ActorCritic::graph(&cfg, &[6, 6], vec![3, 2], &mut rng));
    }

    #[test]
    fn default_architecture_and_init_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = ActorCritic::flat(30, &[256, 256], vec![4, 2, 1], &mut rng);
        let widths: Vec<(usize, usize)> = m.policy.layers.iter().map(|l| (l.in_dim(), l.out_dim())).collect();
        assert_eq!(widths, vec![(30, 256), (256, 256), (256, 7)]);
        assert_eq!(m.value.out_dim(), 1);
        for l in m.policy.layers.iter().chain(&m.value.layers) {
            let bound = (6.0 / (l.in_dim() + l.out_dim()) as f64).sqrt();
            assert!(l.weight.iter().all(|w| w.abs() <= bound));
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
    }
}
