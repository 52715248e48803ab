//! Graph view of the environment state and the edge-conditioned graph
//! encoder used by the GPPO front-end.
//!
//! Each layer computes `x'_i = MLP(x_i + sum_j relu(x_j + e_ji))` over the
//! incoming directed edges of `i`. Node and edge rows are projected to the
//! embedding width first; the edge projection is shared by every layer.
//! Node embeddings of each graph are mean-pooled into one vector.

use ndarray::{s, Array1, Array2, ArrayView1, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{EnvState, ObsNormalization};
use crate::error::{Error, Result};
use crate::nn::{relu_inplace, Linear, Mlp, MlpTrace, Parameters};
use crate::substrate::NodeKind;

pub const NODE_FEATURES: usize = 4;
pub const EDGE_FEATURES: usize = 2;

/// Node rows `[remaining capacity, order, load, latency requirement]` and
/// directed edge rows `[remaining bandwidth, delay]`, all normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphObs {
    pub node_features: Array2<f64>,
    /// `(source, target)` pairs; every undirected link appears twice.
    pub edges: Vec<(usize, usize)>,
    pub edge_features: Array2<f64>,
}

impl GraphObs {
    pub fn num_nodes(&self) -> usize {
        self.node_features.nrows()
    }
}

pub fn build_graph_obs(state: &EnvState, norm: &ObsNormalization) -> GraphObs {
    let g = &state.graph;
    let mut nf = Array2::zeros((g.nodes().len(), NODE_FEATURES));
    for node in g.nodes() {
        let mut row = nf.row_mut(node.id);
        let count = match node.kind {
            NodeKind::Rh => g.n_rh(),
            NodeKind::Es => g.n_es(),
            NodeKind::Rc => g.n_rc(),
        };
        row[1] = node.order as f64 / count as f64;
        match node.kind {
            NodeKind::Rh => {
                let req = &state.requests[node.order];
                row[2] = req.load_mbps / norm.load_mbps;
                row[3] = req.latency_ms / norm.latency_ms;
            }
            NodeKind::Es => row[0] = (node.capacity - state.loads.es[node.order]) / norm.capacity_cc,
            NodeKind::Rc => row[0] = (node.capacity - state.loads.rc[node.order]) / norm.capacity_cc,
        }
    }
    let mut edges = Vec::with_capacity(2 * g.links().len());
    let mut ef = Array2::zeros((2 * g.links().len(), EDGE_FEATURES));
    for (i, l) in g.links().iter().enumerate() {
        let b = (l.bandwidth - state.loads.link[i]) / norm.bandwidth_gbps;
        let d = l.delay / norm.delay_ms;
        edges.push((l.a, l.b));
        edges.push((l.b, l.a));
        for k in [2 * i, 2 * i + 1] {
            ef[[k, 0]] = b;
            ef[[k, 1]] = d;
        }
    }
    GraphObs {
        node_features: nf,
        edges,
        edge_features: ef,
    }
}

/// One message-passing step with an arbitrary node transform.
pub fn gine_layer<F>(x: &Array2<f64>, edges: &[(usize, usize)], e: &Array2<f64>, transform: F) -> Result<Array2<f64>>
where
    F: FnOnce(&Array2<f64>) -> Array2<f64>,
{
    if e.ncols() != x.ncols() {
        return Err(Error::Usage(format!(
            "edge embedding width {} differs from node width {}",
            e.ncols(),
            x.ncols()
        )));
    }
    if e.nrows() != edges.len() {
        return Err(Error::Usage(format!(
            "{} edge rows for {} edges",
            e.nrows(),
            edges.len()
        )));
    }
    if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= x.nrows() || b >= x.nrows()) {
        return Err(Error::Usage(format!("edge ({a}, {b}) references a missing node")));
    }
    Ok(transform(&aggregate(x, edges, e)))
}

fn aggregate(x: &Array2<f64>, edges: &[(usize, usize)], e: &Array2<f64>) -> Array2<f64> {
    let mut agg = x.clone();
    for (k, &(src, dst)) in edges.iter().enumerate() {
        let msg = x.row(src);
        let ek = e.row(k);
        let mut out = agg.row_mut(dst);
        Zip::from(&mut out).and(&msg).and(&ek).for_each(|o, &a, &b| *o += (a + b).max(0.0));
    }
    agg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub n_layers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            hidden: 1024,
            n_layers: 2,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden == 0 || self.n_layers == 0 {
            return Err(Error::Config("encoder widths and depth must be positive".into()));
        }
        Ok(())
    }
}

/// Several graphs merged into one disjoint union.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    pub node_features: Array2<f64>,
    pub edges: Vec<(usize, usize)>,
    pub edge_features: Array2<f64>,
    pub node_graph: Vec<usize>,
    pub graph_sizes: Vec<usize>,
}

impl GraphBatch {
    pub fn new<'a, I>(graphs: I) -> Self
    where
        I: IntoIterator<Item = &'a GraphObs>,
    {
        let graphs: Vec<&GraphObs> = graphs.into_iter().collect();
        let n: usize = graphs.iter().map(|g| g.num_nodes()).sum();
        let m: usize = graphs.iter().map(|g| g.edges.len()).sum();
        let mut nf = Array2::zeros((n, NODE_FEATURES));
        let mut ef = Array2::zeros((m, EDGE_FEATURES));
        let mut edges = Vec::with_capacity(m);
        let mut node_graph = Vec::with_capacity(n);
        let mut graph_sizes = Vec::with_capacity(graphs.len());
        let (mut n0, mut m0) = (0, 0);
        for (gi, g) in graphs.iter().enumerate() {
            let (gn, gm) = (g.num_nodes(), g.edges.len());
            nf.slice_mut(s![n0..n0 + gn, ..]).assign(&g.node_features);
            ef.slice_mut(s![m0..m0 + gm, ..]).assign(&g.edge_features);
            edges.extend(g.edges.iter().map(|&(a, b)| (a + n0, b + n0)));
            node_graph.extend(std::iter::repeat_n(gi, gn));
            graph_sizes.push(gn);
            n0 += gn;
            m0 += gm;
        }
        Self {
            node_features: nf,
            edges,
            edge_features: ef,
            node_graph,
            graph_sizes,
        }
    }

    pub fn num_graphs(&self) -> usize {
        self.graph_sizes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEncoder {
    pub node_proj: Linear,
    pub edge_proj: Linear,
    pub layers: Vec<Mlp>,
}

#[derive(Debug, Clone)]
struct LayerTrace {
    input: Array2<f64>,
    mlp: MlpTrace,
    /// Pre-activation output; only consulted for inner layers.
    output: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct EncoderTrace {
    edge_embed: Array2<f64>,
    layers: Vec<LayerTrace>,
}

impl GraphEncoder {
    pub fn new<R: Rng + ?Sized>(config: &EncoderConfig, rng: &mut R) -> Self {
        let e = config.embed_dim;
        Self {
            node_proj: Linear::xavier(NODE_FEATURES, e, rng),
            edge_proj: Linear::xavier(EDGE_FEATURES, e, rng),
            layers: (0..config.n_layers)
                .map(|_| Mlp::new(&[e, config.hidden, e], rng))
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            node_proj: Linear::zeros(self.node_proj.in_dim(), self.node_proj.out_dim()),
            edge_proj: Linear::zeros(self.edge_proj.in_dim(), self.edge_proj.out_dim()),
            layers: self.layers.iter().map(Mlp::zeros_like).collect(),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.node_proj.out_dim()
    }

    /// Embedding of a single graph.
    pub fn encode(&self, obs: &GraphObs) -> Array1<f64> {
        let batch = GraphBatch::new([obs]);
        self.forward(&batch).0.row(0).to_owned()
    }

    /// Pooled embeddings, one row per graph.
    pub fn forward(&self, batch: &GraphBatch) -> (Array2<f64>, EncoderTrace) {
        let edge_embed = self.edge_proj.forward(&batch.edge_features);
        let mut x = self.node_proj.forward(&batch.node_features);
        let mut layers = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (k, mlp) in self.layers.iter().enumerate() {
            let agg = aggregate(&x, &batch.edges, &edge_embed);
            let (out, mlp_trace) = mlp.forward_trace(&agg);
            let input = std::mem::replace(&mut x, out.clone());
            if k < last {
                relu_inplace(&mut x);
            }
            layers.push(LayerTrace {
                input,
                mlp: mlp_trace,
                output: out,
            });
        }
        let pooled = mean_pool(&x, batch);
        (pooled, EncoderTrace { edge_embed, layers })
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to the raw node features.
    pub fn backward(
        &self,
        batch: &GraphBatch,
        trace: &EncoderTrace,
        grad_pooled: &Array2<f64>,
        grad: &mut GraphEncoder,
    ) -> Array2<f64> {
        let n = batch.node_features.nrows();
        let mut dx = Array2::zeros((n, self.embed_dim()));
        for (i, mut row) in dx.axis_iter_mut(Axis(0)).enumerate() {
            let gi = batch.node_graph[i];
            row.assign(&(&grad_pooled.row(gi) / batch.graph_sizes[gi] as f64));
        }
        let mut de = Array2::zeros(trace.edge_embed.raw_dim());
        let last = self.layers.len() - 1;
        for k in (0..self.layers.len()).rev() {
            let lt = &trace.layers[k];
            if k < last {
                dx.zip_mut_with(&lt.output, |g, &o| {
                    if o <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            let dagg = self.layers[k].backward(&lt.mlp, &dx, &mut grad.layers[k]);
            let mut dx_in = dagg.clone();
            for (m, &(src, dst)) in batch.edges.iter().enumerate() {
                let xs = lt.input.row(src);
                let em = trace.edge_embed.row(m);
                let gd: ArrayView1<f64> = dagg.row(dst);
                for j in 0..xs.len() {
                    if xs[j] + em[j] > 0.0 {
                        dx_in[[src, j]] += gd[j];
                        de[[m, j]] += gd[j];
                    }
                }
            }
            dx = dx_in;
        }
        self.edge_proj.backward(&batch.edge_features, &de, &mut grad.edge_proj);
        self.node_proj.backward(&batch.node_features, &dx, &mut grad.node_proj)
    }
}

fn mean_pool(x: &Array2<f64>, batch: &GraphBatch) -> Array2<f64> {
    let mut pooled = Array2::zeros((batch.num_graphs(), x.ncols()));
    for (i, row) in x.axis_iter(Axis(0)).enumerate() {
        let mut p = pooled.row_mut(batch.node_graph[i]);
        p += &row;
    }
    for (gi, mut p) in pooled.axis_iter_mut(Axis(0)).enumerate() {
        p /= batch.graph_sizes[gi].max(1) as f64;
    }
    pooled
}

impl Parameters for GraphEncoder {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.node_proj.tensors();
        t.extend(self.edge_proj.tensors());
        t.extend(self.layers.iter().flat_map(|l| l.tensors()));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.node_proj.tensors_mut();
        t.extend(self.edge_proj.tensors_mut());
        t.extend(self.layers.iter_mut().flat_map(|l| l.tensors_mut()));
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> EncoderConfig {
        EncoderConfig {
            embed_dim: 6,
            hidden: 10,
            n_layers: 2,
        }
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, m: usize) -> GraphObs {
        let mut edges = Vec::new();
        while edges.len() < 2 * m {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                edges.push((a, b));
                edges.push((b, a));
            }
        }
        let mut ef = Array2::from_shape_simple_fn((m, 2), || rng.random_range(-1.0..1.0));
        ef = Array2::from_shape_fn((2 * m, 2), |(k, j)| ef[[k / 2, j]]);
        GraphObs {
            node_features: Array2::from_shape_simple_fn((n, 4), || rng.random_range(-1.0..1.0)),
            edges,
            edge_features: ef,
        }
    }

    #[test]
    fn two_node_identity_example() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let e = Array2::zeros((2, 2));
        let out = gine_layer(&x, &[(0, 1), (1, 0)], &e, |a| a.clone()).unwrap();
        assert_eq!(out, array![[1.0, 1.0], [1.0, 1.0]]);
    }

    #[test]
    fn isolated_node_and_negative_messages() {
        let x = array![[1.0, -2.0], [0.5, 0.5], [3.0, 3.0]];
        let e = array![[-1.0, 1.0]];
        let out = gine_layer(&x, &[(0, 1)], &e, |a| a.clone()).unwrap();
        assert_eq!(out.row(0), x.row(0));
        assert_eq!(out.row(1), array![0.5, 0.5].view());
        assert_eq!(out.row(2), x.row(2));
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let x = Array2::zeros((2, 3));
        let e = Array2::zeros((1, 2));
        assert!(matches!(gine_layer(&x, &[(0, 1)], &e, |a| a.clone()), Err(Error::Usage(_))));
    }

    #[test]
    fn output_width_is_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = GraphEncoder::new(&small_config(), &mut rng);
        for n in [2, 5, 13] {
            let g = random_graph(&mut rng, n, n);
            assert_eq!(enc.encode(&g).len(), 6);
        }
    }

    #[test]
    fn duplicated_graph_pools_to_the_same_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = GraphEncoder::new(&small_config(), &mut rng);
        let g = random_graph(&mut rng, 5, 6);
        let merged = GraphBatch::new([&g, &g]);
        let twin = GraphObs {
            node_features: merged.node_features.clone(),
            edges: merged.edges.clone(),
            edge_features: merged.edge_features.clone(),
        };
        let a = enc.encode(&g);
        let b = enc.encode(&twin);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_forward_matches_single_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let enc = GraphEncoder::new(&small_config(), &mut rng);
        let gs: Vec<GraphObs> = (0..3).map(|i| random_graph(&mut rng, 3 + i, 4)).collect();
        let (pooled, _) = enc.forward(&GraphBatch::new(&gs));
        for (i, g) in gs.iter().enumerate() {
            let single = enc.encode(g);
            for j in 0..6 {
                assert!((pooled[[i, j]] - single[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = GraphEncoder::new(&small_config(), &mut rng);
        let gs = [random_graph(&mut rng, 5, 5), random_graph(&mut rng, 4, 3)];
        let batch = GraphBatch::new(&gs);
        let w = Array2::from_shape_fn((2, 6), |(i, j)| 0.3 + 0.2 * i as f64 - 0.1 * j as f64);
        let loss = |e: &GraphEncoder, b: &GraphBatch| (&e.forward(b).0 * &w).sum();

        let (_, trace) = enc.forward(&batch);
        let mut grad = enc.zeros_like();
        let dnodes = enc.backward(&batch, &trace, &w, &mut grad);

        let h = 1e-6;
        let mut probe = enc.clone();
        for (t, gt) in grad.tensors().iter().enumerate() {
            for i in (0..gt.len()).step_by(7) {
                let orig = probe.tensors()[t][i];
                probe.tensors_mut()[t][i] = orig + h;
                let up = loss(&probe, &batch);
                probe.tensors_mut()[t][i] = orig - h;
                let down = loss(&probe, &batch);
                probe.tensors_mut()[t][i] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!((fd - gt[i]).abs() < 1e-5 * (1.0 + fd.abs()), "tensor {t}[{i}]: {fd} vs {}", gt[i]);
            }
        }
        for i in 0..batch.node_features.nrows() {
            for j in 0..4 {
                let mut b = batch.clone();
                b.node_features[[i, j]] += h;
                let up = loss(&enc, &b);
                b.node_features[[i, j]] -= 2.0 * h;
                let down = loss(&enc, &b);
                let fd = (up - down) / (2.0 * h);
                assert!((fd - dnodes[[i, j]]).abs() < 1e-5 * (1.0 + fd.abs()));
            }
        }
    }
}
