//! The placement MDP: episode lifecycle, observations, multi-discrete action
//! decoding, action masking and the step/reward semantics.
//!
//! Actions are `3N` zero-based indices: `N` split choices, then `N` ES
//! orders for the vDUs, then `N` RC orders for the vCUs.
//!
//! A connectivity-infeasible action does not advance the slot; the same
//! demands are retried and the invalid streak grows. Five consecutive
//! invalid actions end the episode with reward `-1`. Connected actions
//! advance the slot even when they violate capacity, latency or bandwidth
//! constraints, which are priced into the reward instead.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{build_graph_obs, GraphObs};
use crate::error::{Error, Result};
use crate::evaluator::{self, Allocation, CostBreakdown, FeasibilityReport, NetworkLoad, Placement};
use crate::splitmodel::{CostParams, SplitCatalog, SplitId};
use crate::substrate::SubstrateGraph;
use crate::traffic::{advance_sessions, initial_requests, Request, SessionConfig};

pub const MAX_INVALID_STREAK: usize = 5;

/// Divisors applied to raw quantities before they reach an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsNormalization {
    pub load_mbps: f64,
    pub latency_ms: f64,
    pub delay_ms: f64,
    pub capacity_cc: f64,
    pub bandwidth_gbps: f64,
}

impl Default for ObsNormalization {
    fn default() -> Self {
        Self {
            load_mbps: 300.0,
            latency_ms: 200.0,
            delay_ms: 3.6,
            capacity_cc: 100.0,
            bandwidth_gbps: 160.0,
        }
    }
}

impl ObsNormalization {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.load_mbps,
            self.latency_ms,
            self.delay_ms,
            self.capacity_cc,
            self.bandwidth_gbps,
        ];
        if all.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Config("observation normalizers must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvConfig {
    pub session: SessionConfig,
    pub catalog: SplitCatalog,
    pub costs: CostParams,
    pub normalization: ObsNormalization,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.session.validate()?;
        self.catalog.validate()?;
        self.costs.validate()?;
        self.normalization.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub n_rh: usize,
    pub n_es: usize,
    pub n_rc: usize,
}

impl ActionSpace {
    pub fn for_graph(graph: &SubstrateGraph) -> Self {
        Self {
            n_rh: graph.n_rh(),
            n_es: graph.n_es(),
            n_rc: graph.n_rc(),
        }
    }

    /// Number of discrete action dimensions, `3N`.
    pub fn len(&self) -> usize {
        3 * self.n_rh
    }

    pub fn is_empty(&self) -> bool {
        self.n_rh == 0
    }

    pub fn head_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![SplitId::ALL.len(); self.n_rh];
        sizes.extend(std::iter::repeat_n(self.n_es, self.n_rh));
        sizes.extend(std::iter::repeat_n(self.n_rc, self.n_rh));
        sizes
    }

    /// Total number of logits across all heads.
    pub fn num_logits(&self) -> usize {
        self.n_rh * (SplitId::ALL.len() + self.n_es + self.n_rc)
    }

    pub fn validate_action(&self, action: &[usize]) -> Result<()> {
        if action.len() != self.len() {
            return Err(Error::Usage(format!(
                "action has {} entries, expected {}",
                action.len(),
                self.len()
            )));
        }
        for (i, (&a, size)) in action.iter().zip(self.head_sizes()).enumerate() {
            if a >= size {
                return Err(Error::Usage(format!(
                    "action entry {i} = {a} outside head range 0..{size}"
                )));
            }
        }
        Ok(())
    }

    pub fn decode(&self, action: &[usize]) -> Result<Allocation> {
        self.validate_action(action)?;
        let n = self.n_rh;
        Ok(Allocation::new(
            (0..n)
                .map(|i| Placement {
                    split: SplitId::from_index(action[i]).expect("validated"),
                    du: action[n + i],
                    cu: action[2 * n + i],
                })
                .collect(),
        ))
    }

    pub fn encode(&self, alloc: &Allocation) -> Vec<usize> {
        let mut action: Vec<usize> = alloc.placements.iter().map(|p| p.split.index()).collect();
        action.extend(alloc.placements.iter().map(|p| p.du));
        action.extend(alloc.placements.iter().map(|p| p.cu));
        action
    }
}

/// Per-head allowed values, stored flat in head order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionMask {
    head_sizes: Vec<usize>,
    offsets: Vec<usize>,
    allowed: Vec<bool>,
}

impl ActionMask {
    pub fn from_heads(heads: Vec<Vec<bool>>) -> Result<Self> {
        let head_sizes: Vec<usize> = heads.iter().map(Vec::len).collect();
        let mut offsets = Vec::with_capacity(heads.len());
        let mut acc = 0;
        for s in &head_sizes {
            offsets.push(acc);
            acc += s;
        }
        if let Some(i) = heads.iter().position(|h| !h.iter().any(|&b| b)) {
            return Err(Error::Config(format!("action head {i} has no allowed value")));
        }
        Ok(Self {
            head_sizes,
            offsets,
            allowed: heads.into_iter().flatten().collect(),
        })
    }

    pub fn all_allowed(space: &ActionSpace) -> Self {
        let heads = space.head_sizes().into_iter().map(|s| vec![true; s]).collect();
        Self::from_heads(heads).expect("every head is non-empty")
    }

    pub fn num_heads(&self) -> usize {
        self.head_sizes.len()
    }

    pub fn head_sizes(&self) -> &[usize] {
        &self.head_sizes
    }

    pub fn head(&self, i: usize) -> &[bool] {
        &self.allowed[self.offsets[i]..self.offsets[i] + self.head_sizes[i]]
    }

    pub fn flat(&self) -> &[bool] {
        &self.allowed
    }

    pub fn allows(&self, action: &[usize]) -> bool {
        action.len() == self.num_heads()
            && action
                .iter()
                .enumerate()
                .all(|(i, &a)| self.head(i).get(a).copied().unwrap_or(false))
    }
}

/// Static mask for a topology: a DU host must be linked to the RH, a CU
/// host must be reachable through one of the RH's ES neighbors, and S4 is
/// only offered to RHs with a direct RC link. A masked action can still be
/// infeasible when the chosen ES and RC are not linked to each other.
pub fn compute_mask(graph: &SubstrateGraph, catalog: &SplitCatalog) -> Result<ActionMask> {
    let n = graph.n_rh();
    let mut heads = Vec::with_capacity(3 * n);
    for r in 0..n {
        let direct = graph.has_direct_rc(r);
        heads.push(
            SplitId::ALL
                .iter()
                .map(|&s| direct || !catalog.spec(s).requires_direct_rh_rc)
                .collect(),
        );
    }
    for r in 0..n {
        heads.push((0..graph.n_es()).map(|d| graph.rd_link(r, d).is_some()).collect());
    }
    for r in 0..n {
        heads.push(
            (0..graph.n_rc())
                .map(|c| (0..graph.n_es()).any(|d| graph.rd_link(r, d).is_some() && graph.dc_link(d, c).is_some()))
                .collect(),
        );
    }
    ActionMask::from_heads(heads)
}

#[derive(Debug, Clone)]
pub struct EnvState {
    pub graph: Arc<SubstrateGraph>,
    pub requests: Vec<Request>,
    pub prev_alloc: Option<Allocation>,
    /// Loads of the most recent accepted allocation; zero after reset.
    pub loads: NetworkLoad,
    /// Slots completed in this episode.
    pub slot: usize,
    pub invalid_streak: usize,
    pub done: bool,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub flat: Vec<f64>,
    pub graph: GraphObs,
}

#[derive(Debug, Clone)]
pub struct StepInfo {
    pub report: FeasibilityReport,
    pub cost: Option<CostBreakdown>,
    pub mask: Arc<ActionMask>,
    pub slot: usize,
    pub invalid_streak: usize,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Width of the flat observation:
/// `2N + |D| + |C| + 3 (N|D| + |D||C| + N|C|)`.
pub fn flat_observation_len(n_rh: usize, n_es: usize, n_rc: usize) -> usize {
    2 * n_rh + n_es + n_rc + 3 * (n_rh * n_es + n_es * n_rc + n_rh * n_rc)
}

#[derive(Debug, Clone)]
pub struct Environment {
    config: Arc<EnvConfig>,
    space: ActionSpace,
    mask: Arc<ActionMask>,
    state: EnvState,
}

impl Environment {
    pub fn new(graph: Arc<SubstrateGraph>, config: Arc<EnvConfig>, seed: u64) -> Result<Self> {
        config.validate()?;
        graph.check_feasible()?;
        let mask = Arc::new(compute_mask(&graph, &config.catalog)?);
        let space = ActionSpace::for_graph(&graph);
        let state = Self::fresh_state(graph, &config, seed);
        Ok(Self {
            config,
            space,
            mask,
            state,
        })
    }

    fn fresh_state(graph: Arc<SubstrateGraph>, config: &EnvConfig, seed: u64) -> EnvState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let requests = initial_requests(graph.n_rh(), &config.session, &mut rng);
        let loads = NetworkLoad::zero(&graph);
        EnvState {
            graph,
            requests,
            prev_alloc: None,
            loads,
            slot: 0,
            invalid_streak: 0,
            done: false,
            rng,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn graph(&self) -> &Arc<SubstrateGraph> {
        &self.state.graph
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn mask(&self) -> &Arc<ActionMask> {
        &self.mask
    }

    pub fn observation_len(&self) -> usize {
        flat_observation_len(self.space.n_rh, self.space.n_es, self.space.n_rc)
    }

    pub fn reset(&mut self, seed: u64) -> StepResult {
        self.state = Self::fresh_state(self.state.graph.clone(), &self.config, seed);
        StepResult {
            observation: self.observe(),
            reward: 0.0,
            terminated: false,
            truncated: false,
            info: StepInfo {
                report: FeasibilityReport {
                    n_fail: 0,
                    rh_connected: vec![true; self.space.n_rh],
                    sla: None,
                },
                cost: None,
                mask: self.mask.clone(),
                slot: 0,
                invalid_streak: 0,
            },
        }
    }

    pub fn step(&mut self, action: &[usize]) -> Result<StepResult> {
        if self.state.done {
            return Err(Error::Usage("episode has finished; call reset".into()));
        }
        let alloc = self.space.decode(action)?;
        let st = &mut self.state;
        let eval = evaluator::evaluate(
            st.prev_alloc.as_ref(),
            &alloc,
            &st.requests,
            &st.graph,
            &self.config.catalog,
            &self.config.costs,
        )?;
        let n = self.space.n_rh;
        let (reward, terminated, truncated) = if eval.report.n_fail > 0 {
            st.invalid_streak += 1;
            let early = st.invalid_streak >= MAX_INVALID_STREAK;
            st.done = early;
            (evaluator::reward(eval.report.n_fail, 0.0, early, n), early, false)
        } else {
            let cost = eval.cost.expect("connected allocations are priced");
            st.prev_alloc = Some(alloc);
            st.loads = eval.loads.clone().expect("connected allocations have loads");
            st.invalid_streak = 0;
            st.requests = advance_sessions(&st.requests, &self.config.session, &mut st.rng);
            st.slot += 1;
            let truncated = st.slot >= self.config.session.episode_length;
            st.done = truncated;
            (evaluator::reward(0, cost.total, false, n), false, truncated)
        };
        Ok(StepResult {
            observation: self.observe(),
            reward,
            terminated,
            truncated,
            info: StepInfo {
                report: eval.report,
                cost: eval.cost,
                mask: self.mask.clone(),
                slot: self.state.slot,
                invalid_streak: self.state.invalid_streak,
            },
        })
    }

    pub fn observe(&self) -> Observation {
        Observation {
            flat: self.flat_observation(),
            graph: build_graph_obs(&self.state, &self.config.normalization),
        }
    }

    /// Layout: per RH `(load, latency requirement)`; per ES then per RC the
    /// remaining capacity; then for every RH-ES, ES-RC and RH-RC pair (row
    /// major) `(present, remaining bandwidth, delay)`, zeros when absent.
    pub fn flat_observation(&self) -> Vec<f64> {
        let st = &self.state;
        let g = &st.graph;
        let norm = &self.config.normalization;
        let mut obs = Vec::with_capacity(self.observation_len());
        for req in &st.requests {
            obs.push(req.load_mbps / norm.load_mbps);
            obs.push(req.latency_ms / norm.latency_ms);
        }
        for d in 0..g.n_es() {
            obs.push((g.nodes()[g.es_id(d)].capacity - st.loads.es[d]) / norm.capacity_cc);
        }
        for c in 0..g.n_rc() {
            obs.push((g.nodes()[g.rc_id(c)].capacity - st.loads.rc[c]) / norm.capacity_cc);
        }
        let mut pair = |a: usize, b: usize| match g.link_index(a, b) {
            Some(i) => {
                let l = &g.links()[i];
                obs.extend([
                    1.0,
                    (l.bandwidth - st.loads.link[i]) / norm.bandwidth_gbps,
                    l.delay / norm.delay_ms,
                ]);
            }
            None => obs.extend([0.0; 3]),
        };
        for r in 0..g.n_rh() {
            for d in 0..g.n_es() {
                pair(r, g.es_id(d));
            }
        }
        for d in 0..g.n_es() {
            for c in 0..g.n_rc() {
                pair(g.es_id(d), g.rc_id(c));
            }
        }
        for r in 0..g.n_rh() {
            for c in 0..g.n_rc() {
                pair(r, g.rc_id(c));
            }
        }
        obs
    }
}
