//! Exhaustive solver for tiny instances.
//!
//! The instance is restated as dense 0/1 link matrices and the placement as
//! one-hot split, vDU and vCU indicators, and every constraint and cost
//! term is evaluated as the corresponding sum of products. This keeps the
//! oracle independent of the evaluator it is used to check.

use serde::{Deserialize, Serialize};

use crate::environment::ActionSpace;
use crate::error::{Error, Result};
use crate::evaluator::{self, Allocation, CostBreakdown};
use crate::splitmodel::{CostParams, SplitCatalog, SplitId, MBPS_PER_GBPS};
use crate::substrate::SubstrateGraph;
use crate::traffic::Request;

pub const DEFAULT_LIMIT: u64 = 10_000_000;

const K: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best_alloc: Option<Allocation>,
    pub best_cost: Option<CostBreakdown>,
    pub feasible_count: u64,
    pub search_size: f64,
}

/// `(4 |D| |C|)^N`.
pub fn search_size(graph: &SubstrateGraph) -> f64 {
    ((K * graph.n_es() * graph.n_rc()) as f64).powi(graph.n_rh() as i32)
}

/// Dense restatement of one slot's problem.
#[derive(Debug, Clone)]
pub struct IlpInstance {
    n: usize,
    d: usize,
    c: usize,
    /// `[link present, delay, bandwidth]` per pair.
    rd: Vec<Vec<[f64; 3]>>,
    dc: Vec<Vec<[f64; 3]>>,
    rc: Vec<Vec<[f64; 3]>>,
    cap_es: Vec<f64>,
    cap_rc: Vec<f64>,
    lambda: Vec<f64>,
    delta: Vec<f64>,
    kappa_du: [f64; K],
    kappa_cu: [f64; K],
    bound: [f64; K],
    direct: [f64; K],
    /// Cross-haul traffic in Gbps per RH and split.
    traffic: Vec<[f64; K]>,
}

/// Outcome of evaluating one placement against the restated instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlpOutcome {
    pub connected: bool,
    pub feasible: bool,
    /// Deployment cost; meaningful when `connected`.
    pub cost: CostBreakdown,
}

impl IlpInstance {
    pub fn new(graph: &SubstrateGraph, requests: &[Request], catalog: &SplitCatalog) -> Result<Self> {
        let (n, d, c) = (graph.n_rh(), graph.n_es(), graph.n_rc());
        if requests.len() != n {
            return Err(Error::Usage(format!("{} requests for {n} radio heads", requests.len())));
        }
        let entry = |a: usize, b: usize| match graph.link(a, b) {
            Some(l) => [1.0, l.delay, l.bandwidth],
            None => [0.0; 3],
        };
        let spec = |k: usize| catalog.spec(SplitId::ALL[k]);
        Ok(Self {
            n,
            d,
            c,
            rd: (0..n).map(|r| (0..d).map(|j| entry(r, graph.es_id(j))).collect()).collect(),
            dc: (0..d).map(|j| (0..c).map(|k| entry(graph.es_id(j), graph.rc_id(k))).collect()).collect(),
            rc: (0..n).map(|r| (0..c).map(|k| entry(r, graph.rc_id(k))).collect()).collect(),
            cap_es: (0..d).map(|j| graph.nodes()[graph.es_id(j)].capacity).collect(),
            cap_rc: (0..c).map(|k| graph.nodes()[graph.rc_id(k)].capacity).collect(),
            lambda: requests.iter().map(|q| q.load_mbps).collect(),
            delta: requests.iter().map(|q| q.latency_ms).collect(),
            kappa_du: std::array::from_fn(|k| spec(k).du_coeff),
            kappa_cu: std::array::from_fn(|k| spec(k).cu_coeff),
            bound: std::array::from_fn(|k| spec(k).crosshaul_delay_bound_ms),
            direct: std::array::from_fn(|k| f64::from(u8::from(spec(k).requires_direct_rh_rc))),
            traffic: requests
                .iter()
                .map(|q| std::array::from_fn(|k| spec(k).crosshaul_load.eval_gbps(q.load_mbps / MBPS_PER_GBPS)))
                .collect(),
        })
    }

    fn one_hot(len: usize, at: usize) -> Vec<f64> {
        (0..len).map(|i| f64::from(u8::from(i == at))).collect()
    }

    pub fn evaluate(&self, prev: Option<&Allocation>, alloc: &Allocation, params: &CostParams) -> IlpOutcome {
        let (n, nd, nc) = (self.n, self.d, self.c);
        let s: Vec<Vec<f64>> = alloc.placements.iter().map(|p| Self::one_hot(K, p.split.index())).collect();
        let x: Vec<Vec<f64>> = alloc.placements.iter().map(|p| Self::one_hot(nd, p.du)).collect();
        let y: Vec<Vec<f64>> = alloc.placements.iter().map(|p| Self::one_hot(nc, p.cu)).collect();
        let dir = |r: usize| (0..K).map(|k| s[r][k] * self.direct[k]).sum::<f64>();

        // Path existence.
        let mut connected = true;
        for r in 0..n {
            let via_es: f64 = (0..nd)
                .map(|j| x[r][j] * self.rd[r][j][0] * (0..nc).map(|k| y[r][k] * self.dc[j][k][0]).sum::<f64>())
                .sum();
            let via_direct: f64 = (0..nc).map(|k| y[r][k] * self.rc[r][k][0]).sum();
            let ok = (1.0 - dir(r)) * via_es + dir(r) * via_direct;
            connected &= ok == 1.0;
        }

        // Compute capacity.
        let mut feasible = connected;
        for j in 0..nd {
            let used: f64 = (0..n)
                .map(|r| (0..K).map(|k| s[r][k] * (1.0 - self.direct[k]) * self.kappa_du[k]).sum::<f64>() * x[r][j] * self.lambda[r])
                .sum();
            feasible &= used <= self.cap_es[j];
        }
        for k2 in 0..nc {
            let used: f64 = (0..n)
                .map(|r| (0..K).map(|k| s[r][k] * self.kappa_cu[k]).sum::<f64>() * y[r][k2] * self.lambda[r])
                .sum();
            feasible &= used <= self.cap_rc[k2];
        }

        // Latency, per RH.
        for r in 0..n {
            let rd_delay: f64 = (0..nd).map(|j| x[r][j] * self.rd[r][j][1]).sum();
            let dc_delay: f64 = (0..nd)
                .map(|j| x[r][j] * (0..nc).map(|k| y[r][k] * self.dc[j][k][1]).sum::<f64>())
                .sum();
            let direct_delay: f64 = (0..nc).map(|k| y[r][k] * self.rc[r][k][1]).sum();
            let cross = (1.0 - dir(r)) * dc_delay + dir(r) * direct_delay;
            let e2e = (1.0 - dir(r)) * (rd_delay + dc_delay) + dir(r) * direct_delay;
            let bound: f64 = (0..K).map(|k| s[r][k] * self.bound[k]).sum();
            feasible &= e2e <= self.delta[r] && cross <= bound;
        }

        // Link traffic and routing cost.
        let mut routing = 0.0;
        for j in 0..nd {
            for k2 in 0..nc {
                let t: f64 = (0..n)
                    .map(|r| (0..K).map(|k| s[r][k] * (1.0 - self.direct[k]) * self.traffic[r][k]).sum::<f64>() * x[r][j] * y[r][k2])
                    .sum();
                feasible &= t <= self.dc[j][k2][2] * self.dc[j][k2][0] || t == 0.0;
                routing += self.dc[j][k2][1] * t;
            }
        }
        for r in 0..n {
            for k2 in 0..nc {
                let t: f64 = (0..K).map(|k| s[r][k] * self.direct[k] * self.traffic[r][k]).sum::<f64>() * y[r][k2];
                feasible &= t <= self.rc[r][k2][2] * self.rc[r][k2][0] || t == 0.0;
                routing += self.rc[r][k2][1] * t;
            }
        }

        let compute: f64 = (0..n)
            .map(|r| {
                (0..K)
                    .map(|k| s[r][k] * self.lambda[r] * (params.price_du * (1.0 - self.direct[k]) * self.kappa_du[k] + params.price_cu * self.kappa_cu[k]))
                    .sum::<f64>()
            })
            .sum();

        let reconfiguration = prev.map_or(0.0, |prev| {
            let flips: f64 = (0..n)
                .map(|r| {
                    let q = &prev.placements[r];
                    let both_direct = dir(r) * self.direct[q.split.index()];
                    let xp = Self::one_hot(nd, q.du);
                    let yp = Self::one_hot(nc, q.cu);
                    let fx: f64 = (0..nd).map(|j| (x[r][j] - xp[j]).abs()).sum();
                    let fy: f64 = (0..nc).map(|k| (y[r][k] - yp[k]).abs()).sum();
                    (1.0 - both_direct) * fx + fy
                })
                .sum();
            params.reconfig_factor * flips
        });
        let routing = params.routing_factor * routing;
        IlpOutcome {
            connected,
            feasible,
            cost: CostBreakdown {
                compute,
                reconfiguration,
                routing,
                sla: 0.0,
                total: compute + reconfiguration + routing,
            },
        }
    }
}

/// Visits every action vector of `space` in lexicographic order.
fn for_each_action(space: &ActionSpace, mut f: impl FnMut(&[usize])) {
    let sizes = space.head_sizes();
    if sizes.contains(&0) {
        return;
    }
    let mut a = vec![0usize; sizes.len()];
    loop {
        f(&a);
        let mut i = a.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            a[i] += 1;
            if a[i] < sizes[i] {
                break;
            }
            a[i] = 0;
        }
    }
}

fn check_limit(graph: &SubstrateGraph, limit: u64) -> Result<f64> {
    let size = search_size(graph);
    if size > limit as f64 {
        return Err(Error::SearchTooLarge { size, limit });
    }
    Ok(size)
}

/// Minimum-cost strictly feasible allocation. Ties keep the
/// lexicographically smallest action vector.
pub fn enumerate_optimal(
    graph: &SubstrateGraph,
    requests: &[Request],
    prev: Option<&Allocation>,
    catalog: &SplitCatalog,
    params: &CostParams,
    limit: u64,
) -> Result<OracleResult> {
    let search_size = check_limit(graph, limit)?;
    let inst = IlpInstance::new(graph, requests, catalog)?;
    if let Some(p) = prev {
        if p.len() != graph.n_rh() {
            return Err(Error::Usage("previous allocation does not match the topology".into()));
        }
    }
    let space = ActionSpace::for_graph(graph);
    let mut best: Option<(Allocation, CostBreakdown)> = None;
    let mut feasible_count = 0;
    for_each_action(&space, |a| {
        let alloc = space.decode(a).expect("enumerated in range");
        let out = inst.evaluate(prev, &alloc, params);
        if out.feasible {
            feasible_count += 1;
            if best.as_ref().is_none_or(|(_, c)| out.cost.total < c.total) {
                best = Some((alloc, out.cost));
            }
        }
    });
    let (best_alloc, best_cost) = best.unzip();
    Ok(OracleResult {
        best_alloc,
        best_cost,
        feasible_count,
        search_size,
    })
}

/// Checks that, among strictly feasible allocations, the reward is
/// maximized exactly where the cost is minimized (up to ties in cost).
pub fn verify_reward_alignment(
    graph: &SubstrateGraph,
    requests: &[Request],
    catalog: &SplitCatalog,
    params: &CostParams,
    limit: u64,
) -> Result<bool> {
    check_limit(graph, limit)?;
    let space = ActionSpace::for_graph(graph);
    let mut scored: Vec<(f64, f64)> = Vec::new();
    let mut failure = None;
    for_each_action(&space, |a| {
        if failure.is_some() {
            return;
        }
        let alloc = space.decode(a).expect("enumerated in range");
        match evaluator::evaluate(None, &alloc, requests, graph, catalog, params) {
            Ok(ev) if ev.report.is_strictly_feasible() => {
                let j = ev.cost.expect("connected").total;
                scored.push((j, evaluator::reward(0, j, false, graph.n_rh())));
            }
            Ok(_) => {}
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let Some(min_j) = scored.iter().map(|s| s.0).reduce(f64::min) else {
        return Ok(true);
    };
    let max_r = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * (1.0 + min_j.abs());
    let tied = |j: f64| (j - min_j).abs() <= tol;
    let best_reached = scored.iter().any(|&(j, r)| j == min_j && r == max_r);
    Ok(best_reached && scored.iter().all(|&(j, r)| tied(j) || r < max_r))
}
