//! Constraint checks, loads, cost components and reward for one slot's
//! allocation. Everything here is a pure function of its arguments.
//!
//! Split S4 bypasses the edge server: its `du` host is carried for action
//! shape uniformity but contributes no compute, no ES-RC traffic and no
//! connectivity requirement. Its fixed cross-haul traffic rides the direct
//! RH-RC link instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splitmodel::{CostParams, SplitCatalog, SplitId};
use crate::substrate::SubstrateGraph;
use crate::traffic::Request;

/// Split, vDU host (ES order) and vCU host (RC order) of one RH.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub split: SplitId,
    pub du: usize,
    pub cu: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Allocation {
    pub placements: Vec<Placement>,
}

impl Allocation {
    pub fn new(placements: Vec<Placement>) -> Self {
        Self { placements }
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    fn validate(&self, graph: &SubstrateGraph) -> Result<()> {
        if self.placements.len() != graph.n_rh() {
            return Err(Error::Usage(format!(
                "allocation covers {} radio heads, topology has {}",
                self.placements.len(),
                graph.n_rh()
            )));
        }
        for (r, p) in self.placements.iter().enumerate() {
            if p.du >= graph.n_es() || p.cu >= graph.n_rc() {
                return Err(Error::Usage(format!(
                    "radio head {r}: host (ES {}, RC {}) outside {} ES / {} RC",
                    p.du,
                    p.cu,
                    graph.n_es(),
                    graph.n_rc()
                )));
            }
        }
        Ok(())
    }
}

/// Per-slot compute and traffic totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLoad {
    /// CC per ES, by order.
    pub es: Vec<f64>,
    /// CC per RC, by order.
    pub rc: Vec<f64>,
    /// Gbps per substrate link, indexed like `SubstrateGraph::links`.
    /// ES-RC links carry DU-CU traffic; RH-RC links carry S4 traffic.
    pub link: Vec<f64>,
}

impl NetworkLoad {
    pub fn zero(graph: &SubstrateGraph) -> Self {
        Self {
            es: vec![0.0; graph.n_es()],
            rc: vec![0.0; graph.n_rc()],
            link: vec![0.0; graph.links().len()],
        }
    }

    pub fn es_rc_traffic(&self, graph: &SubstrateGraph, d: usize, c: usize) -> Option<f64> {
        graph
            .link_index(graph.es_id(d), graph.rc_id(c))
            .map(|i| self.link[i])
    }
}

/// Summed violation magnitudes of the relaxed constraints, plus the latencies
/// each RH experiences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaReport {
    pub capacity_excess: f64,
    pub e2e_latency_excess: f64,
    pub crosshaul_latency_excess: f64,
    pub bandwidth_excess: f64,
    pub e2e_latency_ms: Vec<f64>,
    pub crosshaul_latency_ms: Vec<f64>,
}

impl SlaReport {
    pub fn cost(&self) -> f64 {
        self.capacity_excess
            + self.e2e_latency_excess
            + self.crosshaul_latency_excess
            + self.bandwidth_excess
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Missing links over all RHs; at most `2N`.
    pub n_fail: usize,
    pub rh_connected: Vec<bool>,
    /// Present only when `n_fail == 0`.
    pub sla: Option<SlaReport>,
}

impl FeasibilityReport {
    pub fn is_connected(&self) -> bool {
        self.n_fail == 0
    }

    /// Connected and free of capacity, latency and bandwidth violations.
    pub fn is_strictly_feasible(&self) -> bool {
        self.n_fail == 0 && self.sla.as_ref().is_some_and(|s| s.cost() == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub compute: f64,
    pub reconfiguration: f64,
    pub routing: f64,
    pub sla: f64,
    pub total: f64,
}

impl CostBreakdown {
    /// The deployment objective without the SLA relaxation term.
    pub fn deployment(&self) -> f64 {
        self.compute + self.reconfiguration + self.routing
    }
}

/// Counts missing links: up to two per regular RH (RH-ES and ES-RC), one per
/// S4 RH (RH-RC).
pub fn check_connectivity(
    alloc: &Allocation,
    graph: &SubstrateGraph,
    catalog: &SplitCatalog,
) -> Result<FeasibilityReport> {
    alloc.validate(graph)?;
    let mut n_fail = 0;
    let rh_connected = alloc
        .placements
        .iter()
        .enumerate()
        .map(|(r, p)| {
            let missing = if catalog.spec(p.split).requires_direct_rh_rc {
                usize::from(graph.rc_link(r, p.cu).is_none())
            } else {
                usize::from(graph.rd_link(r, p.du).is_none())
                    + usize::from(graph.dc_link(p.du, p.cu).is_none())
            };
            n_fail += missing;
            missing == 0
        })
        .collect();
    Ok(FeasibilityReport {
        n_fail,
        rh_connected,
        sla: None,
    })
}

fn check_requests(requests: &[Request], graph: &SubstrateGraph) -> Result<()> {
    if requests.len() != graph.n_rh() {
        return Err(Error::Usage(format!(
            "{} requests for {} radio heads",
            requests.len(),
            graph.n_rh()
        )));
    }
    Ok(())
}

pub fn compute_loads(
    alloc: &Allocation,
    requests: &[Request],
    graph: &SubstrateGraph,
    catalog: &SplitCatalog,
) -> Result<NetworkLoad> {
    check_requests(requests, graph)?;
    let report = check_connectivity(alloc, graph, catalog)?;
    if report.n_fail > 0 {
        return Err(Error::Usage(format!(
            "loads are undefined with {} missing links",
            report.n_fail
        )));
    }
    let mut load = NetworkLoad::zero(graph);
    for (r, (p, req)) in alloc.placements.iter().zip(requests).enumerate() {
        let (du, cu) = catalog.compute_demand(p.split, req.load_mbps);
        let traffic = catalog.crosshaul_load_unchecked(p.split, req.load_mbps);
        load.rc[p.cu] += cu;
        if catalog.spec(p.split).requires_direct_rh_rc {
            let i = graph.link_index(r, graph.rc_id(p.cu)).expect("connectivity checked");
            load.link[i] += traffic;
        } else {
            load.es[p.du] += du;
            let i = graph
                .link_index(graph.es_id(p.du), graph.rc_id(p.cu))
                .expect("connectivity checked");
            load.link[i] += traffic;
        }
    }
    Ok(load)
}

/// Violation magnitudes of the capacity, end-to-end latency, cross-haul
/// latency and bandwidth constraints. Zero iff all of them hold.
pub fn check_sla(
    alloc: &Allocation,
    requests: &[Request],
    graph: &SubstrateGraph,
    catalog: &SplitCatalog,
    loads: &NetworkLoad,
) -> Result<SlaReport> {
    check_requests(requests, graph)?;
    alloc.validate(graph)?;

    let mut capacity_excess = 0.0;
    for (d, p) in loads.es.iter().enumerate() {
        capacity_excess += (p - graph.nodes()[graph.es_id(d)].capacity).max(0.0);
    }
    for (c, p) in loads.rc.iter().enumerate() {
        capacity_excess += (p - graph.nodes()[graph.rc_id(c)].capacity).max(0.0);
    }

    let mut e2e_latency_ms = Vec::with_capacity(alloc.len());
    let mut crosshaul_latency_ms = Vec::with_capacity(alloc.len());
    let mut e2e_latency_excess = 0.0;
    let mut crosshaul_latency_excess = 0.0;
    for (r, (p, req)) in alloc.placements.iter().zip(requests).enumerate() {
        let spec = catalog.spec(p.split);
        let missing = || Error::Usage(format!("radio head {r} is not connected"));
        let (e2e, cross) = if spec.requires_direct_rh_rc {
            let direct = graph.rc_link(r, p.cu).ok_or_else(missing)?.delay;
            (direct, direct)
        } else {
            let rd = graph.rd_link(r, p.du).ok_or_else(missing)?.delay;
            let dc = graph.dc_link(p.du, p.cu).ok_or_else(missing)?.delay;
            (rd + dc, dc)
        };
        e2e_latency_excess += (e2e - req.latency_ms).max(0.0);
        crosshaul_latency_excess += (cross - spec.crosshaul_delay_bound_ms).max(0.0);
        e2e_latency_ms.push(e2e);
        crosshaul_latency_ms.push(cross);
    }

    let bandwidth_excess = graph
        .links()
        .iter()
        .zip(&loads.link)
        .map(|(l, b)| (b - l.bandwidth).max(0.0))
        .sum();

    Ok(SlaReport {
        capacity_excess,
        e2e_latency_excess,
        crosshaul_latency_excess,
        bandwidth_excess,
        e2e_latency_ms,
        crosshaul_latency_ms,
    })
}

/// Number of one-hot positions that differ between consecutive placements.
/// A moved host differs in two positions. vDU moves are ignored while an RH
/// stays on a direct split.
pub fn reconfiguration_changes(prev: &Allocation, alloc: &Allocation, catalog: &SplitCatalog) -> Result<usize> {
    if prev.len() != alloc.len() {
        return Err(Error::Usage(format!(
            "previous allocation covers {} radio heads, current covers {}",
            prev.len(),
            alloc.len()
        )));
    }
    Ok(prev
        .placements
        .iter()
        .zip(&alloc.placements)
        .map(|(a, b)| {
            let both_direct = catalog.spec(a.split).requires_direct_rh_rc
                && catalog.spec(b.split).requires_direct_rh_rc;
            let du = if a.du != b.du && !both_direct { 2 } else { 0 };
            let cu = if a.cu != b.cu { 2 } else { 0 };
            du + cu
        })
        .sum())
}

fn cost_with(
    prev: Option<&Allocation>,
    alloc: &Allocation,
    requests: &[Request],
    graph: &SubstrateGraph,
    catalog: &SplitCatalog,
    params: &CostParams,
    loads: &NetworkLoad,
    sla: &SlaReport,
) -> Result<CostBreakdown> {
    let compute = alloc
        .placements
        .iter()
        .zip(requests)
        .map(|(p, req)| {
            let (du, cu) = catalog.compute_demand(p.split, req.load_mbps);
            let du = if catalog.spec(p.split).requires_direct_rh_rc { 0.0 } else { du };
            du * params.price_du + cu * params.price_cu
        })
        .sum::<f64>();
    let reconfiguration = match prev {
        Some(prev) => params.reconfig_factor * reconfiguration_changes(prev, alloc, catalog)? as f64,
        None => 0.0,
    };
    let routing = params.routing_factor
        * graph
            .links()
            .iter()
            .zip(&loads.link)
            .map(|(l, b)| l.delay * b)
            .sum::<f64>();
    let sla = sla.cost();
    Ok(CostBreakdown {
        compute,
        reconfiguration,
        routing,
        sla,
        total: compute + reconfiguration + routing + sla,
    })
}

pub fn total_cost(
    prev: Option<&Allocation>,
    alloc: &Allocation,
    requests: &[Request],
    graph: &SubstrateGraph,
    catalog: &SplitCatalog,
    params: &CostParams,
) -> Result<CostBreakdown> {
    let loads = compute_loads(alloc, requests, graph, catalog)?;
    let sla = check_sla(alloc, requests, graph, catalog, &loads)?;
    cost_with(prev, alloc, requests, graph, catalog, params, &loads, &sla)
}

/// Scalar reward in `[-1, 1]`: `-1` on early termination, `-n_fail / 2N`
/// when links are missing, `1 / (1 + ln(1 + J))` otherwise.
pub fn reward(n_fail: usize, total_cost: f64, early_terminated: bool, n_rh: usize) -> f64 {
    if early_terminated {
        -1.0
    } else if n_fail > 0 {
        -(n_fail as f64) / (2 * n_rh) as f64
    } else {
        1.0 / (1.0 + total_cost.ln_1p())
    }
}

/// Everything the environment needs from one slot's allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: FeasibilityReport,
    pub loads: Option<NetworkLoad>,
    pub cost: Option<CostBreakdown>,
}

pub fn evaluate(
    prev: Option<&Allocation>,
    alloc: &Allocation,
    requests: &[Request],
    graph: &SubstrateGraph,
    catalog: &SplitCatalog,
    params: &CostParams,
) -> Result<Evaluation> {
    check_requests(requests, graph)?;
    let mut report = check_connectivity(alloc, graph, catalog)?;
    if report.n_fail > 0 {
        return Ok(Evaluation {
            report,
            loads: None,
            cost: None,
        });
    }
    let loads = compute_loads(alloc, requests, graph, catalog)?;
    let sla = check_sla(alloc, requests, graph, catalog, &loads)?;
    let cost = cost_with(prev, alloc, requests, graph, catalog, params, &loads, &sla)?;
    report.sla = Some(sla);
    Ok(Evaluation {
        report,
        loads: Some(loads),
        cost: Some(cost),
    })
}
