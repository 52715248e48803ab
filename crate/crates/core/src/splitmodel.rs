//! The four functional split configurations and the cost constants that
//! price a placement.
//!
//! Request loads are carried in Mbps everywhere else in the crate; the
//! cross-haul load functions below take Mbps and return Gbps, which is the
//! unit of link bandwidth.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MBPS_PER_GBPS: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SplitId {
    S1,
    S2,
    S3,
    S4,
}

impl SplitId {
    pub const ALL: [SplitId; 4] = [SplitId::S1, SplitId::S2, SplitId::S3, SplitId::S4];

    /// Zero-based position, matching the split action head.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for SplitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.index() + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HlsOption {
    O2,
    O4,
    O6,
    O8,
}

/// Cross-haul traffic produced by one RH under a split, as a function of its
/// load in Gbps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CrosshaulLoad {
    Affine { slope: f64, offset_gbps: f64 },
    Constant { constant_gbps: f64 },
}

impl CrosshaulLoad {
    pub fn eval_gbps(&self, load_gbps: f64) -> f64 {
        match *self {
            CrosshaulLoad::Affine { slope, offset_gbps } => slope * load_gbps + offset_gbps,
            CrosshaulLoad::Constant { constant_gbps } => constant_gbps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub id: SplitId,
    pub hls_option: HlsOption,
    pub crosshaul_load: CrosshaulLoad,
    /// Maximum DU-CU delay in ms (for S4, the direct RH-RC link).
    pub crosshaul_delay_bound_ms: f64,
    /// vDU compute demand in CC per Mbps.
    pub du_coeff: f64,
    /// vCU compute demand in CC per Mbps.
    pub cu_coeff: f64,
    pub requires_direct_rh_rc: bool,
}

/// Fronthaul (O7) requirement. Kept as metadata only; no constraint reads it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FronthaulSpec {
    pub load_gbps: f64,
    pub delay_bound_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCatalog {
    pub splits: [SplitSpec; 4],
    pub fronthaul_o7: FronthaulSpec,
}

impl Default for SplitCatalog {
    fn default() -> Self {
        catalog()
    }
}

/// The four split configurations with their default constants.
pub fn catalog() -> SplitCatalog {
    let passthrough = CrosshaulLoad::Affine {
        slope: 1.0,
        offset_gbps: 0.0,
    };
    SplitCatalog {
        splits: [
            SplitSpec {
                id: SplitId::S1,
                hls_option: HlsOption::O2,
                crosshaul_load: passthrough,
                crosshaul_delay_bound_ms: 10.0,
                du_coeff: 0.05,
                cu_coeff: 0.0,
                requires_direct_rh_rc: false,
            },
            SplitSpec {
                id: SplitId::S2,
                hls_option: HlsOption::O4,
                crosshaul_load: passthrough,
                crosshaul_delay_bound_ms: 1.0,
                du_coeff: 0.04,
                cu_coeff: 0.001,
                requires_direct_rh_rc: false,
            },
            SplitSpec {
                id: SplitId::S3,
                hls_option: HlsOption::O6,
                crosshaul_load: CrosshaulLoad::Affine {
                    slope: 1.02,
                    offset_gbps: 0.5,
                },
                crosshaul_delay_bound_ms: 0.25,
                du_coeff: 0.00325,
                cu_coeff: 0.00175,
                requires_direct_rh_rc: false,
            },
            SplitSpec {
                id: SplitId::S4,
                hls_option: HlsOption::O8,
                crosshaul_load: CrosshaulLoad::Constant {
                    constant_gbps: 157.3,
                },
                crosshaul_delay_bound_ms: 0.25,
                du_coeff: 0.0,
                cu_coeff: 0.05,
                requires_direct_rh_rc: true,
            },
        ],
        fronthaul_o7: FronthaulSpec {
            load_gbps: 10.01,
            delay_bound_ms: 0.25,
        },
    }
}

impl SplitCatalog {
    pub fn spec(&self, s: SplitId) -> &SplitSpec {
        &self.splits[s.index()]
    }

    pub fn validate(&self) -> Result<()> {
        for (i, spec) in self.splits.iter().enumerate() {
            if spec.id.index() != i {
                return Err(Error::Config(format!(
                    "split catalog entry {i} is declared as {}",
                    spec.id
                )));
            }
            if !(spec.du_coeff >= 0.0 && spec.cu_coeff >= 0.0 && spec.crosshaul_delay_bound_ms >= 0.0)
            {
                return Err(Error::Config(format!("{} has negative coefficients", spec.id)));
            }
        }
        Ok(())
    }

    /// Cross-haul traffic in Gbps for a request of `load_mbps`.
    pub fn crosshaul_load(&self, s: SplitId, load_mbps: f64) -> Result<f64> {
        if !(load_mbps >= 0.0) {
            return Err(Error::Usage(format!("traffic load {load_mbps} Mbps is negative")));
        }
        Ok(self.crosshaul_load_unchecked(s, load_mbps))
    }

    pub(crate) fn crosshaul_load_unchecked(&self, s: SplitId, load_mbps: f64) -> f64 {
        self.spec(s)
            .crosshaul_load
            .eval_gbps(load_mbps / MBPS_PER_GBPS)
    }

    /// `(vDU, vCU)` compute demand in CCs.
    pub fn compute_demand(&self, s: SplitId, load_mbps: f64) -> (f64, f64) {
        let spec = self.spec(s);
        (spec.du_coeff * load_mbps, spec.cu_coeff * load_mbps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    /// Currency per CC of vDU compute on an edge server.
    pub price_du: f64,
    /// Currency per CC of vCU compute on a regional cloud.
    pub price_cu: f64,
    pub reconfig_factor: f64,
    pub routing_factor: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            price_du: 2.0,
            price_cu: 1.0,
            reconfig_factor: 1.0,
            routing_factor: 1.0,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.price_du > self.price_cu && self.price_cu >= 0.0) {
            return Err(Error::Config(format!(
                "edge compute must cost more than cloud compute (price_du = {}, price_cu = {})",
                self.price_du, self.price_cu
            )));
        }
        if !(self.reconfig_factor >= 0.0 && self.routing_factor >= 0.0) {
            return Err(Error::Config("cost factors must be nonnegative".into()));
        }
        Ok(())
    }
}
