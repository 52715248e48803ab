//! Slice-typed per-RH requests and their session dynamics across an episode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SliceType {
    #[serde(rename = "eMBB")]
    Embb,
    #[serde(rename = "mMTC")]
    Mmtc,
    #[serde(rename = "uRLLC")]
    Urllc,
}

impl SliceType {
    pub const ALL: [SliceType; 3] = [SliceType::Embb, SliceType::Mmtc, SliceType::Urllc];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceRanges {
    pub load_mbps: Interval,
    pub latency_ms: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceTable {
    #[serde(rename = "eMBB")]
    pub embb: SliceRanges,
    #[serde(rename = "mMTC")]
    pub mmtc: SliceRanges,
    #[serde(rename = "uRLLC")]
    pub urllc: SliceRanges,
}

impl Default for SliceTable {
    fn default() -> Self {
        Self {
            embb: SliceRanges {
                load_mbps: Interval(250.0, 300.0),
                latency_ms: Interval(15.0, 20.0),
            },
            mmtc: SliceRanges {
                load_mbps: Interval(150.0, 200.0),
                latency_ms: Interval(180.0, 200.0),
            },
            urllc: SliceRanges {
                load_mbps: Interval(20.0, 40.0),
                latency_ms: Interval(2.0, 4.0),
            },
        }
    }
}

impl SliceTable {
    pub fn ranges(&self, slice: SliceType) -> &SliceRanges {
        match slice {
            SliceType::Embb => &self.embb,
            SliceType::Mmtc => &self.mmtc,
            SliceType::Urllc => &self.urllc,
        }
    }

    pub fn max_load_mbps(&self) -> f64 {
        SliceType::ALL
            .iter()
            .map(|&s| self.ranges(s).load_mbps.hi())
            .fold(0.0, f64::max)
    }

    pub fn max_latency_ms(&self) -> f64 {
        SliceType::ALL
            .iter()
            .map(|&s| self.ranges(s).latency_ms.hi())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        for s in SliceType::ALL {
            let r = self.ranges(s);
            r.load_mbps.validate("slice load")?;
            r.latency_ms.validate("slice latency")?;
            if r.load_mbps.lo() < 0.0 || r.latency_ms.lo() < 0.0 {
                return Err(Error::Config(format!("{s:?} ranges must be nonnegative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub rh: usize,
    pub slice: SliceType,
    pub load_mbps: f64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Per-slot probability that an RH session ends and is replaced.
    pub release_ratio: f64,
    /// Slots per episode.
    pub episode_length: usize,
    /// Probability of eMBB, mMTC, uRLLC for a fresh session.
    pub slice_mix: [f64; 3],
    pub slices: SliceTable,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            release_ratio: 0.5,
            episode_length: 288,
            slice_mix: [1.0 / 3.0; 3],
            slices: SliceTable::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.release_ratio) {
            return Err(Error::Config(format!(
                "release_ratio = {} is outside [0, 1]",
                self.release_ratio
            )));
        }
        if self.episode_length == 0 {
            return Err(Error::Config("episode_length must be positive".into()));
        }
        if self.slice_mix.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Config("slice_mix entries must be nonnegative".into()));
        }
        let total: f64 = self.slice_mix.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("slice_mix sums to {total}, expected 1")));
        }
        self.slices.validate()
    }

    pub fn sample_slice<R: Rng + ?Sized>(&self, rng: &mut R) -> SliceType {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (slice, p) in SliceType::ALL.iter().zip(self.slice_mix) {
            acc += p;
            if u < acc {
                return *slice;
            }
        }
        // Rounding leaves a sliver above the last cumulative bound.
        SliceType::ALL
            .iter()
            .zip(self.slice_mix)
            .rev()
            .find(|(_, p)| *p > 0.0)
            .map(|(s, _)| *s)
            .unwrap_or(SliceType::Embb)
    }
}

pub fn sample_request<R: Rng + ?Sized>(
    rh: usize,
    slice: SliceType,
    table: &SliceTable,
    rng: &mut R,
) -> Request {
    let ranges = table.ranges(slice);
    Request {
        rh,
        slice,
        load_mbps: ranges.load_mbps.sample(rng),
        latency_ms: ranges.latency_ms.sample(rng),
    }
}

/// One fresh request per RH.
pub fn initial_requests<R: Rng + ?Sized>(n_rh: usize, cfg: &SessionConfig, rng: &mut R) -> Vec<Request> {
    (0..n_rh)
        .map(|rh| {
            let slice = cfg.sample_slice(rng);
            sample_request(rh, slice, &cfg.slices, rng)
        })
        .collect()
}

/// Each RH independently releases its session with probability
/// `release_ratio` and gets a freshly sampled request; otherwise it keeps
/// its previous demand.
pub fn advance_sessions<R: Rng + ?Sized>(
    current: &[Request],
    cfg: &SessionConfig,
    rng: &mut R,
) -> Vec<Request> {
    current
        .iter()
        .map(|req| {
            if rng.random_bool(cfg.release_ratio) {
                let slice = cfg.sample_slice(rng);
                sample_request(req.rh, slice, &cfg.slices, rng)
            } else {
                *req
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn embb_sample_within_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let table = SliceTable::default();
        for _ in 0..1000 {
            let r = sample_request(0, SliceType::Embb, &table, &mut rng);
            assert!((250.0..=300.0).contains(&r.load_mbps));
            assert!((15.0..=20.0).contains(&r.latency_ms));
        }
    }

    #[test]
    fn urllc_latency_within_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let table = SliceTable::default();
        for _ in 0..1000 {
            let r = sample_request(3, SliceType::Urllc, &table, &mut rng);
            assert!((2.0..=4.0).contains(&r.latency_ms));
            assert_eq!(r.rh, 3);
        }
    }

    #[test]
    fn collapsed_range_is_exact() {
        let mut table = SliceTable::default();
        table.mmtc.load_mbps = Interval(100.0, 100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = sample_request(0, SliceType::Mmtc, &table, &mut rng);
        assert_eq!(r.load_mbps, 100.0);
    }

    #[test]
    fn zero_release_keeps_everything() {
        let cfg = SessionConfig {
            release_ratio: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reqs = initial_requests(16, &cfg, &mut rng);
        assert_eq!(advance_sessions(&reqs, &cfg, &mut rng), reqs);
    }

    #[test]
    fn full_release_resamples_everything() {
        let cfg = SessionConfig {
            release_ratio: 1.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reqs = initial_requests(16, &cfg, &mut rng);
        let next = advance_sessions(&reqs, &cfg, &mut rng);
        assert_eq!(next.len(), 16);
        for (a, b) in reqs.iter().zip(&next) {
            assert_eq!(a.rh, b.rh);
            assert_ne!(a.load_mbps, b.load_mbps);
        }
    }

    #[test]
    fn half_release_frequency() {
        let cfg = SessionConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut reqs = initial_requests(100, &cfg, &mut rng);
        let mut released = 0usize;
        for _ in 0..100 {
            let next = advance_sessions(&reqs, &cfg, &mut rng);
            released += reqs.iter().zip(&next).filter(|(a, b)| a != b).count();
            reqs = next;
        }
        let freq = released as f64 / 10_000.0;
        assert!((freq - 0.5).abs() <= 0.02, "release frequency {freq}");
    }

    #[test]
    fn slice_mix_must_sum_to_one() {
        let cfg = SessionConfig {
            slice_mix: [0.5, 0.5, 0.5],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SessionConfig {
            release_ratio: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        SessionConfig::default().validate().unwrap();
    }

    #[test]
    fn degenerate_mix_picks_only_allowed_slice() {
        let cfg = SessionConfig {
            slice_mix: [0.0, 0.0, 1.0],
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            assert_eq!(cfg.sample_slice(&mut rng), SliceType::Urllc);
        }
    }

    #[test]
    fn samples_stay_in_declared_ranges() {
        let cfg = SessionConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100_000 {
            let slice = cfg.sample_slice(&mut rng);
            let r = sample_request(0, slice, &cfg.slices, &mut rng);
            let ranges = cfg.slices.ranges(slice);
            assert!(ranges.load_mbps.contains(r.load_mbps));
            assert!(ranges.latency_ms.contains(r.latency_ms));
        }
    }

    proptest! {
        #[test]
        fn one_request_per_rh_and_deterministic(seed in any::<u64>(), n in 1usize..32, rho in 0.0f64..=1.0) {
            let cfg = SessionConfig { release_ratio: rho, ..Default::default() };
            let run = |seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let reqs = initial_requests(n, &cfg, &mut rng);
                advance_sessions(&reqs, &cfg, &mut rng)
            };
            let a = run(seed);
            prop_assert_eq!(a.len(), n);
            for (i, r) in a.iter().enumerate() {
                prop_assert_eq!(r.rh, i);
            }
            prop_assert_eq!(a, run(seed));
        }
    }
}
