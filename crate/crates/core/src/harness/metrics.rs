//! Line-delimited JSON metrics, written by a single background thread.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{channel, Sender};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use super::eval::EvalSummary;
use crate::agents::ppo::UpdateStats;
use crate::agents::rollout::EpisodeStats;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum MetricsRecord {
    /// A finished training episode.
    Episode {
        timestep: u64,
        seed: u64,
        #[serde(flatten)]
        stats: EpisodeStats,
        #[serde(skip_serializing_if = "Option::is_none")]
        wall_clock_s: Option<f64>,
    },
    /// One rollout and the update that followed it.
    Rollout {
        timestep: u64,
        seed: u64,
        /// Mean reward of the last 100 finished episodes.
        #[serde(skip_serializing_if = "Option::is_none")]
        mean_episode_reward: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        update: Option<UpdateStats>,
        #[serde(skip_serializing_if = "Option::is_none")]
        wall_clock_s: Option<f64>,
    },
    /// A greedy evaluation.
    Eval {
        timestep: u64,
        seed: u64,
        summary: EvalSummary,
        #[serde(skip_serializing_if = "Option::is_none")]
        wall_clock_s: Option<f64>,
    },
}

impl MetricsRecord {
    pub fn timestep(&self) -> u64 {
        match self {
            MetricsRecord::Episode { timestep, .. }
            | MetricsRecord::Rollout { timestep, .. }
            | MetricsRecord::Eval { timestep, .. } => *timestep,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            MetricsRecord::Episode { seed, .. } | MetricsRecord::Rollout { seed, .. } | MetricsRecord::Eval { seed, .. } => *seed,
        }
    }
}

/// Owns the output file on a dedicated thread; clones of the sender may be
/// handed to any producer.
pub struct MetricsWriter {
    tx: Option<Sender<MetricsRecord>>,
    handle: Option<JoinHandle<Result<usize>>>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let (tx, rx) = channel::<MetricsRecord>();
        let path: PathBuf = path.to_path_buf();
        let handle = std::thread::spawn(move || {
            let mut out = BufWriter::new(file);
            let mut n = 0;
            for rec in rx {
                serde_json::to_writer(&mut out, &rec)?;
                out.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
                n += 1;
            }
            out.flush().map_err(|e| Error::io(&path, e))?;
            Ok(n)
        });
        Ok(Self {
            tx: Some(tx),
            handle: Some(handle),
        })
    }

    pub fn sender(&self) -> Sender<MetricsRecord> {
        self.tx.clone().expect("writer is open")
    }

    /// Closes the stream and returns the number of records written. Every
    /// sender clone must be dropped first.
    pub fn finish(mut self) -> Result<usize> {
        self.tx.take();
        self.handle
            .take()
            .expect("writer is open")
            .join()
            .map_err(|_| Error::Checkpoint("metrics writer thread panicked".into()))?
    }
}

impl Drop for MetricsWriter {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
