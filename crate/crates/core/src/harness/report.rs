//! Aggregation of run directories into plot-ready series.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::eval::{EpisodeOutcome, EvalSummary};
use super::metrics::{read_metrics, MetricsRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RunData {
    pub label: String,
    pub dir: PathBuf,
    pub records: Vec<MetricsRecord>,
}

/// Loads `metrics.jsonl` and labels the run with its agent name.
pub fn load_run(dir: &Path) -> Result<RunData> {
    let cfg = RunConfig::load(&dir.join("config.toml"))?;
    let records = read_metrics(&dir.join("metrics.jsonl"))?;
    if records.is_empty() {
        return Err(Error::Usage(format!("{} has an empty metrics stream", dir.display())));
    }
    Ok(RunData {
        label: cfg.agent.to_string(),
        dir: dir.to_path_buf(),
        records,
    })
}

/// Mean and spread across seeds at each reported timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub label: String,
    /// `(timestep, mean, std)`.
    pub points: Vec<(u64, f64, f64)>,
}

pub fn reward_curve(run: &RunData) -> Curve {
    let mut at: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in &run.records {
        if let MetricsRecord::Rollout {
            timestep,
            mean_episode_reward: Some(m),
            ..
        } = r
        {
            at.entry(*timestep).or_default().push(*m);
        }
    }
    let points = at
        .into_iter()
        .map(|(t, xs)| {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            (t, mean, std)
        })
        .collect();
    Curve {
        label: run.label.clone(),
        points,
    }
}

/// Episodes of each seed's last evaluation, pooled into one summary.
pub fn final_summary(run: &RunData) -> Result<EvalSummary> {
    let mut last: BTreeMap<u64, (u64, &EvalSummary)> = BTreeMap::new();
    for r in &run.records {
        if let MetricsRecord::Eval { timestep, seed, summary, .. } = r {
            if last.get(seed).is_none_or(|(t, _)| timestep >= t) {
                last.insert(*seed, (*timestep, summary));
            }
        }
    }
    if last.is_empty() {
        return Err(Error::Usage(format!("{} has no evaluation records", run.dir.display())));
    }
    let episodes: Vec<EpisodeOutcome> = last.values().flat_map(|(_, s)| s.episodes.iter().cloned()).collect();
    EvalSummary::from_episodes(episodes)
}
