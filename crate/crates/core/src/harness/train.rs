//! Training orchestration for every agent kind.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::eval::{evaluate, EvalSummary, Greedy};
use super::metrics::{MetricsRecord, MetricsWriter};
use crate::agents::ddpg::{ddpg_act, ReplayBuffer};
use crate::agents::ppo::ppo_update;
use crate::agents::rollout::{collect_rollouts, VecEnv};
use crate::agents::Agent;
use crate::environment::{EnvConfig, Environment};
use crate::error::{Error, Result};
use crate::substrate::{serialize_topology, SubstrateGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub timesteps: u64,
    pub final_eval: EvalSummary,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub run_dir: PathBuf,
    pub seeds: Vec<SeedResult>,
}

/// Trains one agent per configured seed into `run_dir`, which receives the
/// frozen configuration, the topologies, `metrics.jsonl`, checkpoints and
/// `summary.json`.
pub fn train(cfg: &RunConfig, run_dir: &Path) -> Result<TrainResult> {
    cfg.validate()?;
    let ckpt_dir = run_dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    let config_path = run_dir.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml()).map_err(|e| Error::io(&config_path, e))?;

    let graphs: Vec<Arc<SubstrateGraph>> = cfg.load_topologies()?.into_iter().map(Arc::new).collect();
    let docs: Vec<String> = graphs.iter().map(|g| serialize_topology(g)).collect();
    for (i, doc) in docs.iter().enumerate() {
        let p = run_dir.join(format!("topology-{i}.txt"));
        std::fs::write(&p, doc).map_err(|e| Error::io(&p, e))?;
    }

    let writer = MetricsWriter::create(&run_dir.join("metrics.jsonl"))?;
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mut job = SeedRun::new(cfg, seed, &graphs, &docs, &ckpt_dir, writer.sender())?;
        seeds.push(job.run()?);
    }
    writer.finish()?;

    let result = TrainResult {
        run_dir: run_dir.to_path_buf(),
        seeds,
    };
    let summary = run_dir.join("summary.json");
    std::fs::write(&summary, serde_json::to_string_pretty(&result)?).map_err(|e| Error::io(&summary, e))?;
    Ok(result)
}

struct SeedRun<'a> {
    cfg: &'a RunConfig,
    seed: u64,
    graphs: &'a [Arc<SubstrateGraph>],
    docs: &'a [String],
    env_cfg: Arc<EnvConfig>,
    ckpt_dir: &'a Path,
    tx: Sender<MetricsRecord>,
    clock: Instant,
    rng: ChaCha8Rng,
    envs: VecEnv,
    agent: Agent,
    timestep: u64,
    next_eval: u64,
    recent: VecDeque<f64>,
    last: Option<(EvalSummary, PathBuf, u64)>,
}

impl<'a> SeedRun<'a> {
    fn new(
        cfg: &'a RunConfig,
        seed: u64,
        graphs: &'a [Arc<SubstrateGraph>],
        docs: &'a [String],
        ckpt_dir: &'a Path,
        tx: Sender<MetricsRecord>,
    ) -> Result<Self> {
        let env_cfg = Arc::new(cfg.env_config());
        let hp = &cfg.hyperparameters;
        let envs = (0..hp.n_envs)
            .map(|i| Environment::new(graphs[i % graphs.len()].clone(), env_cfg.clone(), 0))
            .collect::<Result<Vec<_>>>()?;
        let labels = (0..hp.n_envs).map(|i| i % graphs.len()).collect();
        let envs = VecEnv::new(envs, labels, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let agent = Agent::new(cfg.agent, hp, envs.envs()[0].observation_len(), envs.head_sizes(), &mut rng);
        Ok(Self {
            cfg,
            seed,
            graphs,
            docs,
            env_cfg,
            ckpt_dir,
            tx,
            clock: Instant::now(),
            rng,
            envs,
            agent,
            timestep: 0,
            next_eval: if cfg.eval_interval == 0 { u64::MAX } else { cfg.eval_interval },
            recent: VecDeque::with_capacity(100),
            last: None,
        })
    }

    fn wall(&self) -> Option<f64> {
        self.cfg.record_wall_clock.then(|| self.clock.elapsed().as_secs_f64())
    }

    fn send(&self, rec: MetricsRecord) {
        // A closed writer only loses metrics; training itself is unaffected.
        let _ = self.tx.send(rec);
    }

    fn flush_episodes(&mut self) {
        for stats in self.envs.drain_finished() {
            if self.recent.len() == 100 {
                self.recent.pop_front();
            }
            self.recent.push_back(stats.reward);
            self.send(MetricsRecord::Episode {
                timestep: self.timestep,
                seed: self.seed,
                stats,
                wall_clock_s: self.wall(),
            });
        }
    }

    fn mean_recent(&self) -> Option<f64> {
        (!self.recent.is_empty()).then(|| self.recent.iter().sum::<f64>() / self.recent.len() as f64)
    }

    fn maybe_evaluate(&mut self, force: bool) -> Result<()> {
        let due = self.timestep >= self.next_eval;
        let fresh = self.last.as_ref().is_some_and(|l| l.2 == self.timestep);
        if !(due || force) || fresh {
            return Ok(());
        }
        while self.next_eval <= self.timestep {
            self.next_eval = self.next_eval.saturating_add(self.cfg.eval_interval.max(1));
        }
        let summary = evaluate(&mut Greedy(&self.agent), self.graphs, &self.env_cfg, self.cfg.eval_episodes, self.seed)?;
        self.send(MetricsRecord::Eval {
            timestep: self.timestep,
            seed: self.seed,
            summary: summary.clone(),
            wall_clock_s: self.wall(),
        });
        let path = self.ckpt_dir.join(Checkpoint::file_name(self.seed, self.timestep));
        Checkpoint {
            version: super::checkpoint::CHECKPOINT_VERSION,
            seed: self.seed,
            timestep: self.timestep,
            config: self.cfg.clone(),
            topologies: self.docs.to_vec(),
            agent: self.agent.clone(),
            rng: self.rng.clone(),
        }
        .save(&path)?;
        self.last = Some((summary, path, self.timestep));
        Ok(())
    }

    fn run(&mut self) -> Result<SeedResult> {
        match self.agent {
            Agent::Ppo { .. } => self.run_ppo()?,
            Agent::Ddpg(_) => self.run_ddpg()?,
        }
        self.maybe_evaluate(true)?;
        let (final_eval, checkpoint, _) = self.last.clone().expect("final evaluation ran");
        Ok(SeedResult {
            seed: self.seed,
            timesteps: self.timestep,
            final_eval,
            checkpoint,
        })
    }

    fn run_ppo(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let hp = &cfg.hyperparameters;
        while self.timestep < self.cfg.total_timesteps {
            let Agent::Ppo { kind, model, opt } = &mut self.agent else { unreachable!() };
            let buf = collect_rollouts(&mut self.envs, model, hp.n_steps, kind.is_masked(), hp.gamma, hp.gae_lambda, &mut self.rng)?;
            self.timestep += buf.len() as u64;
            let stats = ppo_update(model, opt, &buf, hp, &mut self.rng)?;
            self.flush_episodes();
            self.send(MetricsRecord::Rollout {
                timestep: self.timestep,
                seed: self.seed,
                mean_episode_reward: self.mean_recent(),
                update: Some(stats),
                wall_clock_s: self.wall(),
            });
            self.maybe_evaluate(false)?;
        }
        Ok(())
    }

    fn run_ddpg(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let hp = &cfg.hyperparameters;
        let heads = self.envs.head_sizes();
        let n = self.envs.len();
        let mut replay = ReplayBuffer::new(hp.ddpg.buffer_size);
        let mut since_report = 0usize;
        while self.timestep < self.cfg.total_timesteps {
            let Agent::Ddpg(d) = &mut self.agent else { unreachable!() };
            let obs: Vec<Vec<f64>> = self.envs.observations().iter().map(|o| o.flat.clone()).collect();
            let warmup = replay.len() < hp.ddpg.learning_starts;
            let us: Vec<Vec<f64>> = obs
                .iter()
                .map(|o| {
                    if warmup {
                        (0..heads.len()).map(|_| self.rng.random_range(-1.0..=1.0)).collect()
                    } else {
                        d.act_noisy(o, hp.ddpg.noise_sigma, &mut self.rng)
                    }
                })
                .collect();
            let actions: Vec<Vec<usize>> = us.iter().map(|u| ddpg_act(u, &heads)).collect();
            let steps = self.envs.step(&actions)?;
            for (e, (st, (o, u))) in steps.into_iter().zip(obs.into_iter().zip(us)).enumerate() {
                let next = match st.final_observation {
                    Some(f) => f.flat,
                    None => self.envs.observations()[e].flat.clone(),
                };
                replay.push(o, u, st.reward, next, st.terminated);
            }
            self.timestep += n as u64;
            if replay.len() >= hp.ddpg.learning_starts.max(hp.batch_size) {
                for _ in 0..n {
                    d.train_step(&replay, hp.batch_size, hp.gamma, hp.ddpg.tau, &mut self.rng);
                }
            }
            since_report += 1;
            if since_report == hp.n_steps || self.timestep >= self.cfg.total_timesteps {
                since_report = 0;
                self.flush_episodes();
                self.send(MetricsRecord::Rollout {
                    timestep: self.timestep,
                    seed: self.seed,
                    mean_episode_reward: self.mean_recent(),
                    update: None,
                    wall_clock_s: self.wall(),
                });
                self.maybe_evaluate(false)?;
            }
        }
        Ok(())
    }
}
