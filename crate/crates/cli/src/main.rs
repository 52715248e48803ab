use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use oran_core::agents::AgentKind;
use oran_core::environment::ActionSpace;
use oran_core::harness::checkpoint::{latest_checkpoints, Checkpoint};
use oran_core::harness::eval::{evaluate, EvalSummary, Greedy};
use oran_core::harness::report::{final_summary, load_run, reward_curve};
use oran_core::harness::train::train;
use oran_core::harness::RunConfig;
use oran_core::oracle::{enumerate_optimal, DEFAULT_LIMIT};
use oran_core::substrate::{generate_topology, parse_topology, serialize_topology};
use oran_core::traffic::initial_requests;
use oran_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

mod plot;

#[derive(Parser)]
#[command(name = "oran", version, about = "Functional split selection and vDU/vCU placement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent; writes a run directory.
    Train(Common),
    /// Greedy evaluation of a run directory or a single checkpoint.
    Eval {
        path: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        /// Evaluation seed; defaults to each checkpoint's training seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reward curves and final-evaluation bar charts from run directories.
    Plot {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Exact optimum of one slot on a small topology.
    Oracle {
        #[arg(long)]
        topology: PathBuf,
        /// Seed of the sampled requests.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_LIMIT)]
        limit: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Topology utilities.
    Topo {
        #[command(subcommand)]
        command: TopoCommand,
    },
    /// Configuration utilities.
    Config {
        #[command(subcommand)]
        command: ConfigCommand,
    },
}

#[derive(Subcommand)]
enum TopoCommand {
    /// Generate a topology from the configured spec.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the topology seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_rh: Option<usize>,
        #[arg(long)]
        n_es: Option<usize>,
        #[arg(long)]
        n_rc: Option<usize>,
        /// File to write; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ConfigCommand {
    /// Print the effective configuration with every default.
    Show(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training seed; repeat for several runs.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    timesteps: Option<u64>,
    /// Run directory; defaults to `<output root>/<agent>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(t) = &self.topology {
            cfg.topology_file = Some(t.clone());
            cfg.topologies.clear();
        }
        if let Some(a) = &self.agent {
            cfg.agent = a.parse::<AgentKind>()?;
        }
        if let Some(t) = self.timesteps {
            cfg.total_timesteps = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn run_dir(&self, cfg: &RunConfig) -> PathBuf {
        if let Some(out) = &self.out {
            return out.clone();
        }
        let root = std::env::var_os("ORAN_RUN_DIR").map(PathBuf::from).unwrap_or_else(|| cfg.output_dir.clone());
        root.join(cfg.agent.to_string().to_lowercase())
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn summary_line(label: &str, s: &EvalSummary) -> String {
    let cost = match (s.mean_cost, s.std_cost) {
        (Some(m), Some(sd)) => format!("{m:.2} ± {sd:.2}"),
        _ => "n/a".into(),
    };
    format!(
        "{label}: reward {:.3} ± {:.3}, cost {cost}, success {:.0}% over {} episodes",
        s.mean_reward,
        s.std_reward,
        100.0 * s.success_rate,
        s.episodes.len()
    )
}

fn cmd_eval(path: &Path, episodes: Option<usize>, seed: Option<u64>) -> Result<()> {
    let ckpts = if path.is_dir() { latest_checkpoints(path)? } else { vec![path.to_path_buf()] };
    let mut all = Vec::new();
    for p in ckpts {
        let ck = Checkpoint::load(&p)?;
        let graphs: Vec<_> = ck.graphs()?.into_iter().map(Arc::new).collect();
        let env_cfg = Arc::new(ck.config.env_config());
        let n = episodes.unwrap_or(ck.config.eval_episodes);
        let s = evaluate(&mut Greedy(&ck.agent), &graphs, &env_cfg, n, seed.unwrap_or(ck.seed))?;
        eprintln!("{}", summary_line(&format!("{} seed {}", ck.agent.kind(), ck.seed), &s));
        all.extend(s.episodes);
    }
    let summary = EvalSummary::from_episodes(all)?;
    eprintln!("{}", summary_line("overall", &summary));
    print_json(&summary)
}

fn cmd_plot(runs: &[PathBuf], out: &Path) -> Result<()> {
    let data = runs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let curves: Vec<_> = data.iter().map(reward_curve).collect();
    let bars = data
        .iter()
        .map(|r| Ok((r.label.clone(), final_summary(r)?)))
        .collect::<Result<Vec<_>>>()?;
    let plot_err = |e: Box<dyn std::error::Error>| Error::Usage(format!("plotting failed: {e}"));
    let rewards = out.join("rewards.svg");
    let costs = out.join("costs.svg");
    plot::reward_curves(&curves, &rewards).map_err(plot_err)?;
    plot::summary_bars(&bars, &costs).map_err(plot_err)?;
    for (label, s) in &bars {
        eprintln!("{}", summary_line(label, s));
    }
    println!("{}\n{}", rewards.display(), costs.display());
    Ok(())
}

fn cmd_oracle(topology: &Path, seed: u64, limit: u64, config: Option<&Path>) -> Result<()> {
    let cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let text = std::fs::read_to_string(topology).map_err(|e| Error::io(topology, e))?;
    let g = parse_topology(&text)?;
    let requests = initial_requests(g.n_rh(), &cfg.session, &mut ChaCha8Rng::seed_from_u64(seed));
    let res = enumerate_optimal(&g, &requests, None, &cfg.splits, &cfg.costs, limit)?;
    let record = match (&res.best_alloc, &res.best_cost) {
        (Some(a), Some(c)) => json!({
            "status": "optimal",
            "action": ActionSpace::for_graph(&g).encode(a),
            "allocation": a,
            "cost": c,
            "requests": requests,
            "feasible_count": res.feasible_count,
            "search_size": res.search_size,
        }),
        _ => json!({
            "status": "infeasible",
            "requests": requests,
            "feasible_count": res.feasible_count,
            "search_size": res.search_size,
        }),
    };
    print_json(&record)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let cfg = common.resolve()?;
            let dir = common.run_dir(&cfg);
            eprintln!("training {} for {} timesteps, seeds {:?} -> {}", cfg.agent, cfg.total_timesteps, cfg.seeds, dir.display());
            let result = train(&cfg, &dir)?;
            for s in &result.seeds {
                eprintln!("{}", summary_line(&format!("seed {}", s.seed), &s.final_eval));
            }
            println!("{}", dir.display());
            Ok(())
        }
        Command::Eval { path, episodes, seed } => cmd_eval(&path, episodes, seed),
        Command::Plot { runs, out } => cmd_plot(&runs, &out),
        Command::Oracle { topology, seed, limit, config } => cmd_oracle(&topology, seed, limit, config.as_deref()),
        Command::Topo {
            command: TopoCommand::Gen { config, seed, n_rh, n_es, n_rc, out },
        } => {
            let cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            let mut spec = cfg.topology;
            spec.seed = seed.unwrap_or(spec.seed);
            spec.n_rh = n_rh.unwrap_or(spec.n_rh);
            spec.n_es = n_es.unwrap_or(spec.n_es);
            spec.n_rc = n_rc.unwrap_or(spec.n_rc);
            let text = serialize_topology(&generate_topology(&spec)?);
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| Error::io(&p, e)),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Config {
            command: ConfigCommand::Show(common),
        } => {
            print!("{}", common.resolve()?.render());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Parse { .. } => 2,
                Error::SearchTooLarge { .. } => 3,
                _ => 1,
            })
        }
    }
}
