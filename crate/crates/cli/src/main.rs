use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mixtraffic::env::{
    run_episode, EnvKind, EpisodeConfig, IdmPolicy, Policy, ReplayPolicy, RolloutRecord, SweepConfig, ZeroPolicy,
};
use mixtraffic::io::formats::encode_pgm;
use mixtraffic::io::protocol::serve;
use mixtraffic::io::tables::{self, SummaryRow};
use mixtraffic::io::{load_rollout, save_rollout};
use mixtraffic::observation::{junction_observation, stack_rv_observations, CenterRule, Observation, ObservationMode};

#[derive(Parser)]
#[command(name = "mixtraffic", version, about = "Mixed-traffic simulation environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run human-driven baselines and write metrics, summary and time-space tables.
    RunBaseline(RunArgs),
    /// Run a built-in or replayed policy and save the rollouts.
    RunPolicy {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "idm")]
        policy: PolicyKind,
        /// Rollout whose actions are replayed (with `--policy replay`).
        #[arg(long)]
        actions: Option<PathBuf>,
    },
    /// Write the observation frames of a saved rollout as PGM files.
    Render {
        #[arg(long)]
        rollout: PathBuf,
        /// Steps to render, `a..b` (exclusive) or a single step; 0 is the state after warmup.
        #[arg(long, default_value = "0")]
        steps: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a density sweep and write the aggregate table.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the control protocol on stdio or a Unix socket.
    Serve {
        #[arg(long)]
        socket: Option<PathBuf>,
    },
    /// Print or write the default configuration of an environment.
    Config {
        #[arg(long)]
        env: String,
        /// Emit the default sweep instead of the episode config.
        #[arg(long)]
        sweep: bool,
        /// Emit JSON, the form the control protocol expects, instead of TOML.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in default configuration.
    #[arg(long)]
    env: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seed list: `a..b` (exclusive) or comma separated.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = parse_obs_mode)]
    obs_mode: Option<ObservationMode>,
    /// Sample the time-space table every this many steps.
    #[arg(long, default_value_t = 10)]
    ts_every: usize,
    /// Also write each rollout as JSON.
    #[arg(long)]
    save_rollouts: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Zero,
    Idm,
    Replay,
}

fn parse_obs_mode(s: &str) -> Result<ObservationMode, String> {
    s.parse().map_err(|e: mixtraffic::Error| e.to_string())
}

/// Errors caused by the invocation itself exit with status 2.
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::fmt::Debug for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn read_file(path: &Path) -> anyhow::Result<String> {
    if !path.is_file() {
        return Err(usage(format!("no such file: {}", path.display())));
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn parse_env(name: &str) -> anyhow::Result<EnvKind> {
    name.parse().map_err(|e: mixtraffic::Error| usage(e.to_string()))
}

fn episode_config(src: &Source) -> anyhow::Result<EpisodeConfig> {
    match (&src.config, &src.env) {
        (Some(path), _) => {
            let text = read_file(path)?;
            EpisodeConfig::from_toml(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
        }
        (None, Some(env)) => Ok(EpisodeConfig::default_for(parse_env(env)?)),
        (None, None) => Err(usage("pass --config or --env")),
    }
}

fn parse_seeds(spec: &str) -> anyhow::Result<Vec<u64>> {
    let bad = || usage(format!("bad seed list `{spec}`"));
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn seeds_of(run: &RunArgs, config: &EpisodeConfig) -> anyhow::Result<Vec<u64>> {
    match (&run.seeds, run.seed) {
        (Some(s), _) => parse_seeds(s),
        (None, Some(s)) => Ok(vec![s]),
        (None, None) => Ok(vec![config.seed]),
    }
}

fn create_dir(path: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn run_many(run: &RunArgs, base: EpisodeConfig, policy: &mut dyn FnMut() -> Box<dyn Policy>) -> anyhow::Result<()> {
    create_dir(&run.out)?;
    let mut steps = Vec::new();
    let mut summary = Vec::new();
    let mut ts = Vec::new();
    for seed in seeds_of(run, &base)? {
        let mut cfg = base.clone();
        cfg.seed = seed;
        let record = run_episode(cfg, policy().as_mut()).with_context(|| format!("seed {seed}"))?;
        steps.extend(tables::step_rows(&record));
        summary.push(SummaryRow::of(&record));
        let every = run.ts_every.max(1);
        let sampled: Vec<_> = record
            .time_space()?
            .into_iter()
            .filter(|p| ((p.t / record.config.dt).round() as usize).is_multiple_of(every))
            .collect();
        ts.extend(tables::time_space_table(seed, &sampled));
        if run.save_rollouts {
            save_rollout(&run.out.join(format!("rollout_{seed}.json")), &record)?;
        }
    }
    tables::write_table(&run.out.join("metrics.csv"), &steps)?;
    tables::write_table(&run.out.join("summary.csv"), &summary)?;
    tables::write_table(&run.out.join("aggregate.csv"), &tables::aggregate(&summary))?;
    tables::write_table(&run.out.join("time_space.csv"), &ts)?;
    for row in tables::aggregate(&summary) {
        println!(
            "{:<14} {:>12.4} ± {:.4} ({} runs)",
            row.metric, row.mean, row.std, row.runs
        );
    }
    Ok(())
}

fn with_obs_mode(mut cfg: EpisodeConfig, mode: Option<ObservationMode>) -> anyhow::Result<EpisodeConfig> {
    if let Some(m) = mode {
        cfg.observation.mode = m;
        cfg.validate().map_err(|e| usage(e.to_string()))?;
    }
    Ok(cfg)
}

fn parse_steps(spec: &str) -> anyhow::Result<std::ops::Range<usize>> {
    let bad = || usage(format!("bad step range `{spec}`"));
    match spec.split_once("..") {
        Some((a, b)) => Ok(a.trim().parse().map_err(|_| bad())?..b.trim().parse().map_err(|_| bad())?),
        None => {
            let k: usize = spec.trim().parse().map_err(|_| bad())?;
            Ok(k..k + 1)
        }
    }
}

fn render(record: &RolloutRecord, steps: std::ops::Range<usize>, out: &Path) -> anyhow::Result<usize> {
    create_dir(out)?;
    let mut spec = record.config.observation.clone();
    spec.mode = ObservationMode::Image;
    let mut written = 0;
    for k in steps {
        let (world, slots) = record.world_at(k)?;
        let obs = match spec.center {
            CenterRule::PerRv => stack_rv_observations(&world, &spec, &slots),
            CenterRule::Junction => junction_observation(&world, &spec),
        };
        let Observation::Image { stack, .. } = &obs else {
            unreachable!("image mode");
        };
        for s in 0..*stack {
            let frame = obs.frame(s).expect("frame within stack");
            let path = out.join(format!("step{k:05}_slot{s:02}.pgm"));
            fs::write(&path, encode_pgm(frame)?).with_context(|| format!("writing {}", path.display()))?;
            written += 1;
        }
    }
    Ok(written)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::RunBaseline(run) => {
            let cfg = with_obs_mode(episode_config(&run.source)?.all_human(), run.obs_mode)?;
            run_many(&run, cfg, &mut || Box::new(IdmPolicy))
        }
        Command::RunPolicy {
            mut run,
            policy,
            actions,
        } => {
            run.save_rollouts = true;
            let cfg = with_obs_mode(episode_config(&run.source)?, run.obs_mode)?;
            let replayed = match (policy, &actions) {
                (PolicyKind::Replay, Some(path)) => {
                    read_file(path)?;
                    load_rollout(path)?.actions()
                }
                (PolicyKind::Replay, None) => bail!(usage("--policy replay needs --actions")),
                _ => Vec::new(),
            };
            run_many(&run, cfg, &mut || match policy {
                PolicyKind::Zero => Box::new(ZeroPolicy),
                PolicyKind::Idm => Box::new(IdmPolicy),
                PolicyKind::Replay => Box::new(ReplayPolicy::new(replayed.clone())),
            })
        }
        Command::Render { rollout, steps, out } => {
            read_file(&rollout)?;
            let record = load_rollout(&rollout)?;
            let n = render(&record, parse_steps(&steps)?, &out)?;
            println!("wrote {n} frames to {}", out.display());
            Ok(())
        }
        Command::Sweep { source, seeds, out } => {
            let mut sweep = match (&source.config, &source.env) {
                (Some(path), _) => {
                    SweepConfig::from_toml(&read_file(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?
                }
                (None, Some(env)) => {
                    let kind = parse_env(env)?;
                    SweepConfig::default_for(kind).ok_or_else(|| usage(format!("{kind} has no density sweep")))?
                }
                (None, None) => bail!(usage("pass --config or --env")),
            };
            if let Some(s) = seeds {
                sweep.seeds = parse_seeds(&s)?;
            }
            create_dir(&out)?;
            let rows = sweep.run()?;
            tables::write_table(&out.join("sweep.csv"), &tables::sweep_table(&rows))?;
            for r in tables::sweep_table(&rows) {
                println!("{:>12} {:>10.4} ± {:.4}", r.point, r.mean, r.std);
            }
            Ok(())
        }
        Command::Serve { socket } => match socket {
            #[cfg(unix)]
            Some(path) => Ok(mixtraffic::io::protocol::serve_unix(&path)?),
            #[cfg(not(unix))]
            Some(_) => bail!(usage("Unix sockets are not available on this platform")),
            None => Ok(serve(std::io::stdin().lock(), std::io::stdout().lock())?),
        },
        Command::Config { env, sweep, json, out } => {
            let kind = parse_env(&env)?;
            let text = match (sweep, json) {
                (true, _) => {
                    let s =
                        SweepConfig::default_for(kind).ok_or_else(|| usage(format!("{kind} has no density sweep")))?;
                    if json {
                        s.to_json()?
                    } else {
                        s.to_toml()?
                    }
                }
                (false, true) => EpisodeConfig::default_for(kind).to_json()?,
                (false, false) => EpisodeConfig::default_for(kind).to_toml()?,
            };
            match out {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
