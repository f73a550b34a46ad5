//! Command-line interface. Exit codes: 0 success, 2 configuration error,
//! 3 runtime error (including a replay that diverges).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use graspweb_core::env::{episode_sample, EpisodeConfig};
use graspweb_core::eval::{NetworkPolicy, Policy, ScriptedPolicy, SuccessMatrix, SweepSpec};
use graspweb_core::randomize::Stage;
use graspweb_core::web::GraspType;

use crate::checkpoint::Checkpoint;
use crate::config::{template, RunConfig};
use crate::error::Error;
use crate::policy::RandomPolicy;
use crate::replay::{record_episode, replay, ReplayReport, TrajectoryLog};
use crate::sweep::{export, run_sweep_parallel};
use crate::train::{effective_workers, run_training};

#[derive(Debug, Parser)]
#[command(name = "graspweb", version, about = "Contact-web grasp training and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 5 depths × 5 widths × 3 top exponents, no recognition noise.
    PaperShape,
    /// The shape grid with 16 shared noise samples per cell.
    PaperShapeNoisy,
    /// 7 zeniths × 7 azimuths on each of the three probe objects.
    PaperApproach,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    Checkpoint,
    Scripted,
    Random,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a documented configuration template.
    InitConfig {
        path: PathBuf,
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Train a policy; writes metrics.csv and checkpoints into the output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_grasp)]
        grasp: Option<GraspType>,
        /// Continue from this checkpoint at its saved global step.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override a config key, e.g. `trainer.total_steps=1000`.
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a robustness sweep and write <out>.csv and <out>.json per matrix.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Sweep spec file (TOML); alternative to --preset.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        spec: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Policy checkpoint; required unless --scripted.
        #[arg(long, required_unless_present = "scripted")]
        checkpoint: Option<PathBuf>,
        /// Evaluate the inverse-kinematics grasp planned on the true web instead.
        #[arg(long)]
        scripted: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Re-simulate a trajectory log and report the first divergent step.
    Replay {
        log: PathBuf,
        /// Replay under this config instead of the one stored in the log.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run one episode, printing per-step rewards.
    EvalEpisode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyKind::Checkpoint)]
        policy: PolicyKind,
        #[arg(long, required_if_eq("policy", "checkpoint"))]
        checkpoint: Option<PathBuf>,
        /// Episode index in the config seed's sample stream.
        #[arg(long, default_value_t = 0)]
        episode: u64,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        /// Write a replayable trajectory log here.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        max_steps: u32,
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn parse_grasp(s: &str) -> Result<GraspType, String> {
    GraspType::ALL
        .into_iter()
        .find(|g| g.name() == s)
        .ok_or_else(|| format!("unknown grasp type `{s}`; expected active-force, passive-force or passive-form"))
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(path, overrides)?;
    cfg.trainer.workers = effective_workers(&cfg)?;
    Ok(cfg)
}

fn emit(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<(), Error> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

pub fn run(command: Command, out: &mut dyn Write) -> Result<i32, Error> {
    match command {
        Command::InitConfig { path, force } => {
            if path.exists() && !force {
                return Err(Error::Usage(format!(
                    "{} exists; pass --force to overwrite",
                    path.display()
                )));
            }
            fs::write(&path, template()).map_err(|e| Error::io(&path, e))?;
            emit(out, format!("wrote {}", path.display()))?;
            Ok(0)
        }
        Command::Train {
            config,
            out: dir,
            grasp,
            resume,
            overrides,
        } => {
            let mut cfg = load_config(&config, &overrides)?;
            if let Some(g) = grasp {
                cfg.grasp = g;
            }
            let state = run_training(&cfg, &dir, resume.as_deref())?;
            emit(
                out,
                format!(
                    "trained {} to step {} in {} rounds; checkpoints in {}",
                    cfg.grasp.name(),
                    state.global_step,
                    state.round,
                    dir.display()
                ),
            )?;
            Ok(0)
        }
        Command::Sweep {
            config,
            spec,
            preset,
            checkpoint,
            scripted,
            out: stem,
            seed,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let ck = checkpoint.as_deref().map(Checkpoint::load).transpose()?;
            let grasp = ck.as_ref().map_or(cfg.grasp, |c| c.grasp);
            let mut specs: Vec<(String, SweepSpec)> = match (spec, preset) {
                (Some(p), _) => {
                    let text = fs::read_to_string(&p).map_err(|e| Error::Config {
                        path: p.display().to_string(),
                        message: e.to_string(),
                    })?;
                    let s: SweepSpec = toml::from_str(&text).map_err(|e| Error::Config {
                        path: p.display().to_string(),
                        message: e.to_string(),
                    })?;
                    vec![(String::new(), s)]
                }
                (None, Some(Preset::PaperShape)) => vec![(String::new(), SweepSpec::shape_grid(grasp, false, seed))],
                (None, Some(Preset::PaperShapeNoisy)) => {
                    vec![(String::new(), SweepSpec::shape_grid(grasp, true, seed))]
                }
                (None, Some(Preset::PaperApproach)) => SweepSpec::probe_objects()
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (format!("-object{}", i + 1), SweepSpec::approach_grid(grasp, *s, seed)))
                    .collect(),
                (None, None) => return Err(Error::Usage("either --spec or --preset is required".into())),
            };
            for (_, s) in &mut specs {
                s.validate().map_err(|e| Error::Config {
                    path: "sweep spec".into(),
                    message: e.to_string(),
                })?;
                if let Some(p) = &checkpoint {
                    s.checkpoint = Some(p.display().to_string());
                }
            }
            let episode = cfg.episode();
            let threads = cfg.trainer.workers;
            for (suffix, s) in &specs {
                let mut m: SuccessMatrix = match &ck {
                    Some(c) if !scripted => run_sweep_parallel(s, &episode, &cfg.randomization, threads, || {
                        NetworkPolicy::new(&c.state.network, &c.state.normalizer)
                    })?,
                    _ => run_sweep_parallel(s, &episode, &cfg.randomization, threads, ScriptedPolicy::default)?,
                };
                m.config_hash = cfg.hash();
                let target = stem.with_file_name(format!(
                    "{}{suffix}",
                    stem.file_name().map(|f| f.to_string_lossy()).unwrap_or_default()
                ));
                export(&m, &target)?;
                emit(
                    out,
                    format!(
                        "{}: {} cells, {}/{} successes -> {}.csv",
                        grasp.name(),
                        m.cells.len(),
                        m.total_successes(),
                        m.total_trials(),
                        target.display()
                    ),
                )?;
            }
            Ok(0)
        }
        Command::Replay { log, config } => {
            let l = TrajectoryLog::load(&log)?;
            let cfg: Option<EpisodeConfig> = config.map(|p| load_config(&p, &[])).transpose()?.map(|c| c.episode());
            let report = replay(&l, cfg.as_ref());
            emit(out, &report)?;
            Ok(match report {
                ReplayReport::Identical { .. } => 0,
                ReplayReport::Diverged { .. } => 3,
            })
        }
        Command::EvalEpisode {
            config,
            policy,
            checkpoint,
            episode,
            stage,
            log,
            max_steps,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let stage = if stage == 1 { Stage::One } else { Stage::Two };
            let ck = checkpoint.as_deref().map(Checkpoint::load).transpose()?;
            let grasp = ck.as_ref().map_or(cfg.grasp, |c| c.grasp);
            let episode_cfg = cfg.episode();
            let (sample, _) = episode_sample(&episode_cfg, &cfg.randomization, grasp, cfg.seed, episode, stage)?;
            let mut p: Box<dyn Policy + '_> = match (policy, &ck) {
                (PolicyKind::Checkpoint, Some(c)) => Box::new(NetworkPolicy::new(&c.state.network, &c.state.normalizer)),
                (PolicyKind::Checkpoint, None) => return Err(Error::Usage("--checkpoint is required".into())),
                (PolicyKind::Scripted, _) => Box::new(ScriptedPolicy::default()),
                (PolicyKind::Random, _) => Box::new(RandomPolicy::new(cfg.seed ^ episode)),
            };
            let traj = record_episode(&episode_cfg, &sample, &cfg.hash(), p.as_mut(), max_steps)?;
            for s in &traj.steps {
                emit(out, format!("step {:3} reward {:+.4} phase {:?}", s.step, s.reward, s.phase))?;
            }
            let total: f64 = traj.steps.iter().map(|s| s.reward).sum();
            let last = traj.steps.last().map(|s| s.phase);
            emit(out, format!("return {total:.4} final phase {last:?}"))?;
            if let Some(path) = log {
                traj.save(&path)?;
                emit(out, format!("log written to {}", path.display()))?;
            }
            Ok(0)
        }
    }
}
