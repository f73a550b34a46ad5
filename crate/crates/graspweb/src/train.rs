//! Training on threads with metrics and checkpoints written to a run directory.

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use graspweb_core::env::{GraspTask, OBS_DIM};
use graspweb_core::gripper::ACTION_DIM;
use graspweb_core::ppo::{
    collect_rollout, train, Environment, MetricsRow, PolicyNetwork, PpoError, Rollout, RolloutRunner, RunningNorm,
    TrainSink, Trainer, TrainerState, Worker,
};
use graspweb_core::randomize::Stage;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::Error;

/// Environment variable overriding the configured worker count.
pub const WORKERS_ENV: &str = "GRASPWEB_WORKERS";

/// Runs each worker's rollout on its own scoped thread and returns them in
/// worker order, so results match [`graspweb_core::ppo::SequentialRunner`].
#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadedRunner;

impl<E: Environment + Send> RolloutRunner<E> for ThreadedRunner {
    fn collect(
        &mut self,
        workers: &mut [Worker<E>],
        net: &PolicyNetwork,
        norm: &RunningNorm,
        horizon: usize,
        gamma: f64,
        stage: Stage,
    ) -> Result<Vec<Rollout>, PpoError> {
        std::thread::scope(|s| {
            let handles: Vec<_> = workers
                .iter_mut()
                .map(|w| s.spawn(move || collect_rollout(w, net, norm, horizon, gamma, stage)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().map_err(|_| PpoError::Environment("rollout worker panicked".into()))?)
                .collect()
        })
    }
}

pub fn write_metrics_header(w: &mut csv::Writer<File>) -> csv::Result<()> {
    w.write_record(MetricsRow::HEADER)
}

/// Writes `metrics.csv` and `checkpoint-<step>.json` / `latest.json` into a run directory.
pub struct DirSink {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub config_hash: String,
    metrics: csv::Writer<File>,
}

impl DirSink {
    /// Opens the run directory. A fresh run starts a new metrics file; a
    /// resumed one keeps the rows up to `resume_step` and appends after them.
    pub fn open(dir: &Path, config: RunConfig, resume_step: Option<u64>) -> Result<Self, Error> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("metrics.csv");
        let kept: Vec<MetricsRow> = match resume_step {
            Some(step) if path.exists() => read_metrics(&path)?.into_iter().filter(|r| r.step <= step).collect(),
            _ => Vec::new(),
        };
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut metrics = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        let csv_err = |e: csv::Error| Error::io(&path, e.into());
        write_metrics_header(&mut metrics).map_err(csv_err)?;
        for r in &kept {
            metrics.serialize(r).map_err(csv_err)?;
        }
        metrics.flush().map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config_hash: config.hash(),
            config,
            metrics,
        })
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, Error> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    r.deserialize()
        .collect::<Result<Vec<MetricsRow>, _>>()
        .map_err(|e| Error::io(path, e.into()))
}

impl TrainSink for DirSink {
    fn metrics(&mut self, row: &MetricsRow) -> Result<(), PpoError> {
        self.metrics.serialize(row).map_err(|e| PpoError::Sink(e.to_string()))?;
        self.metrics.flush().map_err(|e| PpoError::Sink(e.to_string()))
    }

    fn checkpoint(&mut self, state: &TrainerState) -> Result<(), PpoError> {
        let ck = Checkpoint::new(
            state.clone(),
            self.config.trainer.clone(),
            self.config.grasp,
            self.config_hash.clone(),
        );
        let sink = |e: Error| PpoError::Sink(e.to_string());
        ck.save(&self.dir.join(format!("checkpoint-{:010}.json", state.global_step)))
            .map_err(sink)?;
        ck.save(&self.dir.join("latest.json")).map_err(sink)
    }
}

/// Worker count after the environment override.
pub fn effective_workers(config: &RunConfig) -> Result<usize, Error> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Usage(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(config.trainer.workers),
    }
}

pub fn grasp_tasks(config: &RunConfig) -> Vec<GraspTask> {
    (0..config.trainer.workers)
        .map(|_| {
            GraspTask::new(
                config.episode(),
                config.randomization.clone(),
                config.grasp,
                config.seed,
                config.trainer.gamma,
            )
        })
        .collect()
}

/// Trains from scratch or from `resume`, writing into `dir`. Returns the
/// final trainer state.
pub fn run_training(config: &RunConfig, dir: &Path, resume: Option<&Path>) -> Result<TrainerState, Error> {
    let state = match resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            if ck.grasp != config.grasp {
                return Err(Error::Usage(format!(
                    "checkpoint {} was trained for {}, config asks for {}",
                    p.display(),
                    ck.grasp.name(),
                    config.grasp.name()
                )));
            }
            if ck.config_hash != config.hash() {
                eprintln!("warning: resuming under a config that differs from the checkpoint's");
            }
            ck.state
        }
        None => TrainerState::initial(
            &config.trainer,
            OBS_DIM,
            ACTION_DIM,
            config.randomization.curriculum_window,
            config.seed,
        ),
    };
    let mut sink = DirSink::open(dir, config.clone(), resume.map(|_| state.global_step))?;
    let mut trainer = Trainer::new(config.trainer.clone(), grasp_tasks(config), state)?;
    train(&mut trainer, &mut ThreadedRunner, &mut sink)?;
    Ok(trainer.state)
}
