//! Asynchronous actor-critic training: worker threads run episodes against
//! private parameter snapshots and push whole-rollout gradients into a shared
//! store.

mod checkpoint;
mod shared;

use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use shared::{clip_global_norm, AdamConfig, AdamState, ApplyRecord, SharedParams, Snapshot};

use crate::catalog::RoomType;
use crate::error::{Error, Result};
use crate::model::{step_grads, GraphMode, Model, ModelDims, Network, StepCache};
use crate::policy::{a3c_loss, sample_categorical, LossConfig, StepOutcome};
use crate::rng::stream;
use crate::task::{sample_task, Env, Task, TaskContext};
use crate::world::{Action, Split, WorldSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub gamma: f64,
    pub workers: usize,
    pub max_episodes: u64,
    /// Steps per gradient update (or fewer at episode end).
    pub rollout_len: usize,
    pub max_steps: usize,
    pub entropy_beta: f64,
    pub value_coef: f64,
    pub clip_norm: f64,
    /// Write `checkpoint.bin` every this many completed episodes; 0 = only at the end.
    pub checkpoint_every: u64,
    pub graph_mode: GraphMode,
    /// Filled from the top-level config seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            gamma: 0.99,
            workers: 8,
            max_episodes: 50_000,
            rollout_len: 50,
            max_steps: 100,
            entropy_beta: 0.01,
            value_coef: 0.5,
            clip_norm: 10.0,
            checkpoint_every: 0,
            graph_mode: GraphMode::Full,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train.{m}")));
        if self.workers == 0 {
            return bad("workers must be >= 1");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be > 0");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.rollout_len == 0 || self.max_steps == 0 {
            return bad("rollout_len and max_steps must be positive");
        }
        if !(self.clip_norm > 0.0) || !(self.entropy_beta >= 0.0) || !(self.value_coef >= 0.0) {
            return bad("clip_norm must be > 0, entropy_beta and value_coef >= 0");
        }
        Ok(())
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            gamma: self.gamma,
            entropy_beta: self.entropy_beta,
            value_coef: self.value_coef,
        }
    }
}

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub worker: usize,
    pub room: RoomType,
    pub target: String,
    pub success: bool,
    pub length: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub wallclock_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub success: bool,
    /// Actions taken, including a final `Done`.
    pub length: usize,
    pub ret: f64,
    pub updates: usize,
    /// Gradients the shared store refused (non-finite).
    pub rejected: usize,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
}

/// A worker's private state: parameter snapshot and random stream.
#[derive(Debug)]
pub struct Worker {
    pub id: usize,
    pub net: Network,
    pub rng: ChaCha8Rng,
    version: u64,
    scratch: Vec<f64>,
}

impl Worker {
    pub fn new(id: usize, net: Network, rng: ChaCha8Rng) -> Self {
        Worker {
            id,
            net,
            rng,
            version: 0,
            scratch: Vec::new(),
        }
    }

    pub fn refresh(&mut self, shared: &SharedParams) -> Result<()> {
        self.version = shared.read_into(&mut self.scratch);
        self.net.load_flat(&self.scratch)
    }

    /// Version of the snapshot this worker last read.
    pub fn version(&self) -> u64 {
        self.version
    }
}

/// Picks the action for the current step; receives the environment and the
/// policy's action probabilities. `None` uses the sampled policy action.
pub type ActionOverride<'o> = &'o mut dyn FnMut(&Env, &[f64]) -> Option<Action>;

/// Runs one episode, applying a gradient every `rollout_len` steps and at the
/// end. The worker's snapshot is refreshed after each apply.
pub fn run_episode(
    ctx: &TaskContext,
    worker: &mut Worker,
    task: Task,
    shared: &SharedParams,
    cfg: &TrainConfig,
    mut action_override: Option<ActionOverride>,
) -> Result<EpisodeStats> {
    let loss_cfg = cfg.loss();
    let mut env = Env::new(ctx, task)?;
    let mut state = worker.net.initial_state();
    let mut stats = EpisodeStats {
        success: false,
        length: 0,
        ret: 0.0,
        updates: 0,
        rejected: 0,
        actions: Vec::new(),
        rewards: Vec::new(),
    };
    let mut caches: Vec<StepCache> = Vec::with_capacity(cfg.rollout_len);
    let mut outcomes: Vec<StepOutcome> = Vec::with_capacity(cfg.rollout_len);
    let mut actions: Vec<Action> = Vec::with_capacity(cfg.rollout_len);
    let mut next = worker.net.step(&env.observation(), &state)?;
    loop {
        let sampled = Action::from_index(sample_categorical(&next.head.probs, &mut worker.rng));
        let action = match action_override.as_mut() {
            Some(f) => f(&env, &next.head.probs).unwrap_or(sampled),
            None => sampled,
        };
        let j = env.step(action)?;
        stats.length += 1;
        stats.ret += j.reward;
        stats.actions.push(action);
        stats.rewards.push(j.reward);
        stats.success |= j.success;
        outcomes.push(StepOutcome {
            log_prob: next.head.log_probs[action.index()],
            value: next.head.value,
            entropy: next.head.entropy,
            reward: j.reward,
        });
        actions.push(action);
        state = next.state;
        caches.push(next.cache);

        let finished = env.is_finished() || stats.length >= cfg.max_steps;
        let following = if finished {
            None
        } else {
            Some(worker.net.step(&env.observation(), &state)?)
        };
        if finished || outcomes.len() >= cfg.rollout_len {
            let bootstrap = following.as_ref().map_or(0.0, |f| f.head.value);
            let loss = a3c_loss(&outcomes, bootstrap, &loss_cfg)?;
            let flat = worker.net.backward(&caches, &step_grads(&actions, &loss))?;
            match shared.apply(worker.id, &flat) {
                Ok(_) => stats.updates += 1,
                Err(Error::NonFiniteGradient) => stats.rejected += 1,
                Err(e) => return Err(e),
            }
            worker.refresh(shared)?;
            caches.clear();
            outcomes.clear();
            actions.clear();
            if finished {
                return Ok(stats);
            }
            // recompute the pending step under the refreshed parameters
            next = worker.net.step(&env.observation(), &state)?;
        } else {
            next = following.expect("episode continues");
        }
    }
}

/// Where `train` writes its metrics CSV and checkpoints.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub dir: PathBuf,
}

impl TrainOutput {
    pub fn metrics_path(&self) -> PathBuf {
        self.dir.join("metrics.csv")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.dir.join("checkpoint.bin")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Sorted by episode index.
    pub records: Vec<EpisodeRecord>,
    pub rejected: u64,
}

fn open_metrics(path: &Path, append: bool) -> Result<csv::Writer<File>> {
    let exists = path.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(append)
        .write(true)
        .truncate(!append)
        .open(path)?;
    Ok(csv::WriterBuilder::new()
        .has_headers(!(append && exists))
        .from_writer(file))
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

struct Run<'a> {
    ctx: &'a TaskContext,
    world: &'a WorldSet,
    cfg: &'a TrainConfig,
    dims: ModelDims,
    shared: SharedParams,
    next_episode: AtomicU64,
    completed: AtomicU64,
    stop: AtomicBool,
    records: Mutex<Vec<EpisodeRecord>>,
    metrics: Mutex<Option<csv::Writer<File>>>,
    output: Option<&'a TrainOutput>,
    started: Instant,
}

impl Run<'_> {
    fn checkpoint(&self, episodes: u64) -> Checkpoint {
        let snap = self.shared.snapshot();
        Checkpoint {
            dims: self.dims,
            mode: self.cfg.graph_mode,
            episodes,
            version: snap.version,
            params: snap.params,
            adam: snap.adam,
        }
    }

    fn worker_loop(&self, id: usize, start_episode: u64) -> Result<()> {
        let rng = stream(self.cfg.seed, &[0x776f_726b, id as u64, start_episode]);
        let net = Network::new(Model::zeros(self.dims, self.cfg.graph_mode), Arc::clone(&self.ctx.graph))?;
        let mut worker = Worker::new(id, net, rng);
        worker.refresh(&self.shared)?;
        while !self.stop.load(Ordering::Relaxed) {
            let episode = self.next_episode.fetch_add(1, Ordering::SeqCst);
            if episode >= self.cfg.max_episodes {
                break;
            }
            let task = sample_task(self.world, Split::Train, self.ctx, &mut worker.rng)?;
            let stats = run_episode(self.ctx, &mut worker, task, &self.shared, self.cfg, None)?;
            let record = EpisodeRecord {
                episode,
                worker: id,
                room: task.floorplan.room_type,
                target: self.ctx.catalog.name(task.target).to_string(),
                success: stats.success,
                length: stats.length,
                ret: stats.ret,
                wallclock_ms: self.started.elapsed().as_millis() as u64,
            };
            if let Some(w) = self.metrics.lock().unwrap_or_else(|e| e.into_inner()).as_mut() {
                w.serialize(&record)?;
            }
            self.records.lock().unwrap_or_else(|e| e.into_inner()).push(record);
            let done = self.completed.fetch_add(1, Ordering::SeqCst) + 1;
            if let Some(out) = self.output {
                if self.cfg.checkpoint_every > 0 && done.is_multiple_of(self.cfg.checkpoint_every) {
                    if let Some(w) = self.metrics.lock().unwrap_or_else(|e| e.into_inner()).as_mut() {
                        w.flush()?;
                    }
                    self.checkpoint(done).save(&out.checkpoint_path())?;
                }
            }
        }
        Ok(())
    }
}

/// Trains until `cfg.max_episodes` episodes have completed in total (counting
/// those already in `resume`).
pub fn train(
    cfg: &TrainConfig,
    ctx: &TaskContext,
    world: &WorldSet,
    dims: ModelDims,
    resume: Option<Checkpoint>,
    output: Option<&TrainOutput>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    dims.validate()?;
    if dims.nodes != ctx.nodes() || dims.embed_dim != ctx.embeddings.dim {
        return Err(Error::shape(
            "model dimensions vs knowledge artifacts",
            format!("{} nodes, embedding {}", ctx.nodes(), ctx.embeddings.dim),
            format!("{} nodes, embedding {}", dims.nodes, dims.embed_dim),
        ));
    }
    if ctx.max_steps != cfg.max_steps {
        return Err(Error::Config(format!(
            "task max_steps {} differs from train.max_steps {}",
            ctx.max_steps, cfg.max_steps
        )));
    }
    for room in RoomType::ALL {
        if world.split(room, Split::Train).is_empty() {
            return Err(Error::InsufficientFloorplans {
                room: room.to_string(),
                split: Split::Train.name(),
                need: 1,
                have: 0,
            });
        }
    }
    let (shared, start) = match resume {
        Some(c) => {
            if c.dims != dims || c.mode != cfg.graph_mode {
                return Err(Error::Config("checkpoint dimensions or graph mode differ from the config".into()));
            }
            (SharedParams::restore(c.params, c.adam, c.version, cfg.lr, cfg.clip_norm), c.episodes)
        }
        None => {
            let model = Model::init(dims, cfg.graph_mode, cfg.seed);
            (SharedParams::new(model.to_flat(), cfg.lr, cfg.clip_norm), 0)
        }
    };
    let metrics = match output {
        Some(out) => {
            std::fs::create_dir_all(&out.dir)?;
            Some(open_metrics(&out.metrics_path(), start > 0)?)
        }
        None => None,
    };
    let run = Run {
        ctx,
        world,
        cfg,
        dims,
        shared,
        next_episode: AtomicU64::new(start),
        completed: AtomicU64::new(start),
        stop: AtomicBool::new(false),
        records: Mutex::new(Vec::new()),
        metrics: Mutex::new(metrics),
        output,
        started: Instant::now(),
    };
    let results: Vec<Result<()>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.workers)
            .map(|id| {
                let run = &run;
                s.spawn(move || {
                    let r = run.worker_loop(id, start);
                    if r.is_err() {
                        run.stop.store(true, Ordering::Relaxed);
                    }
                    r
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Config("worker thread panicked".into()))))
            .collect()
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;

    if let Some(w) = run.metrics.lock().unwrap_or_else(|e| e.into_inner()).as_mut() {
        w.flush()?;
    }
    let checkpoint = run.checkpoint(run.completed.load(Ordering::SeqCst));
    if let Some(out) = output {
        checkpoint.save(&out.checkpoint_path())?;
    }
    let mut records = run.records.into_inner().unwrap_or_else(|e| e.into_inner());
    records.sort_by_key(|r| r.episode);
    Ok(TrainOutcome {
        checkpoint,
        records,
        rejected: run.shared.rejected(),
    })
}
