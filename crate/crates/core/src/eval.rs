//! Success rate, success weighted by path length, evaluation agents and the
//! per-room report.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{ClassId, RoomType};
use crate::error::{Error, Result};
use crate::model::{Model, Network};
use crate::policy::{sample_categorical, LstmState};
use crate::rng::stream;
use crate::task::{sample_task_in, Env, Task, TaskContext};
use crate::world::{shortest_action_path, Action, AgentPose, Split, WorldSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    /// Optimal number of non-`Done` actions from the start pose.
    pub optimal: usize,
    /// Actions taken, not counting a terminating `Done`.
    pub actions: usize,
    pub room: RoomType,
    pub target: ClassId,
}

impl EpisodeResult {
    /// This episode's SPL term. Successful episodes with a zero-length optimal
    /// path count 1.
    pub fn spl_term(&self) -> f64 {
        if !self.success {
            return 0.0;
        }
        if self.optimal == 0 {
            return 1.0;
        }
        self.optimal as f64 / self.optimal.max(self.actions) as f64
    }
}

pub fn sr(results: &[EpisodeResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Empty("episode results"));
    }
    Ok(results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}

pub fn spl(results: &[EpisodeResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Empty("episode results"));
    }
    Ok(results.iter().map(EpisodeResult::spl_term).sum::<f64>() / results.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationMode {
    /// Episodes end only when the agent samples `Done` (or at the step cap).
    SampledDone,
    /// Additionally ends, successfully, as soon as the target is visible.
    SampledOrEnv,
}

impl TerminationMode {
    pub fn name(self) -> &'static str {
        match self {
            TerminationMode::SampledDone => "sampled_done",
            TerminationMode::SampledOrEnv => "sampled_or_env",
        }
    }
}

impl std::str::FromStr for TerminationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled_done" => Ok(TerminationMode::SampledDone),
            "sampled_or_env" => Ok(TerminationMode::SampledOrEnv),
            _ => Err(Error::Config(format!("unknown termination mode {s:?}"))),
        }
    }
}

/// An action choice, with the policy distribution when there is one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub probs: Option<[f64; Action::COUNT]>,
}

pub trait Agent {
    fn name(&self) -> String;
    /// Called once at the start of every episode.
    fn begin(&mut self, env: &Env) -> Result<()>;
    fn act(&mut self, env: &Env, rng: &mut ChaCha8Rng) -> Result<Decision>;
}

/// Uniform over all six actions.
#[derive(Debug, Clone, Default)]
pub struct RandomAgent;

impl Agent for RandomAgent {
    fn name(&self) -> String {
        "random".into()
    }

    fn begin(&mut self, _env: &Env) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, _env: &Env, rng: &mut ChaCha8Rng) -> Result<Decision> {
        Ok(Decision {
            action: Action::from_index(rng.gen_range(0..Action::COUNT)),
            probs: Some([1.0 / Action::COUNT as f64; Action::COUNT]),
        })
    }
}

/// Follows a shortest path and stops as soon as the target is visible.
#[derive(Debug, Clone, Default)]
pub struct OracleAgent {
    plan: Vec<Action>,
    next: usize,
}

impl Agent for OracleAgent {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn begin(&mut self, env: &Env) -> Result<()> {
        let task = env.task();
        let ctx = env.context();
        self.plan = shortest_action_path(task.floorplan, &env.pose(), task.target, &ctx.catalog, &ctx.detector)?;
        self.next = 0;
        Ok(())
    }

    fn act(&mut self, env: &Env, _rng: &mut ChaCha8Rng) -> Result<Decision> {
        let action = if env.target_visible() || self.next >= self.plan.len() {
            Action::Done
        } else {
            self.next += 1;
            self.plan[self.next - 1]
        };
        Ok(Decision { action, probs: None })
    }
}

/// Samples from a trained network's policy.
#[derive(Debug, Clone)]
pub struct ModelAgent {
    name: String,
    net: Network,
    state: LstmState,
}

impl ModelAgent {
    pub fn new(name: impl Into<String>, model: Model, ctx: &TaskContext) -> Result<Self> {
        let net = Network::new(model, Arc::clone(&ctx.graph))?;
        let state = net.initial_state();
        Ok(ModelAgent {
            name: name.into(),
            net,
            state,
        })
    }
}

impl Agent for ModelAgent {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn begin(&mut self, _env: &Env) -> Result<()> {
        self.state = self.net.initial_state();
        Ok(())
    }

    fn act(&mut self, env: &Env, rng: &mut ChaCha8Rng) -> Result<Decision> {
        let out = self.net.step(&env.observation(), &self.state)?;
        self.state = out.state;
        let action = Action::from_index(sample_categorical(&out.head.probs, rng));
        Ok(Decision {
            action,
            probs: Some(out.head.probs),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes_per_room: usize,
    pub mode: TerminationMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes_per_room: 250,
            mode: TerminationMode::SampledDone,
        }
    }
}

/// One step of a recorded episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub pose: AgentPose,
    pub action: Action,
    pub reward: f64,
    /// Classes satisfying the visibility predicate after the action.
    pub visible: Vec<ClassId>,
    /// Context matrix the agent acted on, row-major `|O| × 5`.
    pub context: Vec<f64>,
    pub probs: Option<[f64; Action::COUNT]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub result: EpisodeResult,
    pub ret: f64,
    pub steps: Vec<StepRecord>,
}

/// Runs one evaluation episode. With `record`, every step is kept.
pub fn run_episode(
    agent: &mut dyn Agent,
    ctx: &TaskContext,
    task: Task,
    mode: TerminationMode,
    rng: &mut ChaCha8Rng,
    record: bool,
) -> Result<Episode> {
    let optimal = shortest_action_path(task.floorplan, &task.start, task.target, &ctx.catalog, &ctx.detector)?.len();
    let mut env = Env::new(ctx, task)?;
    agent.begin(&env)?;
    let mut steps = Vec::new();
    let mut ret = 0.0;
    let mut actions = 0;
    let mut success = false;
    while !env.is_finished() {
        let context = if record {
            env.observation().context.matrix().as_slice().to_vec()
        } else {
            Vec::new()
        };
        let d = agent.act(&env, rng)?;
        let j = env.step(d.action)?;
        ret += j.reward;
        if d.action != Action::Done {
            actions += 1;
        }
        success = j.success;
        if record {
            steps.push(StepRecord {
                pose: env.pose(),
                action: d.action,
                reward: j.reward,
                visible: env.visible_classes(),
                context,
                probs: d.probs,
            });
        }
        if !j.terminal && mode == TerminationMode::SampledOrEnv && env.target_visible() {
            success = true;
            break;
        }
    }
    Ok(Episode {
        result: EpisodeResult {
            success,
            optimal,
            actions,
            room: task.floorplan.room_type,
            target: task.target,
        },
        ret,
        steps,
    })
}

/// The task and action stream of evaluation episode `index` in `room`; the
/// same for every agent and mode under one seed.
pub fn eval_task<'w>(
    world: &'w WorldSet,
    ctx: &TaskContext,
    room: RoomType,
    index: usize,
    seed: u64,
) -> Result<(Task<'w>, ChaCha8Rng)> {
    let mut task_rng = stream(seed, &[0x6576_616c, room.index() as u64, index as u64]);
    let task = sample_task_in(world, room, Split::Test, ctx, &mut task_rng)?;
    let act_rng = stream(seed, &[0x6163_7473, room.index() as u64, index as u64]);
    Ok((task, act_rng))
}

pub fn evaluate(
    agent: &mut dyn Agent,
    ctx: &TaskContext,
    world: &WorldSet,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<EvalReport> {
    if cfg.episodes_per_room == 0 {
        return Err(Error::Config("eval.episodes_per_room must be positive".into()));
    }
    for room in RoomType::ALL {
        if world.split(room, Split::Test).is_empty() {
            return Err(Error::InsufficientFloorplans {
                room: room.to_string(),
                split: Split::Test.name(),
                need: 1,
                have: 0,
            });
        }
    }
    let mut results = Vec::with_capacity(cfg.episodes_per_room * RoomType::ALL.len());
    for room in RoomType::ALL {
        for i in 0..cfg.episodes_per_room {
            let (task, mut rng) = eval_task(world, ctx, room, i, seed)?;
            results.push(run_episode(agent, ctx, task, cfg.mode, &mut rng, false)?.result);
        }
    }
    Ok(EvalReport {
        agent: agent.name(),
        mode: cfg.mode,
        results,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub episodes: usize,
    pub sr: f64,
    pub spl: f64,
}

fn summarize<'a>(results: impl Iterator<Item = &'a EpisodeResult>) -> Summary {
    let r: Vec<EpisodeResult> = results.copied().collect();
    Summary {
        episodes: r.len(),
        sr: sr(&r).unwrap_or(0.0),
        spl: spl(&r).unwrap_or(0.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub agent: String,
    pub mode: TerminationMode,
    pub results: Vec<EpisodeResult>,
}

impl EvalReport {
    /// SR and SPL over episodes with optimal length at least `min_len`,
    /// optionally restricted to one room.
    pub fn summary(&self, min_len: usize, room: Option<RoomType>) -> Summary {
        summarize(
            self.results
                .iter()
                .filter(|r| r.optimal >= min_len && room.is_none_or(|room| r.room == room)),
        )
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "agent {}  mode {}", self.agent, self.mode.name());
        let _ = writeln!(s, "{:<12} {:>6} {:>7} {:>7} {:>6} {:>7} {:>7}", "room", "n(L≥1)", "SR", "SPL", "n(L≥5)", "SR", "SPL");
        let rows = RoomType::ALL.iter().map(|&r| (r.name(), Some(r))).chain([("all", None)]);
        for (label, room) in rows {
            let a = self.summary(1, room);
            let b = self.summary(5, room);
            let _ = writeln!(
                s,
                "{:<12} {:>6} {:>7.3} {:>7.3} {:>6} {:>7.3} {:>7.3}",
                label, a.episodes, a.sr, a.spl, b.episodes, b.sr, b.spl
            );
        }
        s
    }

    pub fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["agent", "mode", "room", "filter", "episodes", "sr", "spl"])?;
        let rooms = RoomType::ALL.iter().map(|&r| (r.slug(), Some(r))).chain([("all", None)]);
        for (label, room) in rooms {
            for min_len in [1, 5] {
                let s = self.summary(min_len, room);
                w.write_record([
                    self.agent.clone(),
                    self.mode.name().to_string(),
                    label.to_string(),
                    format!("L>={min_len}"),
                    s.episodes.to_string(),
                    format!("{:.6}", s.sr),
                    format!("{:.6}", s.spl),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
