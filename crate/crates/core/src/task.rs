//! Shared read-only task data and the per-episode environment.

use std::sync::Arc;

use rand::Rng;

use crate::catalog::{Catalog, ClassId, RoomType};
use crate::context::target_similarity;
use crate::error::{Error, Result};
use crate::knowledge::{EmbeddingTable, KnowledgeGraph, PartialRewardMatrix};
use crate::model::{observe, GraphData, Observation};
use crate::reward::{judge, Judgement, RewardConfig, SeenList};
use crate::world::{self, detect, is_visible, AgentPose, Action, Detection, DetectorConfig, Floorplan, Split, WorldSet};

/// Everything an episode needs that does not change during training.
#[derive(Debug)]
pub struct TaskContext {
    pub catalog: Catalog,
    pub detector: DetectorConfig,
    pub embeddings: EmbeddingTable,
    pub graph: Arc<GraphData>,
    /// Indexed by [`RoomType::index`].
    pub reward_matrices: Vec<PartialRewardMatrix>,
    pub reward: RewardConfig,
    pub max_steps: usize,
    similarity: Vec<Vec<f64>>,
}

impl TaskContext {
    pub fn new(
        catalog: Catalog,
        detector: DetectorConfig,
        embeddings: EmbeddingTable,
        graph: &KnowledgeGraph,
        reward_matrices: Vec<PartialRewardMatrix>,
        reward: RewardConfig,
        max_steps: usize,
    ) -> Result<Arc<Self>> {
        let n = catalog.len();
        if embeddings.len() != n {
            return Err(Error::shape("embedding table rows", n, embeddings.len()));
        }
        if graph.num_nodes() != n || graph.node_order.iter().enumerate().any(|(k, &c)| k != c) {
            return Err(Error::shape("knowledge graph nodes", n, graph.num_nodes()));
        }
        if reward_matrices.len() != RoomType::ALL.len()
            || reward_matrices.iter().zip(RoomType::ALL).any(|(m, r)| m.room_type != r)
        {
            return Err(Error::Config("one partial reward matrix per room type, in room order".into()));
        }
        if max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        detector.validate()?;
        reward.validate()?;
        let similarity = (0..n).map(|t| target_similarity(t, &embeddings)).collect();
        let data = Arc::new(GraphData::new(graph.normalized.clone(), &embeddings)?);
        Ok(Arc::new(TaskContext {
            catalog,
            detector,
            embeddings,
            graph: data,
            reward_matrices,
            reward,
            max_steps,
            similarity,
        }))
    }

    pub fn nodes(&self) -> usize {
        self.catalog.len()
    }

    pub fn reward_matrix(&self, room: RoomType) -> &PartialRewardMatrix {
        &self.reward_matrices[room.index()]
    }

    pub fn similarity(&self, target: ClassId) -> &[f64] {
        &self.similarity[target]
    }
}

/// A navigation problem: floorplan, target and start pose.
#[derive(Debug, Clone, Copy)]
pub struct Task<'w> {
    pub floorplan: &'w Floorplan,
    pub target: ClassId,
    pub start: AgentPose,
}

/// Draws a room uniformly, then a floorplan of that room from `split`, then a
/// target present in it, then a spawn pose.
pub fn sample_task<'w>(world: &'w WorldSet, split: Split, ctx: &TaskContext, rng: &mut impl Rng) -> Result<Task<'w>> {
    let room = RoomType::ALL[rng.gen_range(0..RoomType::ALL.len())];
    sample_task_in(world, room, split, ctx, rng)
}

pub fn sample_task_in<'w>(
    world: &'w WorldSet,
    room: RoomType,
    split: Split,
    ctx: &TaskContext,
    rng: &mut impl Rng,
) -> Result<Task<'w>> {
    let pool = world.split(room, split);
    if pool.is_empty() {
        return Err(Error::InsufficientFloorplans {
            room: room.to_string(),
            split: split.name(),
            need: 1,
            have: 0,
        });
    }
    let floorplan = pool[rng.gen_range(0..pool.len())];
    let targets = floorplan.present_targets(&ctx.catalog);
    if targets.is_empty() {
        return Err(Error::TargetAbsent {
            class: "any target".into(),
            floorplan: floorplan.id.clone(),
        });
    }
    let target = targets[rng.gen_range(0..targets.len())];
    let start = world::spawn_with(floorplan, rng);
    Ok(Task {
        floorplan,
        target,
        start,
    })
}

/// One running episode.
#[derive(Debug, Clone)]
pub struct Env<'a> {
    ctx: &'a TaskContext,
    task: Task<'a>,
    pose: AgentPose,
    detections: Vec<Detection>,
    seen: SeenList,
    steps: usize,
    finished: bool,
}

impl<'a> Env<'a> {
    pub fn new(ctx: &'a TaskContext, task: Task<'a>) -> Result<Self> {
        if !task.floorplan.contains_class(task.target) {
            return Err(Error::TargetAbsent {
                class: ctx.catalog.name(task.target).to_string(),
                floorplan: task.floorplan.id.clone(),
            });
        }
        ctx.reward_matrix(task.floorplan.room_type)
            .row(task.target)
            .ok_or_else(|| Error::UnknownTarget(ctx.catalog.name(task.target).to_string()))?;
        let detections = detect(task.floorplan, &task.start, &ctx.catalog, &ctx.detector);
        Ok(Env {
            ctx,
            task,
            pose: task.start,
            detections,
            seen: SeenList::new(),
            steps: 0,
            finished: false,
        })
    }

    pub fn context(&self) -> &'a TaskContext {
        self.ctx
    }

    pub fn task(&self) -> &Task<'a> {
        &self.task
    }

    pub fn pose(&self) -> AgentPose {
        self.pose
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn seen(&self) -> &SeenList {
        &self.seen
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// The success predicate in the current state.
    pub fn target_visible(&self) -> bool {
        is_visible(&self.detections, self.task.target, &self.ctx.detector)
    }

    pub fn visible_parents(&self) -> Vec<ClassId> {
        let m = self.ctx.reward_matrix(self.task.floorplan.room_type);
        m.parents
            .iter()
            .copied()
            .filter(|&p| is_visible(&self.detections, p, &self.ctx.detector))
            .collect()
    }

    pub fn visible_classes(&self) -> Vec<ClassId> {
        crate::world::visible_classes(&self.detections, &self.ctx.detector)
    }

    pub fn observation(&self) -> Observation {
        observe(&self.detections, self.ctx.similarity(self.task.target))
    }

    /// Applies `action`, then scores it on the resulting state.
    pub fn step(&mut self, action: Action) -> Result<Judgement> {
        if self.finished {
            return Err(Error::Config("step called on a finished episode".into()));
        }
        if action != Action::Done {
            self.pose = world::step(self.task.floorplan, self.pose, action);
            self.detections = detect(self.task.floorplan, &self.pose, &self.ctx.catalog, &self.ctx.detector);
        }
        let j = judge(
            &self.visible_parents(),
            self.target_visible(),
            action,
            self.task.target,
            &mut self.seen,
            self.ctx.reward_matrix(self.task.floorplan.room_type),
            &self.ctx.reward,
        )?;
        self.steps += 1;
        self.finished = j.terminal || self.steps >= self.ctx.max_steps;
        Ok(j)
    }
}
