//! Line-delimited JSON trajectory dumps and their re-scoring.
//!
//! A dump is one header record, one record per step, and a closing summary.
//! The header carries the target's reward-matrix row and the reward constants,
//! so a dump can be replayed without the world it came from.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, RoomType};
use crate::error::{Error, Result};
use crate::eval::{Episode, TerminationMode};
use crate::knowledge::PartialRewardMatrix;
use crate::reward::{judge, RewardConfig, SeenList};
use crate::task::{Task, TaskContext};
use crate::world::{Action, AgentPose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub agent: String,
    pub mode: TerminationMode,
    pub floorplan: String,
    pub room: RoomType,
    pub target: String,
    pub start: AgentPose,
    pub optimal: usize,
    pub reward: RewardConfig,
    /// Parent columns of the room's reward matrix.
    pub parents: Vec<String>,
    /// The target's row, aligned with `parents`.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpStep {
    pub t: usize,
    /// Pose after the action.
    pub pose: AgentPose,
    pub action: Action,
    pub reward: f64,
    pub visible: Vec<String>,
    /// Row-major `|O| × 5` context matrix the agent acted on.
    pub context: Vec<f64>,
    pub probs: Option<[f64; Action::COUNT]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpSummary {
    pub steps: usize,
    pub success: bool,
    #[serde(rename = "return")]
    pub ret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DumpRecord {
    Header(DumpHeader),
    Step(DumpStep),
    Summary(DumpSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDump {
    pub header: DumpHeader,
    pub steps: Vec<DumpStep>,
    pub summary: DumpSummary,
}

impl TrajectoryDump {
    /// Packages a recorded episode (run with `record = true`).
    pub fn from_episode(
        agent: &str,
        mode: TerminationMode,
        ctx: &TaskContext,
        task: &Task,
        episode: &Episode,
    ) -> Result<Self> {
        let room = task.floorplan.room_type;
        let m = ctx.reward_matrix(room);
        let row = m
            .row(task.target)
            .ok_or_else(|| Error::UnknownTarget(ctx.catalog.name(task.target).to_string()))?;
        let cat = &ctx.catalog;
        let names = |ids: &[usize]| ids.iter().map(|&c| cat.name(c).to_string()).collect::<Vec<_>>();
        let header = DumpHeader {
            agent: agent.to_string(),
            mode,
            floorplan: task.floorplan.id.clone(),
            room,
            target: cat.name(task.target).to_string(),
            start: task.start,
            optimal: episode.result.optimal,
            reward: ctx.reward,
            parents: names(&m.parents),
            weights: row.to_vec(),
        };
        let steps = episode
            .steps
            .iter()
            .enumerate()
            .map(|(t, s)| DumpStep {
                t,
                pose: s.pose,
                action: s.action,
                reward: s.reward,
                visible: names(&s.visible),
                context: s.context.clone(),
                probs: s.probs,
            })
            .collect();
        Ok(TrajectoryDump {
            header,
            steps,
            summary: DumpSummary {
                steps: episode.steps.len(),
                success: episode.result.success,
                ret: episode.ret,
            },
        })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut line = |r: DumpRecord| -> Result<()> {
            serde_json::to_writer(&mut *w, &r)?;
            w.write_all(b"\n")?;
            Ok(())
        };
        line(DumpRecord::Header(self.header.clone()))?;
        for s in &self.steps {
            line(DumpRecord::Step(s.clone()))?;
        }
        line(DumpRecord::Summary(self.summary.clone()))
    }

    pub fn read_from(r: impl BufRead, source: &str) -> Result<Self> {
        let mut header = None;
        let mut steps = Vec::new();
        let mut summary = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DumpRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(source, i + 1, e.to_string()))?;
            match (rec, &header, &summary) {
                (DumpRecord::Header(h), None, None) => header = Some(h),
                (DumpRecord::Step(s), Some(_), None) => steps.push(s),
                (DumpRecord::Summary(s), Some(_), None) => summary = Some(s),
                _ => return Err(Error::parse(source, i + 1, "record out of order")),
            }
        }
        let header = header.ok_or_else(|| Error::parse(source, 0, "missing header record"))?;
        let summary = summary.ok_or_else(|| Error::parse(source, 0, "missing summary record"))?;
        Ok(TrajectoryDump { header, steps, summary })
    }
}

/// One disagreement between a dump and its re-scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayDiff {
    /// Step index, or `None` for episode-level fields.
    pub step: Option<usize>,
    pub field: &'static str,
    pub recorded: String,
    pub replayed: String,
}

/// Re-scores every step through the reward function and lists what differs.
pub fn replay(dump: &TrajectoryDump, catalog: &Catalog) -> Result<Vec<ReplayDiff>> {
    let h = &dump.header;
    if h.parents.len() != h.weights.len() {
        return Err(Error::shape("dump reward row", h.parents.len(), h.weights.len()));
    }
    let target = catalog.id(&h.target)?;
    let m = PartialRewardMatrix {
        room_type: h.room,
        targets: vec![target],
        parents: h.parents.iter().map(|p| catalog.id(p)).collect::<Result<_>>()?,
        values: vec![h.weights.clone()],
    };
    let mut diffs = Vec::new();
    let mut diff = |step, field, recorded: String, replayed: String| {
        if recorded != replayed {
            diffs.push(ReplayDiff {
                step,
                field,
                recorded,
                replayed,
            });
        }
    };
    let mut seen = SeenList::new();
    let mut ret = 0.0;
    let mut success = false;
    let last = dump.steps.len().saturating_sub(1);
    for (t, s) in dump.steps.iter().enumerate() {
        diff(Some(t), "t", s.t.to_string(), t.to_string());
        let visible = s.visible.iter().map(|c| catalog.id(c)).collect::<Result<Vec<_>>>()?;
        let j = judge(&visible, visible.contains(&target), s.action, target, &mut seen, &m, &h.reward)?;
        diff(Some(t), "reward", format!("{:?}", s.reward), format!("{:?}", j.reward));
        if j.terminal && t != last {
            diff(Some(t), "terminal", "false".into(), "true".into());
        }
        ret += j.reward;
        success = j.success;
        if t == last && !j.terminal && h.mode == TerminationMode::SampledOrEnv && visible.contains(&target) {
            success = true;
        }
    }
    diff(None, "steps", dump.summary.steps.to_string(), dump.steps.len().to_string());
    diff(None, "success", dump.summary.success.to_string(), success.to_string());
    if (dump.summary.ret - ret).abs() > 1e-9 {
        diff(None, "return", format!("{:?}", dump.summary.ret), format!("{ret:?}"));
    }
    Ok(diffs)
}
