use std::collections::VecDeque;

use super::{step, target_visible, Action, AgentPose, DetectorConfig, Floorplan, HEADINGS, PITCHES};
use crate::catalog::{Catalog, ClassId};
use crate::error::{Error, Result};

/// Dense indexing of (cell, heading, pitch) states of one floorplan.
#[derive(Debug, Clone, Copy)]
pub struct StateSpace {
    rows: usize,
    cols: usize,
}

impl StateSpace {
    pub fn new(fp: &Floorplan) -> Self {
        StateSpace {
            rows: fp.rows,
            cols: fp.cols,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols * HEADINGS * PITCHES.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, p: &AgentPose) -> usize {
        ((p.cell.0 * self.cols + p.cell.1) * HEADINGS + p.heading_index()) * PITCHES.len() + p.pitch_index()
    }

    pub fn pose(&self, idx: usize) -> AgentPose {
        let pitch = PITCHES[idx % PITCHES.len()];
        let rest = idx / PITCHES.len();
        let heading = (rest % HEADINGS) as i32 * 45;
        let cell = rest / HEADINGS;
        AgentPose::new((cell / self.cols, cell % self.cols), heading, pitch)
    }
}

/// Minimum number of non-`Done` actions from `start` to any state in which
/// `target` is visible.
pub fn optimal_path_length(
    fp: &Floorplan,
    start: &AgentPose,
    target: ClassId,
    catalog: &Catalog,
    cfg: &DetectorConfig,
) -> Result<usize> {
    shortest_action_path(fp, start, target, catalog, cfg).map(|p| p.len())
}

/// One shortest action sequence (breadth-first, actions tried in declaration
/// order) that ends with `target` visible.
pub fn shortest_action_path(
    fp: &Floorplan,
    start: &AgentPose,
    target: ClassId,
    catalog: &Catalog,
    cfg: &DetectorConfig,
) -> Result<Vec<Action>> {
    if !fp.contains_class(target) {
        return Err(Error::TargetAbsent {
            class: catalog.name(target).to_string(),
            floorplan: fp.id.clone(),
        });
    }
    let space = StateSpace::new(fp);
    let mut parent: Vec<Option<(usize, Action)>> = vec![None; space.len()];
    let mut seen = vec![false; space.len()];
    let start_idx = space.index(start);
    seen[start_idx] = true;
    let mut queue = VecDeque::from([start_idx]);

    while let Some(idx) = queue.pop_front() {
        let pose = space.pose(idx);
        if target_visible(fp, &pose, target, catalog, cfg) {
            let mut actions = Vec::new();
            let mut cur = idx;
            while let Some((prev, a)) = parent[cur] {
                actions.push(a);
                cur = prev;
            }
            actions.reverse();
            return Ok(actions);
        }
        for a in Action::MOVES {
            let next = space.index(&step(fp, pose, a));
            if !seen[next] {
                seen[next] = true;
                parent[next] = Some((idx, a));
                queue.push_back(next);
            }
        }
    }
    Err(Error::Unreachable {
        class: catalog.name(target).to_string(),
        floorplan: fp.id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::RoomType;
    use crate::world::{ObjectInstance, Split};

    fn with_mug_at(pos: (f64, f64)) -> (Floorplan, Catalog, ClassId) {
        let cat = Catalog::standard();
        let mug = cat.id("Mug").unwrap();
        let fp = Floorplan::new(
            "p",
            RoomType::Kitchen,
            (12, 12),
            0.25,
            vec![ObjectInstance {
                class: mug,
                position: pos,
                footprint: (0.1, 0.1),
            }],
            Split::Train,
            &cat,
        )
        .unwrap();
        (fp, cat, mug)
    }

    #[test]
    fn already_visible_is_zero() {
        let (fp, cat, mug) = with_mug_at((1.625, 0.625));
        let start = AgentPose::new((2, 2), 0, 0); // center (0.625, 0.625), 1 m away
        assert_eq!(optimal_path_length(&fp, &start, mug, &cat, &DetectorConfig::default()).unwrap(), 0);
    }

    #[test]
    fn one_move_short_of_threshold() {
        // 1.625 m dead ahead, one MoveAhead brings it to 1.375 m
        let (fp, cat, mug) = with_mug_at((2.25, 0.625));
        let start = AgentPose::new((2, 2), 0, 0);
        let path = shortest_action_path(&fp, &start, mug, &cat, &DetectorConfig::default()).unwrap();
        assert_eq!(path, vec![Action::MoveAhead]);
    }

    #[test]
    fn absent_target_errors() {
        let (fp, cat, _) = with_mug_at((1.0, 1.0));
        let apple = cat.id("Apple").unwrap();
        let r = optimal_path_length(&fp, &AgentPose::new((0, 0), 0, 0), apple, &cat, &DetectorConfig::default());
        assert!(matches!(r, Err(Error::TargetAbsent { .. })));
    }

    #[test]
    fn state_index_round_trips() {
        let (fp, _, _) = with_mug_at((1.0, 1.0));
        let space = StateSpace::new(&fp);
        for idx in [0, 1, 17, space.len() - 1] {
            assert_eq!(space.index(&space.pose(idx)), idx);
        }
    }
}
