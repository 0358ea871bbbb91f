//! Parent/target shaped reward with a per-episode seen list.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::catalog::ClassId;
use crate::error::{Error, Result};
use crate::knowledge::PartialRewardMatrix;
use crate::world::Action;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub target_reward: f64,
    /// Scale of the parent reward relative to `target_reward`.
    pub parent_scale: f64,
    pub step_penalty: f64,
    /// When false, parents never pay out: every non-terminal step costs
    /// `step_penalty` and success pays `target_reward` alone.
    pub shaping: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            target_reward: 5.0,
            parent_scale: 0.1,
            step_penalty: 0.01,
            shaping: true,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_reward > 0.0) {
            return Err(Error::Config("reward.target_reward must be > 0".into()));
        }
        if !(self.parent_scale > 0.0 && self.parent_scale < 1.0) {
            return Err(Error::Config("reward.parent_scale must lie in (0, 1)".into()));
        }
        if !(self.step_penalty >= 0.0) {
            return Err(Error::Config("reward.step_penalty must be >= 0".into()));
        }
        Ok(())
    }

    pub fn unshaped() -> Self {
        RewardConfig {
            shaping: false,
            ..Self::default()
        }
    }
}

/// Parents already paid out this episode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeenList(BTreeSet<ClassId>);

impl SeenList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, parent: ClassId) -> bool {
        self.0.contains(&parent)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.0.iter().copied()
    }

    /// Empties the list; called at episode start and after a successful stop.
    pub fn reset(&mut self) {
        self.0.clear();
    }
}

impl FromIterator<ClassId> for SeenList {
    fn from_iter<I: IntoIterator<Item = ClassId>>(iter: I) -> Self {
        SeenList(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Judgement {
    pub reward: f64,
    /// Parent that paid out this step, if any.
    pub rewarded_parent: Option<ClassId>,
    pub terminal: bool,
    pub success: bool,
}

/// Scores one transition. `visible_parents` may contain any class ids; only
/// the parent columns of `m` are eligible.
pub fn judge(
    visible_parents: &[ClassId],
    target_visible: bool,
    action: Action,
    target: ClassId,
    seen: &mut SeenList,
    m: &PartialRewardMatrix,
    cfg: &RewardConfig,
) -> Result<Judgement> {
    let row = m
        .row(target)
        .ok_or_else(|| Error::UnknownTarget(format!("class {target} has no {} row", m.room_type)))?;
    let partial = |seen: &mut SeenList| -> Option<(ClassId, f64)> {
        if !cfg.shaping {
            return None;
        }
        // Highest M[t][p] among visible, unseen parents; ties to the lowest id.
        let mut best: Option<(ClassId, f64)> = None;
        for (col, &p) in m.parents.iter().enumerate() {
            if seen.contains(p) || !visible_parents.contains(&p) {
                continue;
            }
            let v = row[col];
            match best {
                Some((bp, bv)) if bv > v || (bv == v && bp < p) => {}
                _ => best = Some((p, v)),
            }
        }
        let (p, v) = best?;
        seen.0.insert(p);
        Some((p, v * cfg.target_reward * cfg.parent_scale))
    };

    if action != Action::Done {
        let (reward, rewarded_parent) = match partial(seen) {
            Some((p, r)) => (r, Some(p)),
            None => (-cfg.step_penalty, None),
        };
        return Ok(Judgement {
            reward,
            rewarded_parent,
            terminal: false,
            success: false,
        });
    }
    if target_visible {
        let found = partial(seen);
        seen.reset();
        return Ok(Judgement {
            reward: cfg.target_reward + found.map_or(0.0, |(_, r)| r),
            rewarded_parent: found.map(|(p, _)| p),
            terminal: true,
            success: true,
        });
    }
    Ok(Judgement {
        reward: -cfg.step_penalty,
        rewarded_parent: None,
        terminal: true,
        success: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Catalog, RoomType};
    use crate::knowledge::shipped_reward_matrix;

    fn kitchen() -> (Catalog, PartialRewardMatrix) {
        let cat = Catalog::standard();
        let m = shipped_reward_matrix(RoomType::Kitchen, &cat).unwrap();
        (cat, m)
    }

    #[test]
    fn parent_in_view_pays_once() {
        let (cat, m) = kitchen();
        let cfg = RewardConfig::default();
        let toaster = cat.id("Toaster").unwrap();
        let stove = cat.id("StoveBurner").unwrap();
        let mut seen = SeenList::new();
        let j = judge(&[stove], false, Action::MoveAhead, toaster, &mut seen, &m, &cfg).unwrap();
        assert!((j.reward - 0.145).abs() < 1e-12);
        assert_eq!(seen, SeenList::from_iter([stove]));
        let j = judge(&[stove], false, Action::MoveAhead, toaster, &mut seen, &m, &cfg).unwrap();
        assert_eq!(j.reward, -0.01);
        seen.reset();
        assert!(seen.is_empty());
        let j = judge(&[stove], false, Action::MoveAhead, toaster, &mut seen, &m, &cfg).unwrap();
        assert!((j.reward - 0.145).abs() < 1e-12);
    }

    #[test]
    fn nothing_visible_costs_step_penalty() {
        let (cat, m) = kitchen();
        let mut seen = SeenList::new();
        let j = judge(&[], false, Action::RotateLeft, cat.id("Toaster").unwrap(), &mut seen, &m, &RewardConfig::default()).unwrap();
        assert_eq!(j.reward, -0.01);
        assert!(!j.terminal);
    }

    #[test]
    fn success_adds_parent_reward() {
        let (cat, m) = kitchen();
        let toaster = cat.id("Toaster").unwrap();
        let sink = cat.id("Sink").unwrap();
        let mut seen = SeenList::new();
        let j = judge(&[sink], true, Action::Done, toaster, &mut seen, &m, &RewardConfig::default()).unwrap();
        assert!((j.reward - 5.075).abs() < 1e-12);
        assert!(j.success && j.terminal);
        assert!(seen.is_empty());
    }

    #[test]
    fn early_stop_fails() {
        let (cat, m) = kitchen();
        let mut seen = SeenList::new();
        let j = judge(&[], false, Action::Done, cat.id("Toaster").unwrap(), &mut seen, &m, &RewardConfig::default()).unwrap();
        assert_eq!(j.reward, -0.01);
        assert!(j.terminal && !j.success);
    }

    #[test]
    fn highest_parent_wins() {
        let (cat, m) = kitchen();
        let toaster = cat.id("Toaster").unwrap();
        let stove = cat.id("StoveBurner").unwrap();
        let sink = cat.id("Sink").unwrap();
        let mut seen = SeenList::new();
        let j = judge(&[sink, stove], false, Action::LookUp, toaster, &mut seen, &m, &RewardConfig::default()).unwrap();
        assert_eq!(j.rewarded_parent, Some(stove));
    }

    #[test]
    fn unshaped_ignores_parents() {
        let (cat, m) = kitchen();
        let toaster = cat.id("Toaster").unwrap();
        let stove = cat.id("StoveBurner").unwrap();
        let cfg = RewardConfig::unshaped();
        let mut seen = SeenList::new();
        let j = judge(&[stove], false, Action::MoveAhead, toaster, &mut seen, &m, &cfg).unwrap();
        assert_eq!(j.reward, -0.01);
        let j = judge(&[stove], true, Action::Done, toaster, &mut seen, &m, &cfg).unwrap();
        assert_eq!(j.reward, 5.0);
    }

    #[test]
    fn unknown_target_is_an_error() {
        let (cat, m) = kitchen();
        let mut seen = SeenList::new();
        let bed = cat.id("Bed").unwrap();
        assert!(matches!(
            judge(&[], false, Action::Done, bed, &mut seen, &m, &RewardConfig::default()),
            Err(Error::UnknownTarget(_))
        ));
    }
}
