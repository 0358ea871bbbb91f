//! Procedural grid-world rooms, agent kinematics and the ground-truth detector.

mod detect;
mod generate;
mod io;
mod path;

pub use detect::{detect, is_visible, target_visible, visible_classes, Detection, DetectorConfig};
pub use generate::{generate_floorplan, generate_world_set, WorldSet};
pub use io::{load_floorplan, load_floorplan_dir, parse_floorplan, save_floorplan, write_floorplan};
pub use path::{optimal_path_length, shortest_action_path, StateSpace};

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ClassId, RoomType};
use crate::error::{Error, Result};

pub const HEADINGS: usize = 8;
pub const PITCHES: [i32; 3] = [-30, 0, 30];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    /// Probability that a target spawns within `anchor_radius` of its
    /// highest-probability parent.
    pub co_placement_bias: f64,
    pub anchor_radius: f64,
    pub min_targets: usize,
    pub max_targets: usize,
    pub background_count: usize,
    pub max_attempts: usize,
    pub train_per_room: usize,
    pub test_per_room: usize,
    pub detector: DetectorConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            rows: 12,
            cols: 12,
            cell_size: 0.25,
            co_placement_bias: 0.7,
            anchor_radius: 1.0,
            min_targets: 3,
            max_targets: 6,
            background_count: 3,
            max_attempts: 500,
            train_per_room: 20,
            test_per_room: 10,
            detector: DetectorConfig::default(),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("world grid must be non-empty".into()));
        }
        if !(self.cell_size > 0.0) {
            return Err(Error::Config("cell_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.co_placement_bias) {
            return Err(Error::Config("co_placement_bias must lie in [0, 1]".into()));
        }
        if self.min_targets == 0 || self.min_targets > self.max_targets {
            return Err(Error::Config("need 1 <= min_targets <= max_targets".into()));
        }
        self.detector.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInstance {
    pub class: ClassId,
    /// Center (x, y) in meters; x runs along columns, y along rows.
    pub position: (f64, f64),
    /// Extent (w along x, d along y) in meters.
    pub footprint: (f64, f64),
}

impl ObjectInstance {
    fn covers(&self, x: f64, y: f64) -> bool {
        let (cx, cy) = self.position;
        let (w, d) = self.footprint;
        (x - cx).abs() <= w / 2.0 && (y - cy).abs() <= d / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Floorplan {
    pub id: String,
    pub room_type: RoomType,
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    pub objects: Vec<ObjectInstance>,
    pub split: Split,
    occupied: Vec<bool>,
}

impl Floorplan {
    /// Builds a floorplan and derives its occupancy grid: a cell is blocked when
    /// its center lies inside the footprint of an instance of a blocking class.
    pub fn new(
        id: impl Into<String>,
        room_type: RoomType,
        (rows, cols): (usize, usize),
        cell_size: f64,
        objects: Vec<ObjectInstance>,
        split: Split,
        catalog: &Catalog,
    ) -> Result<Self> {
        let id = id.into();
        let (width, height) = (cols as f64 * cell_size, rows as f64 * cell_size);
        for o in &objects {
            if o.class >= catalog.len() {
                return Err(Error::UnknownClass(format!("class id {}", o.class)));
            }
            let (x, y) = o.position;
            if !(0.0..=width).contains(&x) || !(0.0..=height).contains(&y) {
                return Err(Error::Config(format!(
                    "{} at ({x}, {y}) lies outside floorplan {id}",
                    catalog.name(o.class)
                )));
            }
            if !(o.footprint.0 > 0.0 && o.footprint.1 > 0.0) {
                return Err(Error::Config(format!(
                    "{} has a non-positive footprint",
                    catalog.name(o.class)
                )));
            }
        }
        let mut occupied = vec![false; rows * cols];
        for o in objects.iter().filter(|o| catalog.get(o.class).blocks) {
            for i in 0..rows {
                for j in 0..cols {
                    let (x, y) = cell_center((i, j), cell_size);
                    if o.covers(x, y) {
                        occupied[i * cols + j] = true;
                    }
                }
            }
        }
        Ok(Floorplan {
            id,
            room_type,
            rows,
            cols,
            cell_size,
            objects,
            split,
            occupied,
        })
    }

    #[inline]
    pub fn in_bounds(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.rows && (j as usize) < self.cols
    }

    #[inline]
    pub fn is_free(&self, (i, j): (usize, usize)) -> bool {
        i < self.rows && j < self.cols && !self.occupied[i * self.cols + j]
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        (0..self.rows)
            .flat_map(|i| (0..self.cols).map(move |j| (i, j)))
            .filter(|&c| self.is_free(c))
            .collect()
    }

    /// Free cells reachable from the first free cell under the agent's
    /// 8-neighbour movement.
    pub fn reachable_cells(&self) -> Vec<(usize, usize)> {
        let Some(&start) = self.free_cells().first() else {
            return Vec::new();
        };
        let mut seen = vec![false; self.rows * self.cols];
        let mut queue = VecDeque::from([start]);
        seen[start.0 * self.cols + start.1] = true;
        let mut out = Vec::new();
        while let Some((i, j)) = queue.pop_front() {
            out.push((i, j));
            for h in 0..HEADINGS {
                let (di, dj) = heading_delta(h as i32 * 45);
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if self.in_bounds(ni, nj) {
                    let c = (ni as usize, nj as usize);
                    if self.is_free(c) && !seen[c.0 * self.cols + c.1] {
                        seen[c.0 * self.cols + c.1] = true;
                        queue.push_back(c);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn instances_of(&self, class: ClassId) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.iter().filter(move |o| o.class == class)
    }

    pub fn contains_class(&self, class: ClassId) -> bool {
        self.objects.iter().any(|o| o.class == class)
    }

    /// Targets of this room type that have at least one instance here.
    pub fn present_targets(&self, catalog: &Catalog) -> Vec<ClassId> {
        catalog
            .targets(self.room_type)
            .into_iter()
            .filter(|&t| self.contains_class(t))
            .collect()
    }

    /// Checks the structural invariants: at least one free cell, free cells
    /// form a single component, every present target visible from some
    /// reachable cell.
    pub fn validate(&self, catalog: &Catalog, detector: &DetectorConfig) -> Result<()> {
        let free = self.free_cells();
        if free.is_empty() {
            return Err(Error::Config(format!("floorplan {} has no free cell", self.id)));
        }
        let reachable = self.reachable_cells();
        if reachable.len() != free.len() {
            return Err(Error::Config(format!(
                "floorplan {} has disconnected free space",
                self.id
            )));
        }
        for t in self.present_targets(catalog) {
            let ok = self.instances_of(t).any(|o| {
                reachable
                    .iter()
                    .any(|&c| distance(cell_center(c, self.cell_size), o.position) <= detector.visibility_distance)
            });
            if !ok {
                return Err(Error::Unreachable {
                    class: catalog.name(t).to_string(),
                    floorplan: self.id.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentPose {
    /// (row, col)
    pub cell: (usize, usize),
    /// Degrees, multiple of 45 in [0, 360).
    pub heading: i32,
    /// Degrees, one of -30, 0, 30; positive looks up.
    pub pitch: i32,
}

impl AgentPose {
    pub fn new(cell: (usize, usize), heading: i32, pitch: i32) -> Self {
        AgentPose { cell, heading, pitch }
    }

    pub fn heading_index(&self) -> usize {
        (self.heading / 45) as usize
    }

    pub fn pitch_index(&self) -> usize {
        ((self.pitch + 30) / 30) as usize
    }

    pub fn is_valid(&self, fp: &Floorplan) -> bool {
        fp.is_free(self.cell)
            && self.heading.rem_euclid(45) == 0
            && (0..360).contains(&self.heading)
            && PITCHES.contains(&self.pitch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    MoveAhead,
    RotateLeft,
    RotateRight,
    LookUp,
    LookDown,
    Done,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; 6] = [
        Action::MoveAhead,
        Action::RotateLeft,
        Action::RotateRight,
        Action::LookUp,
        Action::LookDown,
        Action::Done,
    ];
    /// Every action except `Done`.
    pub const MOVES: [Action; 5] = [
        Action::MoveAhead,
        Action::RotateLeft,
        Action::RotateRight,
        Action::LookUp,
        Action::LookDown,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::MoveAhead => "MoveAhead",
            Action::RotateLeft => "RotateLeft",
            Action::RotateRight => "RotateRight",
            Action::LookUp => "LookUp",
            Action::LookDown => "LookDown",
            Action::Done => "Done",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Grid displacement (di, dj) for one MoveAhead at `heading` degrees. Heading 0
/// points along +col, 90 along +row.
pub fn heading_delta(heading: i32) -> (i64, i64) {
    match heading.rem_euclid(360) {
        0 => (0, 1),
        45 => (1, 1),
        90 => (1, 0),
        135 => (1, -1),
        180 => (0, -1),
        225 => (-1, -1),
        270 => (-1, 0),
        315 => (-1, 1),
        h => panic!("heading {h} is not a multiple of 45"),
    }
}

/// Applies one action. Blocked moves and `Done` leave the pose unchanged.
pub fn step(fp: &Floorplan, pose: AgentPose, action: Action) -> AgentPose {
    match action {
        Action::MoveAhead => {
            let (di, dj) = heading_delta(pose.heading);
            let (ni, nj) = (pose.cell.0 as i64 + di, pose.cell.1 as i64 + dj);
            if fp.in_bounds(ni, nj) && fp.is_free((ni as usize, nj as usize)) {
                AgentPose {
                    cell: (ni as usize, nj as usize),
                    ..pose
                }
            } else {
                pose
            }
        }
        Action::RotateLeft => AgentPose {
            heading: (pose.heading + 45).rem_euclid(360),
            ..pose
        },
        Action::RotateRight => AgentPose {
            heading: (pose.heading - 45).rem_euclid(360),
            ..pose
        },
        Action::LookUp => AgentPose {
            pitch: (pose.pitch + 30).min(30),
            ..pose
        },
        Action::LookDown => AgentPose {
            pitch: (pose.pitch - 30).max(-30),
            ..pose
        },
        Action::Done => pose,
    }
}

/// Uniform over reachable cells and the eight headings, level pitch.
pub fn spawn(fp: &Floorplan, seed: u64) -> AgentPose {
    spawn_with(fp, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn spawn_with(fp: &Floorplan, rng: &mut impl Rng) -> AgentPose {
    let cells = fp.reachable_cells();
    assert!(!cells.is_empty(), "floorplan {} has no reachable cell", fp.id);
    let cell = cells[rng.gen_range(0..cells.len())];
    let heading = rng.gen_range(0..HEADINGS as i32) * 45;
    AgentPose::new(cell, heading, 0)
}

pub fn cell_center((i, j): (usize, usize), cell_size: f64) -> (f64, f64) {
    ((j as f64 + 0.5) * cell_size, (i as f64 + 0.5) * cell_size)
}

pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}
