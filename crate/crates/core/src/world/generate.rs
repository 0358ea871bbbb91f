use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{cell_center, distance, Floorplan, ObjectInstance, Split, WorldConfig, HEADINGS};
use crate::catalog::{Catalog, ClassId, RoomType};
use crate::error::{Error, Result};
use crate::knowledge::shipped_reward_matrix;
use crate::rng::stream;

/// Training and test floorplans for every room type.
#[derive(Debug, Clone)]
pub struct WorldSet {
    pub floorplans: Vec<Floorplan>,
}

impl WorldSet {
    pub fn new(floorplans: Vec<Floorplan>) -> Self {
        WorldSet { floorplans }
    }

    pub fn split(&self, room: RoomType, split: Split) -> Vec<&Floorplan> {
        self.floorplans
            .iter()
            .filter(|f| f.room_type == room && f.split == split)
            .collect()
    }

    pub fn all_of(&self, split: Split) -> Vec<&Floorplan> {
        self.floorplans.iter().filter(|f| f.split == split).collect()
    }
}

/// Generates `train_per_room + test_per_room` floorplans per room type. The
/// first `train_per_room` of each room form the training split.
pub fn generate_world_set(seed: u64, cfg: &WorldConfig, catalog: &Catalog) -> Result<WorldSet> {
    let per_room = cfg.train_per_room + cfg.test_per_room;
    let mut floorplans = Vec::with_capacity(per_room * 4);
    for room in RoomType::ALL {
        for idx in 0..per_room {
            let mut fp = generate_with_retries(seed, room, idx, cfg, catalog)?;
            fp.id = format!("{}_{idx:03}", room.slug());
            fp.split = if idx < cfg.train_per_room { Split::Train } else { Split::Test };
            floorplans.push(fp);
        }
    }
    Ok(WorldSet { floorplans })
}

/// Crowded layouts occasionally fail to place an object; later attempts draw
/// fresh seeds.
const WORLD_ATTEMPTS: u64 = 20;

fn generate_with_retries(seed: u64, room: RoomType, idx: usize, cfg: &WorldConfig, catalog: &Catalog) -> Result<Floorplan> {
    let mut last = None;
    for attempt in 0..WORLD_ATTEMPTS {
        let path: &[u64] = if attempt == 0 {
            &[room.index() as u64, idx as u64]
        } else {
            &[room.index() as u64, idx as u64, attempt]
        };
        match generate_floorplan(crate::rng::derive_seed(seed, path), room, cfg, catalog) {
            Ok(fp) => return Ok(fp),
            Err(e @ (Error::Unplaceable { .. } | Error::Unreachable { .. })) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Deterministic in `(seed, room, cfg)`. Places every parent of the room, a
/// random subset of its targets (biased toward their strongest parent) and
/// some background clutter.
pub fn generate_floorplan(seed: u64, room: RoomType, cfg: &WorldConfig, catalog: &Catalog) -> Result<Floorplan> {
    cfg.validate()?;
    let mut rng = stream(seed, &[0x0066_6c6f_6f72, room.index() as u64]);
    let mut b = Builder::new(cfg, catalog);

    for parent in catalog.parents(room) {
        b.place(&mut rng, parent, None)?;
    }

    let anchors = shipped_reward_matrix(room, catalog)?;
    let mut targets = catalog.targets(room);
    let hi = cfg.max_targets.min(targets.len());
    let lo = cfg.min_targets.min(hi);
    let count = rng.gen_range(lo..=hi);
    targets.shuffle(&mut rng);
    targets.truncate(count);
    targets.sort_unstable();
    for t in targets {
        let anchor = if rng.gen_bool(cfg.co_placement_bias) {
            anchors
                .argmax_parent(t)
                .and_then(|p| b.objects.iter().find(|o| o.class == p))
                .map(|o| o.position)
        } else {
            None
        };
        b.place(&mut rng, t, anchor)?;
        b.targets.push(b.objects.len() - 1);
    }

    let background = catalog.background();
    for _ in 0..cfg.background_count {
        let class = background[rng.gen_range(0..background.len())];
        b.place(&mut rng, class, None)?;
    }

    let fp = Floorplan::new(
        format!("{}_{seed:016x}", room.slug()),
        room,
        (cfg.rows, cfg.cols),
        cfg.cell_size,
        b.objects,
        Split::Train,
        catalog,
    )?;
    debug_assert!(fp.validate(catalog, &cfg.detector).is_ok());
    Ok(fp)
}

struct Builder<'a> {
    cfg: &'a WorldConfig,
    catalog: &'a Catalog,
    occupied: Vec<bool>,
    objects: Vec<ObjectInstance>,
    /// indices into `objects`
    targets: Vec<usize>,
}

impl<'a> Builder<'a> {
    fn new(cfg: &'a WorldConfig, catalog: &'a Catalog) -> Self {
        Builder {
            cfg,
            catalog,
            occupied: vec![false; cfg.rows * cfg.cols],
            objects: Vec::new(),
            targets: Vec::new(),
        }
    }

    fn width(&self) -> f64 {
        self.cfg.cols as f64 * self.cfg.cell_size
    }

    fn height(&self) -> f64 {
        self.cfg.rows as f64 * self.cfg.cell_size
    }

    fn place(&mut self, rng: &mut impl Rng, class: ClassId, anchor: Option<(f64, f64)>) -> Result<()> {
        let info = self.catalog.get(class);
        let is_target = info.role == crate::catalog::ObjectRole::Target;
        for _ in 0..self.cfg.max_attempts {
            let accepted = if info.blocks {
                self.try_blocking(rng, class, anchor, is_target)
            } else {
                self.try_point(rng, class, anchor, is_target)
            };
            if accepted {
                return Ok(());
            }
        }
        Err(Error::Unplaceable {
            class: info.name.clone(),
            attempts: self.cfg.max_attempts,
        })
    }

    fn try_point(&mut self, rng: &mut impl Rng, class: ClassId, anchor: Option<(f64, f64)>, is_target: bool) -> bool {
        let (w, d) = self.catalog.get(class).footprint;
        let (w, d) = if rng.gen_bool(0.5) { (w, d) } else { (d, w) };
        let position = match anchor {
            Some((ax, ay)) => {
                let r = self.cfg.anchor_radius * rng.gen::<f64>().sqrt();
                let theta = rng.gen::<f64>() * std::f64::consts::TAU;
                (ax + r * theta.cos(), ay + r * theta.sin())
            }
            None => (rng.gen::<f64>() * self.width(), rng.gen::<f64>() * self.height()),
        };
        if !(0.0..=self.width()).contains(&position.0) || !(0.0..=self.height()).contains(&position.1) {
            return false;
        }
        if let Some(a) = anchor {
            if distance(a, position) > self.cfg.anchor_radius {
                return false;
            }
        }
        let inst = ObjectInstance {
            class,
            position,
            footprint: (w, d),
        };
        if is_target && !self.observable(&inst, &self.occupied) {
            return false;
        }
        self.objects.push(inst);
        true
    }

    fn try_blocking(&mut self, rng: &mut impl Rng, class: ClassId, anchor: Option<(f64, f64)>, is_target: bool) -> bool {
        let cs = self.cfg.cell_size;
        let (w, d) = self.catalog.get(class).footprint;
        let (w, d) = if rng.gen_bool(0.5) { (w, d) } else { (d, w) };
        let span_c = ((w / cs) - 1e-9).ceil().max(1.0) as usize;
        let span_r = ((d / cs) - 1e-9).ceil().max(1.0) as usize;
        if span_c > self.cfg.cols || span_r > self.cfg.rows {
            return false;
        }
        let i0 = rng.gen_range(0..=self.cfg.rows - span_r);
        let j0 = rng.gen_range(0..=self.cfg.cols - span_c);
        let cells: Vec<usize> = (i0..i0 + span_r)
            .flat_map(|i| (j0..j0 + span_c).map(move |j| (i, j)))
            .map(|(i, j)| i * self.cfg.cols + j)
            .collect();
        if cells.iter().any(|&c| self.occupied[c]) {
            return false;
        }
        let inst = ObjectInstance {
            class,
            position: ((j0 as f64 + span_c as f64 / 2.0) * cs, (i0 as f64 + span_r as f64 / 2.0) * cs),
            footprint: (span_c as f64 * cs, span_r as f64 * cs),
        };
        if let Some(a) = anchor {
            if distance(a, inst.position) > self.cfg.anchor_radius {
                return false;
            }
        }
        let mut occupied = self.occupied.clone();
        for &c in &cells {
            occupied[c] = true;
        }
        if !self.connected(&occupied) {
            return false;
        }
        if is_target && !self.observable(&inst, &occupied) {
            return false;
        }
        let targets_ok = self
            .targets
            .iter()
            .all(|&t| self.observable(&self.objects[t], &occupied));
        if !targets_ok {
            return false;
        }
        self.occupied = occupied;
        self.objects.push(inst);
        true
    }

    /// Some free cell lies within the visibility distance of the instance.
    fn observable(&self, inst: &ObjectInstance, occupied: &[bool]) -> bool {
        let limit = self.cfg.detector.visibility_distance;
        (0..occupied.len()).any(|c| {
            !occupied[c]
                && distance(cell_center((c / self.cfg.cols, c % self.cfg.cols), self.cfg.cell_size), inst.position)
                    <= limit
        })
    }

    /// Free cells are non-empty and form one component under 8-neighbour moves.
    fn connected(&self, occupied: &[bool]) -> bool {
        let cols = self.cfg.cols as i64;
        let rows = self.cfg.rows as i64;
        let free = occupied.iter().filter(|o| !**o).count();
        let Some(start) = occupied.iter().position(|o| !o) else {
            return false;
        };
        let mut seen = vec![false; occupied.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut count = 0;
        while let Some(c) = queue.pop_front() {
            count += 1;
            let (i, j) = ((c as i64) / cols, (c as i64) % cols);
            for h in 0..HEADINGS {
                let (di, dj) = super::heading_delta(h as i32 * 45);
                let (ni, nj) = (i + di, j + dj);
                if ni < 0 || nj < 0 || ni >= rows || nj >= cols {
                    continue;
                }
                let n = (ni * cols + nj) as usize;
                if !occupied[n] && !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        count == free
    }
}
