//! Independent reference implementations shared by the oracle and acceptance
//! tests. Each check returns what it measured; callers decide pass/fail.
#![allow(dead_code)]

use std::collections::HashMap;

use objnav::catalog::{Catalog, ClassId, RoomType};
use objnav::cgn::{forward, CgnDims, CgnParams, NodeFeatures};
use objnav::context::ContextMatrix;
use objnav::knowledge::{build_partial_reward_matrix, shipped_reward_matrix, PartialRewardMatrix};
use objnav::linalg::Matrix;
use objnav::reward::{judge, RewardConfig, SeenList};
use objnav::rng::stream;
use objnav::world::{
    generate_floorplan, optimal_path_length, step, target_visible, Action, AgentPose, Floorplan, WorldConfig, HEADINGS,
    PITCHES,
};
use rand::seq::SliceRandom;
use rand::Rng;

// ---- CGN forward vs triple loops ----

fn naive_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for l in 0..k {
                s += a[i][l] * b[l][j];
            }
            out[i][j] = s;
        }
    }
    out
}

fn relu(m: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    m.into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect()
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn random_matrix(r: usize, c: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

/// Largest absolute difference between `cgn::forward` and triple loops over
/// graphs of 1..=`max_nodes` nodes.
pub fn cgn_oracle_max_err(seed: u64, max_nodes: usize) -> f64 {
    let mut rng = stream(seed, &[1]);
    let mut worst = 0.0f64;
    for n in 1..=max_nodes {
        let dims = CgnDims {
            nodes: n,
            embed_dim: 3,
            h1: 5,
            h2: 4,
            h3: 3,
        };
        let params = CgnParams::init(&dims, &mut rng);
        let adj = Matrix::from_fn(n, n, |i, j| if i == j { 0.5 } else { (i + j) as f64 / 20.0 });
        let x = random_matrix(n, n + 3, &mut rng);
        let c = random_matrix(n, 5, &mut rng);
        let (out, _) = forward(
            &params,
            &adj,
            &NodeFeatures(x.clone()),
            &ContextMatrix::from_matrix(c.clone()).unwrap(),
        )
        .unwrap();

        let a = rows(&adj);
        let h1 = relu(naive_matmul(&naive_matmul(&a, &rows(&x)), &rows(&params.w0)));
        let h2 = relu(naive_matmul(&naive_matmul(&a, &h1), &rows(&params.w1)));
        let cat: Vec<Vec<f64>> = h2.iter().zip(rows(&c)).map(|(h, c)| [h.clone(), c].concat()).collect();
        let h3 = relu(naive_matmul(&naive_matmul(&a, &cat), &rows(&params.w2)));
        let flat: Vec<f64> = h3.into_iter().flatten().collect();
        assert_eq!(out.len(), flat.len());
        for (o, e) in out.iter().zip(&flat) {
            worst = worst.max((o - e).abs());
        }
    }
    worst
}

// ---- optimal path length vs relaxation ----

/// Bellman–Ford style relaxation over every pose until nothing changes.
fn brute_force_path_length(fp: &Floorplan, start: AgentPose, target: ClassId, catalog: &Catalog, world: &WorldConfig) -> Option<usize> {
    let mut poses = Vec::new();
    for (i, j) in fp.free_cells() {
        for h in 0..HEADINGS as i32 {
            for p in PITCHES {
                poses.push(AgentPose::new((i, j), h * 45, p));
            }
        }
    }
    let mut dist: HashMap<AgentPose, usize> = poses
        .iter()
        .filter(|p| target_visible(fp, p, target, catalog, &world.detector))
        .map(|&p| (p, 0))
        .collect();
    loop {
        let mut changed = false;
        for &p in &poses {
            for a in Action::MOVES {
                if let Some(&d) = dist.get(&step(fp, p, a)) {
                    if dist.get(&p).is_none_or(|&cur| d + 1 < cur) {
                        dist.insert(p, d + 1);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist.get(&start).copied()
}

pub struct PathCheck {
    pub floorplans: usize,
    pub queries: usize,
    pub mismatches: usize,
}

/// Compares `optimal_path_length` with relaxation on `want` random 8×8
/// floorplans, three queries each.
pub fn path_oracle(want: usize) -> PathCheck {
    let catalog = Catalog::standard();
    let cfg = WorldConfig {
        rows: 8,
        cols: 8,
        ..WorldConfig::default()
    };
    let mut check = PathCheck {
        floorplans: 0,
        queries: 0,
        mismatches: 0,
    };
    for k in 0..(want as u64 * 10) {
        if check.floorplans == want {
            break;
        }
        // large furniture does not always fit on the small grid
        let Ok(fp) = generate_floorplan(1000 + k, RoomType::ALL[k as usize % 4], &cfg, &catalog) else {
            continue;
        };
        check.floorplans += 1;
        let mut rng = stream(k, &[7]);
        let targets = fp.present_targets(&catalog);
        let cells = fp.reachable_cells();
        for _ in 0..3 {
            let target = *targets.choose(&mut rng).unwrap();
            let cell = *cells.choose(&mut rng).unwrap();
            let start = AgentPose::new(cell, rng.gen_range(0..HEADINGS as i32) * 45, *PITCHES.choose(&mut rng).unwrap());
            let fast = optimal_path_length(&fp, &start, target, &catalog, &cfg.detector).ok();
            let slow = brute_force_path_length(&fp, start, target, &catalog, &cfg);
            check.queries += 1;
            if fast != slow {
                check.mismatches += 1;
            }
        }
    }
    check
}

// ---- reward function vs a literal transcription ----

/// The reward procedure written out step by step, keeping its own seen list.
struct Transcription {
    seen: Vec<ClassId>,
}

impl Transcription {
    fn step(
        &mut self,
        visible: &[ClassId],
        target_visible: bool,
        action: Action,
        target: ClassId,
        m: &PartialRewardMatrix,
        cfg: &RewardConfig,
    ) -> (f64, bool, bool) {
        let t = m.targets.iter().position(|&x| x == target).unwrap();
        let mut partial = None;
        let consider = action != Action::Done || target_visible;
        if cfg.shaping && consider {
            let mut candidates: Vec<(ClassId, f64)> = m
                .parents
                .iter()
                .zip(&m.values[t])
                .filter(|(p, _)| visible.contains(p) && !self.seen.contains(p))
                .map(|(&p, &w)| (p, w))
                .collect();
            candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            if let Some(&(p, w)) = candidates.first() {
                self.seen.push(p);
                partial = Some(w * cfg.target_reward * cfg.parent_scale);
            }
        }
        if action == Action::Done {
            if target_visible {
                self.seen.clear();
                return (cfg.target_reward + partial.unwrap_or(0.0), true, true);
            }
            return (-cfg.step_penalty, true, false);
        }
        (partial.unwrap_or(-cfg.step_penalty), false, false)
    }
}

fn random_matrix_for(room: RoomType, catalog: &Catalog, rng: &mut impl Rng) -> PartialRewardMatrix {
    let targets = catalog.targets(room);
    let parents = catalog.parents(room);
    // coarse values so ties are common
    let values = targets
        .iter()
        .map(|_| {
            let raw: Vec<f64> = parents.iter().map(|_| rng.gen_range(0..4) as f64).collect();
            let s: f64 = raw.iter().sum::<f64>().max(1.0);
            raw.iter().map(|v| v / s).collect()
        })
        .collect();
    PartialRewardMatrix {
        room_type: room,
        targets,
        parents,
        values,
    }
}

/// Runs `cases` judged steps against the transcription; returns how many
/// disagreed on reward, termination, success or the seen list.
pub fn judge_fuzz(seed: u64, cases: usize) -> usize {
    let catalog = Catalog::standard();
    let mut rng = stream(seed, &[0x6a75]);
    let mut done = 0;
    let mut mismatches = 0;
    while done < cases {
        let room = RoomType::ALL[rng.gen_range(0..4)];
        let m = if rng.gen_bool(0.5) {
            shipped_reward_matrix(room, &catalog).unwrap()
        } else {
            random_matrix_for(room, &catalog, &mut rng)
        };
        let cfg = RewardConfig {
            shaping: rng.gen_bool(0.8),
            ..RewardConfig::default()
        };
        let target = *m.targets.choose(&mut rng).unwrap();
        let mut seen = SeenList::new();
        let mut oracle = Transcription { seen: Vec::new() };
        for _ in 0..rng.gen_range(1..30) {
            let visible: Vec<ClassId> = (0..catalog.len()).filter(|_| rng.gen_bool(0.15)).collect();
            let tv = rng.gen_bool(0.2);
            let action = Action::ALL[rng.gen_range(0..Action::COUNT)];
            let j = judge(&visible, tv, action, target, &mut seen, &m, &cfg).unwrap();
            let (r, terminal, success) = oracle.step(&visible, tv, action, target, &m, &cfg);
            done += 1;
            let mut expect = oracle.seen.clone();
            expect.sort_unstable();
            if (j.reward, j.terminal, j.success) != (r, terminal, success) || seen.iter().collect::<Vec<_>>() != expect {
                mismatches += 1;
            }
            if terminal {
                break;
            }
        }
    }
    mismatches
}

/// The two worked rewards from the shipped kitchen table: a first sighting of
/// StoveBurner while looking for a Toaster, and a successful Done on a Toaster
/// with the Sink in view.
pub fn worked_rewards() -> (f64, f64) {
    let cat = Catalog::standard();
    let m = shipped_reward_matrix(RoomType::Kitchen, &cat).unwrap();
    let cfg = RewardConfig::default();
    let toaster = cat.id("Toaster").unwrap();
    let parent = judge(
        &[cat.id("StoveBurner").unwrap()],
        false,
        Action::MoveAhead,
        toaster,
        &mut SeenList::new(),
        &m,
        &cfg,
    )
    .unwrap();
    let done = judge(&[cat.id("Sink").unwrap()], true, Action::Done, toaster, &mut SeenList::new(), &m, &cfg).unwrap();
    (parent.reward, done.reward)
}

// ---- partial reward matrix vs pair counting ----

/// Worst entry error against pair counting and worst row-sum error over
/// `floorplans` generated floorplans.
pub fn pair_count_oracle(floorplans: u64) -> (f64, f64) {
    let catalog = Catalog::standard();
    let cfg = WorldConfig::default();
    let (mut entry, mut row_sum) = (0.0f64, 0.0f64);
    for k in 0..floorplans {
        let room = RoomType::ALL[k as usize % 4];
        let fp = generate_floorplan(300 + k, room, &cfg, &catalog).unwrap();
        let m = build_partial_reward_matrix(&[&fp], room, 1.0, &catalog).unwrap();
        for (r, &t) in m.targets.iter().enumerate() {
            let mut counts = Vec::new();
            for &p in &m.parents {
                let mut c = 0u32;
                for a in fp.objects.iter().filter(|o| o.class == t) {
                    for b in fp.objects.iter().filter(|o| o.class == p) {
                        let (dx, dy) = (a.position.0 - b.position.0, a.position.1 - b.position.1);
                        if dx.hypot(dy) <= 1.0 {
                            c += 1;
                        }
                    }
                }
                counts.push(c as f64);
            }
            let total: f64 = counts.iter().sum();
            let expect: Vec<f64> = if total == 0.0 {
                vec![1.0 / counts.len() as f64; counts.len()]
            } else {
                counts.iter().map(|c| c / total).collect()
            };
            for (got, want) in m.values[r].iter().zip(&expect) {
                entry = entry.max((got - want).abs());
            }
            row_sum = row_sum.max((m.values[r].iter().sum::<f64>() - 1.0).abs());
        }
    }
    (entry, row_sum)
}
