//! Central finite-difference check of the full network gradient on a small
//! synthetic rollout.

use std::sync::Arc;

use rand::Rng;

use crate::context::{ContextMatrix, CONTEXT_DIM};
use crate::error::Result;
use crate::knowledge::normalize_adjacency;
use crate::linalg::Matrix;
use crate::model::{GraphData, GraphMode, Model, ModelDims, Network, Observation};
use crate::policy::{LossConfig, LstmState};
use crate::rng::stream;
use crate::world::Action;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOLERANCE: f64 = 1e-4;

/// Worst relative error within one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub name: &'static str,
    pub len: usize,
    pub max_rel_err: f64,
}

/// `|a − n| / max(|a|, |n|, 1e-3·scale)` where `scale` is the largest
/// gradient magnitude in the block; entries far below the block's scale are
/// judged against it rather than against their own size, where finite
/// differences have no relative precision.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * scale).max(1e-10);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn numeric_gradient(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = f(&probe)?;
        probe[i] = x[i] - eps;
        let down = f(&probe)?;
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * eps);
    }
    Ok(g)
}

/// A fixed rollout with random inputs, for gradient checking.
#[derive(Debug, Clone)]
pub struct SyntheticRollout {
    pub graph: Arc<GraphData>,
    pub observations: Vec<Observation>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub bootstrap: f64,
    pub state: LstmState,
}

pub fn synthetic_rollout(dims: &ModelDims, steps: usize, seed: u64) -> SyntheticRollout {
    let mut rng = stream(seed, &[0x6664]);
    let n = dims.nodes;
    let mut raw = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.5) {
                raw[(i, j)] = 1.0;
                raw[(j, i)] = 1.0;
            }
        }
    }
    let embeddings = Matrix::from_fn(n, dims.embed_dim, |_, _| rng.gen_range(-1.0..1.0));
    let observations = (0..steps)
        .map(|_| {
            let detected: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            let context = Matrix::from_fn(n, CONTEXT_DIM, |j, k| match (k, detected[j]) {
                (0, d) => f64::from(u8::from(d)),
                (4, _) => rng.gen_range(-1.0..1.0),
                (_, true) => rng.gen_range(0.0..1.0),
                (_, false) => 0.0,
            });
            Observation {
                detected: (0..n).filter(|&k| detected[k]).collect(),
                context: ContextMatrix::from_matrix(context).expect("context width"),
            }
        })
        .collect();
    let actions = (0..steps).map(|_| Action::from_index(rng.gen_range(0..Action::COUNT))).collect();
    let rewards = (0..steps).map(|_| rng.gen_range(-0.5..5.0)).collect();
    let state = LstmState {
        h: (0..dims.hidden).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        c: (0..dims.hidden).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    };
    SyntheticRollout {
        graph: Arc::new(GraphData {
            adjacency: normalize_adjacency(&raw),
            embeddings: Arc::new(embeddings),
        }),
        observations,
        actions,
        rewards,
        bootstrap: rng.gen_range(-1.0..1.0),
        state,
    }
}

pub fn small_dims() -> ModelDims {
    ModelDims {
        nodes: 4,
        embed_dim: 3,
        h1: 5,
        h2: 4,
        h3: 3,
        hidden: 6,
    }
}

/// The loss whose exact gradient the actor-critic update follows: advantages
/// are frozen at `advantages` so the policy term does not differentiate
/// through the critic.
pub fn surrogate_loss(net: &Network, roll: &SyntheticRollout, advantages: &[f64], cfg: &LossConfig) -> Result<f64> {
    let mut state = roll.state.clone();
    let mut returns = vec![0.0; roll.rewards.len()];
    let mut r = roll.bootstrap;
    for t in (0..returns.len()).rev() {
        r = roll.rewards[t] + cfg.gamma * r;
        returns[t] = r;
    }
    let mut total = 0.0;
    for t in 0..roll.actions.len() {
        let out = net.step(&roll.observations[t], &state)?;
        let adv = returns[t] - out.head.value;
        total += -out.head.log_probs[roll.actions[t].index()] * advantages[t] + cfg.value_coef * 0.5 * adv * adv
            - cfg.entropy_beta * out.head.entropy;
        state = out.state;
    }
    Ok(total)
}

/// Analytic vs numeric gradient of the rollout loss, per parameter block.
pub fn check_model(dims: ModelDims, mode: GraphMode, steps: usize, seed: u64) -> Result<Vec<BlockError>> {
    let model = Model::init(dims, mode, seed);
    let roll = synthetic_rollout(&dims, steps, seed);
    let cfg = LossConfig::default();
    let net = Network::new(model.clone(), Arc::clone(&roll.graph))?;
    let (loss, analytic) = net.rollout_loss(
        &roll.observations,
        &roll.actions,
        &roll.rewards,
        roll.bootstrap,
        &roll.state,
        &cfg,
    )?;
    // ∂L/∂log π = −A
    let advantages: Vec<f64> = loss.step_grads.iter().map(|g| -g.0).collect();
    let mut probe = net.clone();
    let numeric = numeric_gradient(&model.to_flat(), FD_STEP, |x| {
        probe.load_flat(x)?;
        surrogate_loss(&probe, &roll, &advantages, &cfg)
    })?;
    let mut at = 0;
    let mut out = Vec::new();
    for (name, len) in model.layout() {
        let range = at..at + len;
        out.push(BlockError {
            name,
            len,
            max_rel_err: relative_error(&analytic[range.clone()], &numeric[range]),
        });
        at += len;
    }
    Ok(out)
}

/// Gradient check of every block over `seeds` consecutive seeds starting at
/// `seed`; returns the worst error per block.
pub fn run_suite(seed: u64, seeds: u64) -> Result<Vec<BlockError>> {
    let mut worst: Vec<BlockError> = Vec::new();
    for s in seed..seed + seeds {
        for errs in check_model(small_dims(), GraphMode::Full, 3, s)? {
            match worst.iter_mut().find(|w| w.name == errs.name) {
                Some(w) => w.max_rel_err = w.max_rel_err.max(errs.max_rel_err),
                None => worst.push(errs),
            }
        }
    }
    Ok(worst)
}
