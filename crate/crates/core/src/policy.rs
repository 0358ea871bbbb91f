//! LSTM memory, actor-critic heads and the advantage actor-critic loss.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix};
use crate::world::Action;

/// Gate blocks inside the stacked `4H` pre-activation, in order.
const GATE_I: usize = 0;
const GATE_F: usize = 1;
const GATE_O: usize = 2;
const GATE_G: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4H × I`, gate blocks ordered input, forget, output, cell.
    pub w_x: Matrix,
    /// `4H × H`
    pub w_h: Matrix,
    /// `4H`
    pub bias: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w_x: Matrix::zeros(4 * hidden, input),
            w_h: Matrix::zeros(4 * hidden, hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input, hidden);
        let limit = 1.0 / (hidden as f64).sqrt();
        for w in p.w_x.as_mut_slice().iter_mut().chain(p.w_h.as_mut_slice()) {
            *w = rng.gen_range(-limit..limit);
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.w_h.cols()
    }

    pub fn input(&self) -> usize {
        self.w_x.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// post-activation gates, `4H`
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM cell step.
pub fn lstm_step(p: &LstmParams, x: &[f64], state: &LstmState) -> Result<(LstmState, LstmCache)> {
    let hidden = p.hidden();
    if x.len() != p.input() {
        return Err(Error::shape("lstm input", p.input(), x.len()));
    }
    if state.h.len() != hidden || state.c.len() != hidden {
        return Err(Error::shape("lstm state", hidden, state.h.len()));
    }
    let mut gates = p.bias.clone();
    for (k, g) in gates.iter_mut().enumerate() {
        *g += dot(p.w_x.row(k), x) + dot(p.w_h.row(k), &state.h);
    }
    for k in 0..4 * hidden {
        gates[k] = if k / hidden == GATE_G {
            gates[k].tanh()
        } else {
            sigmoid(gates[k])
        };
    }
    let mut c = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    let mut tanh_c = vec![0.0; hidden];
    for u in 0..hidden {
        let (i, f, o, g) = (
            gates[GATE_I * hidden + u],
            gates[GATE_F * hidden + u],
            gates[GATE_O * hidden + u],
            gates[GATE_G * hidden + u],
        );
        c[u] = f * state.c[u] + i * g;
        tanh_c[u] = c[u].tanh();
        h[u] = o * tanh_c[u];
    }
    let cache = LstmCache {
        x: x.to_vec(),
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        gates,
        tanh_c,
    };
    Ok((LstmState { h, c }, cache))
}

/// Upstream gradients flowing out of one cell step.
#[derive(Debug, Clone)]
pub struct LstmInputGrads {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

/// Backward through one step given `dL/dh'` and `dL/dc'`; parameter gradients
/// are accumulated into `grads`.
pub fn lstm_backward(
    p: &LstmParams,
    cache: &LstmCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmParams,
) -> LstmInputGrads {
    let hidden = p.hidden();
    let mut d_pre = vec![0.0; 4 * hidden];
    let mut dc_prev = vec![0.0; hidden];
    for u in 0..hidden {
        let (i, f, o, g) = (
            cache.gates[GATE_I * hidden + u],
            cache.gates[GATE_F * hidden + u],
            cache.gates[GATE_O * hidden + u],
            cache.gates[GATE_G * hidden + u],
        );
        let tc = cache.tanh_c[u];
        let d_o = dh[u] * tc;
        let d_c = dc[u] + dh[u] * o * (1.0 - tc * tc);
        let d_i = d_c * g;
        let d_f = d_c * cache.c_prev[u];
        let d_g = d_c * i;
        dc_prev[u] = d_c * f;
        d_pre[GATE_I * hidden + u] = d_i * i * (1.0 - i);
        d_pre[GATE_F * hidden + u] = d_f * f * (1.0 - f);
        d_pre[GATE_O * hidden + u] = d_o * o * (1.0 - o);
        d_pre[GATE_G * hidden + u] = d_g * (1.0 - g * g);
    }
    grads.w_x.add_outer(&d_pre, &cache.x);
    grads.w_h.add_outer(&d_pre, &cache.h_prev);
    axpy(1.0, &d_pre, &mut grads.bias);
    let mut dx = vec![0.0; p.input()];
    p.w_x.t_matvec_acc(&d_pre, &mut dx);
    let mut dh_prev = vec![0.0; hidden];
    p.w_h.t_matvec_acc(&d_pre, &mut dh_prev);
    LstmInputGrads { dx, dh_prev, dc_prev }
}

/// Actor (`6 × H`) and critic (`1 × H`) linear heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Heads {
    pub actor_w: Matrix,
    pub actor_b: Vec<f64>,
    pub critic_w: Vec<f64>,
    pub critic_b: f64,
}

impl Heads {
    pub fn zeros(hidden: usize) -> Self {
        Heads {
            actor_w: Matrix::zeros(Action::COUNT, hidden),
            actor_b: vec![0.0; Action::COUNT],
            critic_w: vec![0.0; hidden],
            critic_b: 0.0,
        }
    }

    /// Small actor weights so the initial policy is close to uniform.
    pub fn init(hidden: usize, rng: &mut impl Rng) -> Self {
        let mut h = Self::zeros(hidden);
        let limit = 1.0 / (hidden as f64).sqrt();
        for w in h.actor_w.as_mut_slice() {
            *w = 0.01 * rng.gen_range(-limit..limit);
        }
        for w in &mut h.critic_w {
            *w = rng.gen_range(-limit..limit);
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub lstm: LstmParams,
    pub heads: Heads,
}

impl PolicyParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        PolicyParams {
            lstm: LstmParams::zeros(input, hidden),
            heads: Heads::zeros(hidden),
        }
    }

    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        PolicyParams {
            lstm: LstmParams::init(input, hidden, rng),
            heads: Heads::init(hidden, rng),
        }
    }

    pub fn num_params(input: usize, hidden: usize) -> usize {
        4 * hidden * (input + hidden + 1) + Action::COUNT * (hidden + 1) + hidden + 1
    }
}

/// Concatenation `[obs | graph]`.
pub fn joint_embedding(obs: &[f64], graph: &[f64], expected: (usize, usize)) -> Result<Vec<f64>> {
    if obs.len() != expected.0 {
        return Err(Error::shape("observation vector", expected.0, obs.len()));
    }
    if graph.len() != expected.1 {
        return Err(Error::shape("graph embedding", expected.1, graph.len()));
    }
    let mut v = Vec::with_capacity(obs.len() + graph.len());
    v.extend_from_slice(obs);
    v.extend_from_slice(graph);
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub logits: [f64; Action::COUNT],
    pub probs: [f64; Action::COUNT],
    pub log_probs: [f64; Action::COUNT],
    pub value: f64,
    pub entropy: f64,
}

pub fn heads_forward(heads: &Heads, h: &[f64]) -> HeadOutput {
    let mut logits = [0.0; Action::COUNT];
    for (a, l) in logits.iter_mut().enumerate() {
        *l = dot(heads.actor_w.row(a), h) + heads.actor_b[a];
    }
    let value = dot(&heads.critic_w, h) + heads.critic_b;
    let (probs, log_probs) = softmax(&logits);
    let entropy = -probs.iter().zip(&log_probs).map(|(p, lp)| p * lp).sum::<f64>();
    HeadOutput {
        logits,
        probs,
        log_probs,
        value,
        entropy: entropy.max(0.0),
    }
}

fn softmax(logits: &[f64; Action::COUNT]) -> ([f64; Action::COUNT], [f64; Action::COUNT]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let mut log_probs = [0.0; Action::COUNT];
    let mut probs = [0.0; Action::COUNT];
    for a in 0..Action::COUNT {
        log_probs[a] = logits[a] - lse;
        probs[a] = log_probs[a].exp();
    }
    (probs, log_probs)
}

pub fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
    pub entropy: f64,
    pub probs: [f64; Action::COUNT],
}

/// Samples an action from the actor head at hidden state `h`.
pub fn act(heads: &Heads, h: &[f64], rng: &mut impl Rng) -> ActOutput {
    let out = heads_forward(heads, h);
    let a = sample_categorical(&out.probs, rng);
    ActOutput {
        action: Action::from_index(a),
        log_prob: out.log_probs[a],
        value: out.value,
        entropy: out.entropy,
        probs: out.probs,
    }
}

/// Gradient of a scalar loss w.r.t. the head inputs, given the loss gradient
/// w.r.t. the chosen log-probability, the value and the entropy.
pub fn heads_backward(
    heads: &Heads,
    h: &[f64],
    out: &HeadOutput,
    action: Action,
    d_log_prob: f64,
    d_value: f64,
    d_entropy: f64,
    grads: &mut Heads,
) -> Vec<f64> {
    let mut d_logits = [0.0; Action::COUNT];
    for k in 0..Action::COUNT {
        let onehot = if k == action.index() { 1.0 } else { 0.0 };
        // d log p_a / d z_k = 1[k=a] - p_k ;  d H / d z_k = -p_k (log p_k + H)
        d_logits[k] = d_log_prob * (onehot - out.probs[k]) - d_entropy * out.probs[k] * (out.log_probs[k] + out.entropy);
    }
    let mut dh = vec![0.0; h.len()];
    for k in 0..Action::COUNT {
        axpy(d_logits[k], h, grads.actor_w.row_mut(k));
        grads.actor_b[k] += d_logits[k];
        axpy(d_logits[k], heads.actor_w.row(k), &mut dh);
    }
    axpy(d_value, h, &mut grads.critic_w);
    grads.critic_b += d_value;
    axpy(d_value, &heads.critic_w, &mut dh);
    dh
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub gamma: f64,
    pub entropy_beta: f64,
    pub value_coef: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 0.99,
            entropy_beta: 0.01,
            value_coef: 0.5,
        }
    }
}

/// What the loss needs from each step of a rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub log_prob: f64,
    pub value: f64,
    pub entropy: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct A3cLoss {
    pub total: f64,
    pub policy: f64,
    /// `½ Σ (R_t − V_t)²`
    pub value: f64,
    pub entropy: f64,
    pub returns: Vec<f64>,
    /// Per step `(∂L/∂log_prob, ∂L/∂value, ∂L/∂entropy)`.
    pub step_grads: Vec<(f64, f64, f64)>,
}

/// n-step advantage actor-critic loss. `bootstrap` is the value estimate after
/// the last step (zero when the rollout ended the episode). The advantage is a
/// constant in the policy term.
pub fn a3c_loss(steps: &[StepOutcome], bootstrap: f64, cfg: &LossConfig) -> Result<A3cLoss> {
    if steps.is_empty() {
        return Err(Error::Empty("rollout"));
    }
    let mut returns = vec![0.0; steps.len()];
    let mut r = bootstrap;
    for t in (0..steps.len()).rev() {
        r = steps[t].reward + cfg.gamma * r;
        returns[t] = r;
    }
    let (mut policy, mut value, mut entropy) = (0.0, 0.0, 0.0);
    let mut step_grads = Vec::with_capacity(steps.len());
    for (s, &ret) in steps.iter().zip(&returns) {
        let adv = ret - s.value;
        policy -= s.log_prob * adv;
        value += 0.5 * adv * adv;
        entropy += s.entropy;
        step_grads.push((-adv, -cfg.value_coef * adv, -cfg.entropy_beta));
    }
    Ok(A3cLoss {
        total: policy + cfg.value_coef * value - cfg.entropy_beta * entropy,
        policy,
        value,
        entropy,
        returns,
        step_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn zero_weights_zero_state_stay_zero() {
        let p = LstmParams::zeros(3, 4);
        let (s, _) = lstm_step(&p, &[0.0; 3], &LstmState::zeros(4)).unwrap();
        assert_eq!(s, LstmState::zeros(4));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let hidden = 3;
        let mut p = LstmParams::zeros(2, hidden);
        for u in 0..hidden {
            p.bias[GATE_F * hidden + u] = 50.0;
            p.bias[GATE_I * hidden + u] = -50.0;
        }
        let state = LstmState {
            h: vec![0.1, -0.2, 0.3],
            c: vec![0.7, -1.1, 0.25],
        };
        let (next, _) = lstm_step(&p, &[0.4, -0.9], &state).unwrap();
        for u in 0..hidden {
            assert!((next.c[u] - state.c[u]).abs() < 1e-6);
        }
    }

    #[test]
    fn uniform_logits_have_log6_entropy() {
        let heads = Heads::zeros(4);
        let out = heads_forward(&heads, &[0.3, -0.1, 0.0, 1.0]);
        assert!((out.entropy - 6f64.ln()).abs() < 1e-9);
        assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dominant_logit_is_almost_always_sampled() {
        let mut heads = Heads::zeros(1);
        heads.actor_b[2] = 50.0;
        let mut rng = stream(11, &[]);
        let hits = (0..10_000).filter(|_| act(&heads, &[0.0], &mut rng).action == Action::RotateRight).count();
        assert!(hits as f64 / 10_000.0 > 0.999);
    }

    #[test]
    fn sampling_is_seeded() {
        let heads = Heads::zeros(2);
        let draw = |seed| {
            let mut rng = stream(seed, &[]);
            (0..20).map(|_| act(&heads, &[0.0, 0.0], &mut rng).action).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    fn outcome(reward: f64, value: f64) -> StepOutcome {
        StepOutcome {
            log_prob: -1.0,
            value,
            entropy: 0.5,
            reward,
        }
    }

    #[test]
    fn single_terminal_step() {
        let l = a3c_loss(&[outcome(5.0, 0.0)], 0.0, &LossConfig::default()).unwrap();
        assert_eq!(l.returns, vec![5.0]);
        assert_eq!(l.value, 12.5);
    }

    #[test]
    fn zero_advantage_leaves_entropy_term() {
        let cfg = LossConfig::default();
        let l = a3c_loss(&[outcome(0.0, 0.0), outcome(0.0, 0.0)], 0.0, &cfg).unwrap();
        assert!((l.total - (-cfg.entropy_beta * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn two_step_discounting() {
        let l = a3c_loss(&[outcome(0.0, 0.0), outcome(5.0, 0.0)], 0.0, &LossConfig::default()).unwrap();
        assert!((l.returns[0] - 4.95).abs() < 1e-12);
        assert_eq!(l.returns[1], 5.0);
        assert!(matches!(a3c_loss(&[], 0.0, &LossConfig::default()), Err(Error::Empty(_))));
    }

    #[test]
    fn joint_embedding_concatenates() {
        let obs: Vec<f64> = (0..10).map(f64::from).collect();
        let j = joint_embedding(&obs, &[0.5; 8], (10, 8)).unwrap();
        assert_eq!(j.len(), 18);
        assert_eq!(&j[..10], obs.as_slice());
        assert!(joint_embedding(&obs, &[0.5; 7], (10, 8)).is_err());
        assert_eq!(joint_embedding(&[0.0; 2], &[0.0; 3], (2, 3)).unwrap(), vec![0.0; 5]);
    }
}
