//! The full agent network: graph stream, joint embedding, LSTM and heads,
//! with a flat parameter layout shared by the optimizer and checkpoints.
//!
//! Flat order: `W0, W1, W2` (graph), `W_x, W_h, b` (LSTM),
//! `actor_w, actor_b, critic_w, critic_b`; every matrix row-major.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::ClassId;
use crate::cgn::{self, CgnCache, CgnDims, CgnParams, NodeFeatures};
use crate::context::{context_matrix_with, ContextMatrix, CONTEXT_DIM};
use crate::error::{Error, Result};
use crate::knowledge::EmbeddingTable;
use crate::linalg::{axpy, Matrix};
use crate::policy::{
    a3c_loss, heads_backward, heads_forward, joint_embedding, lstm_backward, lstm_step, A3cLoss, HeadOutput,
    Heads, LossConfig, LstmCache, LstmParams, LstmState, PolicyParams, StepOutcome,
};
use crate::rng::stream;
use crate::world::{Action, Detection};

/// How the graph stream feeds the joint embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    /// Three layers, context matrix concatenated before the third.
    Full,
    /// Two layers only; the embedding is `H2`.
    NoContextLayer,
    /// Graph slice replaced by zeros (observation-only baseline).
    Zeroed,
}

impl GraphMode {
    pub fn code(self) -> u32 {
        match self {
            GraphMode::Full => 0,
            GraphMode::NoContextLayer => 1,
            GraphMode::Zeroed => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(GraphMode::Full),
            1 => Some(GraphMode::NoContextLayer),
            2 => Some(GraphMode::Zeroed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelDims {
    /// Number of object classes; filled from the catalog when zero.
    pub nodes: usize,
    pub embed_dim: usize,
    pub h1: usize,
    pub h2: usize,
    pub h3: usize,
    pub hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            nodes: 0,
            embed_dim: 32,
            h1: 64,
            h2: 32,
            h3: 8,
            hidden: 128,
        }
    }
}

impl ModelDims {
    pub fn cgn(&self) -> CgnDims {
        CgnDims {
            nodes: self.nodes,
            embed_dim: self.embed_dim,
            h1: self.h1,
            h2: self.h2,
            h3: self.h3,
        }
    }

    pub fn obs_dim(&self) -> usize {
        CONTEXT_DIM * self.nodes
    }

    pub fn graph_dim(&self, mode: GraphMode) -> usize {
        match mode {
            GraphMode::NoContextLayer => self.nodes * self.h2,
            GraphMode::Full | GraphMode::Zeroed => self.nodes * self.h3,
        }
    }

    pub fn input_dim(&self, mode: GraphMode) -> usize {
        self.obs_dim() + self.graph_dim(mode)
    }

    pub fn num_params(&self, mode: GraphMode) -> usize {
        self.cgn().num_params() + PolicyParams::num_params(self.input_dim(mode), self.hidden)
    }

    pub fn validate(&self) -> Result<()> {
        let d = [self.nodes, self.embed_dim, self.h1, self.h2, self.h3, self.hidden];
        if d.contains(&0) {
            return Err(Error::Config("model dimensions must all be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub dims: ModelDims,
    pub mode: GraphMode,
    pub cgn: CgnParams,
    pub policy: PolicyParams,
}

impl Model {
    pub fn zeros(dims: ModelDims, mode: GraphMode) -> Self {
        Model {
            dims,
            mode,
            cgn: CgnParams::zeros(&dims.cgn()),
            policy: PolicyParams::zeros(dims.input_dim(mode), dims.hidden),
        }
    }

    pub fn init(dims: ModelDims, mode: GraphMode, seed: u64) -> Self {
        let mut rng = stream(seed, &[0x696e_6974]);
        let cgn = CgnParams::init(&dims.cgn(), &mut rng);
        let policy = PolicyParams::init(dims.input_dim(mode), dims.hidden, &mut rng);
        Model { dims, mode, cgn, policy }
    }

    pub fn num_params(&self) -> usize {
        self.dims.num_params(self.mode)
    }

    fn tensors(&self) -> [&[f64]; 10] {
        let (l, h) = (&self.policy.lstm, &self.policy.heads);
        [
            self.cgn.w0.as_slice(),
            self.cgn.w1.as_slice(),
            self.cgn.w2.as_slice(),
            l.w_x.as_slice(),
            l.w_h.as_slice(),
            &l.bias,
            h.actor_w.as_slice(),
            &h.actor_b,
            &h.critic_w,
            std::slice::from_ref(&h.critic_b),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 10] {
        let (l, h) = (&mut self.policy.lstm, &mut self.policy.heads);
        [
            self.cgn.w0.as_mut_slice(),
            self.cgn.w1.as_mut_slice(),
            self.cgn.w2.as_mut_slice(),
            l.w_x.as_mut_slice(),
            l.w_h.as_mut_slice(),
            &mut l.bias,
            h.actor_w.as_mut_slice(),
            &mut h.actor_b,
            &mut h.critic_w,
            std::slice::from_mut(&mut h.critic_b),
        ]
    }

    /// Names and lengths of the flat blocks, in layout order.
    pub fn layout(&self) -> Vec<(&'static str, usize)> {
        const NAMES: [&str; 10] = [
            "cgn.w0", "cgn.w1", "cgn.w2", "lstm.w_x", "lstm.w_h", "lstm.bias", "actor.w", "actor.b", "critic.w", "critic.b",
        ];
        NAMES.iter().zip(self.tensors()).map(|(n, t)| (*n, t.len())).collect()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            v.extend_from_slice(t);
        }
        v
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape("flat parameter vector", self.num_params(), flat.len()));
        }
        let mut at = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[at..at + t.len()]);
            at += t.len();
        }
        Ok(())
    }

    pub fn from_flat(dims: ModelDims, mode: GraphMode, flat: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(dims, mode);
        m.load_flat(flat)?;
        Ok(m)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn initial_state(&self) -> LstmState {
        LstmState::zeros(self.dims.hidden)
    }
}

/// Per-step network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Detected classes (the shared node-feature indicator).
    pub detected: Vec<ClassId>,
    pub context: ContextMatrix,
}

/// Builds the observation from this frame's detections; `similarity` is the
/// per-class cosine similarity to the target.
pub fn observe(detections: &[Detection], similarity: &[f64]) -> Observation {
    Observation {
        detected: detections.iter().map(|d| d.class).collect(),
        context: context_matrix_with(detections, similarity),
    }
}

/// The fixed graph inputs: normalized adjacency and node word embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphData {
    pub adjacency: Matrix,
    pub embeddings: Arc<Matrix>,
}

impl GraphData {
    pub fn new(adjacency: Matrix, embeddings: &EmbeddingTable) -> Result<Self> {
        if adjacency.rows() != adjacency.cols() || adjacency.rows() != embeddings.len() {
            return Err(Error::shape("adjacency vs embedding rows", embeddings.len(), adjacency.rows()));
        }
        Ok(GraphData {
            adjacency,
            embeddings: Arc::new(embeddings.vectors.clone()),
        })
    }

    pub fn nodes(&self) -> usize {
        self.adjacency.rows()
    }

    /// Dense node features for `detected`.
    pub fn node_features(&self, detected: &[ClassId]) -> NodeFeatures {
        let n = self.nodes();
        let mut x = Matrix::zeros(n, n + self.embeddings.cols());
        for j in 0..n {
            let row = x.row_mut(j);
            for &k in detected {
                row[k] = 1.0;
            }
            row[n..].copy_from_slice(self.embeddings.row(j));
        }
        NodeFeatures(x)
    }
}

/// Everything the backward pass needs from one step.
#[derive(Debug, Clone)]
pub struct StepCache {
    graph: Option<CgnCache>,
    lstm: LstmCache,
    h: Vec<f64>,
    head: HeadOutput,
}

impl StepCache {
    pub fn head(&self) -> &HeadOutput {
        &self.head
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub head: HeadOutput,
    pub state: LstmState,
    pub cache: StepCache,
}

/// One-step contribution to the loss gradient: `∂L/∂log π(a)`, `∂L/∂V`,
/// `∂L/∂H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepGrad {
    pub action: Action,
    pub d_log_prob: f64,
    pub d_value: f64,
    pub d_entropy: f64,
}

/// A model bound to its graph inputs, ready to run.
#[derive(Debug, Clone)]
pub struct Network {
    model: Model,
    graph: Arc<GraphData>,
    prepared: Option<cgn::Prepared>,
}

impl Network {
    pub fn new(model: Model, graph: Arc<GraphData>) -> Result<Self> {
        if graph.nodes() != model.dims.nodes || graph.embeddings.cols() != model.dims.embed_dim {
            return Err(Error::shape(
                "graph data vs model dimensions",
                format!("{} nodes, embedding {}", model.dims.nodes, model.dims.embed_dim),
                format!("{} nodes, embedding {}", graph.nodes(), graph.embeddings.cols()),
            ));
        }
        let mut net = Network {
            model,
            graph,
            prepared: None,
        };
        net.prepare()?;
        Ok(net)
    }

    fn prepare(&mut self) -> Result<()> {
        self.prepared = match self.model.mode {
            GraphMode::Zeroed => None,
            _ => Some(cgn::prepare(
                &self.model.cgn,
                &self.graph.adjacency,
                Arc::clone(&self.graph.embeddings),
            )?),
        };
        Ok(())
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn graph(&self) -> &GraphData {
        &self.graph
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        self.model.load_flat(flat)?;
        self.prepare()
    }

    pub fn initial_state(&self) -> LstmState {
        self.model.initial_state()
    }

    /// The graph-stream embedding for one observation.
    pub fn graph_embedding(&self, obs: &Observation) -> Result<(Vec<f64>, Option<CgnCache>)> {
        let m = &self.model;
        let adj = &self.graph.adjacency;
        Ok(match (m.mode, &self.prepared) {
            (GraphMode::Zeroed, _) => (vec![0.0; m.dims.graph_dim(m.mode)], None),
            (mode, Some(prep)) => {
                let ctx = (mode == GraphMode::Full).then_some(&obs.context);
                let (e, c) = cgn::forward_prepared(&m.cgn, adj, prep, &obs.detected, ctx)?;
                (e, Some(c))
            }
            (_, None) => unreachable!("graph modes other than zeroed are always prepared"),
        })
    }

    pub fn step(&self, obs: &Observation, state: &LstmState) -> Result<StepOutput> {
        let m = &self.model;
        let (graph_emb, graph) = self.graph_embedding(obs)?;
        let x = joint_embedding(
            obs.context.matrix().as_slice(),
            &graph_emb,
            (m.dims.obs_dim(), m.dims.graph_dim(m.mode)),
        )?;
        let (next, lstm) = lstm_step(&m.policy.lstm, &x, state)?;
        let head = heads_forward(&m.policy.heads, &next.h);
        let cache = StepCache {
            graph,
            lstm,
            h: next.h.clone(),
            head: head.clone(),
        };
        Ok(StepOutput {
            head,
            state: next,
            cache,
        })
    }

    /// Backpropagation through a rollout segment. The LSTM state entering the
    /// segment is treated as a constant. Returns the flat gradient.
    pub fn backward(&self, caches: &[StepCache], grads: &[StepGrad]) -> Result<Vec<f64>> {
        if caches.len() != grads.len() {
            return Err(Error::shape("step gradients", caches.len(), grads.len()));
        }
        let m = &self.model;
        let hidden = m.dims.hidden;
        let obs_dim = m.dims.obs_dim();
        let mut g_cgn = cgn::CgnGrads::zeros(&m.dims.cgn());
        let mut g_lstm = LstmParams::zeros(m.dims.input_dim(m.mode), hidden);
        let mut g_heads = Heads::zeros(hidden);
        let mut dh_next = vec![0.0; hidden];
        let mut dc_next = vec![0.0; hidden];
        for (cache, g) in caches.iter().zip(grads).rev() {
            let mut dh = heads_backward(
                &m.policy.heads,
                &cache.h,
                &cache.head,
                g.action,
                g.d_log_prob,
                g.d_value,
                g.d_entropy,
                &mut g_heads,
            );
            axpy(1.0, &dh_next, &mut dh);
            let back = lstm_backward(&m.policy.lstm, &cache.lstm, &dh, &dc_next, &mut g_lstm);
            if let Some(graph) = &cache.graph {
                cgn::backward_into(&m.cgn, &self.graph.adjacency, graph, &back.dx[obs_dim..], &mut g_cgn)?;
            }
            dh_next = back.dh_prev;
            dc_next = back.dc_prev;
        }
        let grad_model = Model {
            dims: m.dims,
            mode: m.mode,
            cgn: g_cgn.finish(&self.graph.adjacency),
            policy: PolicyParams {
                lstm: g_lstm,
                heads: g_heads,
            },
        };
        Ok(grad_model.to_flat())
    }

    /// Replays a fixed rollout (observations, actions, rewards) from `state`,
    /// returning the loss and its exact flat gradient.
    pub fn rollout_loss(
        &self,
        observations: &[Observation],
        actions: &[Action],
        rewards: &[f64],
        bootstrap: f64,
        state: &LstmState,
        cfg: &LossConfig,
    ) -> Result<(A3cLoss, Vec<f64>)> {
        if observations.len() != actions.len() || actions.len() != rewards.len() {
            return Err(Error::shape("rollout", observations.len(), actions.len().min(rewards.len())));
        }
        let mut state = state.clone();
        let mut caches = Vec::with_capacity(actions.len());
        let mut outcomes = Vec::with_capacity(actions.len());
        for ((obs, &a), &r) in observations.iter().zip(actions).zip(rewards) {
            let out = self.step(obs, &state)?;
            outcomes.push(StepOutcome {
                log_prob: out.head.log_probs[a.index()],
                value: out.head.value,
                entropy: out.head.entropy,
                reward: r,
            });
            caches.push(out.cache);
            state = out.state;
        }
        let loss = a3c_loss(&outcomes, bootstrap, cfg)?;
        let grads = step_grads(actions, &loss);
        let flat = self.backward(&caches, &grads)?;
        Ok((loss, flat))
    }
}

/// Pairs each action with its loss derivatives.
pub fn step_grads(actions: &[Action], loss: &A3cLoss) -> Vec<StepGrad> {
    actions
        .iter()
        .zip(&loss.step_grads)
        .map(|(&action, &(d_log_prob, d_value, d_entropy))| StepGrad {
            action,
            d_log_prob,
            d_value,
            d_entropy,
        })
        .collect()
}
