//! Contextualized graph network: two graph-convolution layers over the node
//! features, concatenation of the context matrix, and a third graph
//! convolution. Forward and exact reverse-mode backward at `f64`.
//!
//! ```text
//! H1  = relu(Â · X · W0)
//! H2  = relu(Â · H1 · W1)
//! H3  = relu(Â · [H2 | C] · W2)
//! ```

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::context::{ContextMatrix, CONTEXT_DIM};
use crate::error::{Error, Result};
use crate::knowledge::EmbeddingTable;
use crate::linalg::Matrix;
use crate::world::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CgnDims {
    pub nodes: usize,
    pub embed_dim: usize,
    pub h1: usize,
    pub h2: usize,
    pub h3: usize,
}

impl CgnDims {
    pub fn feature_dim(&self) -> usize {
        self.nodes + self.embed_dim
    }

    pub fn num_params(&self) -> usize {
        self.feature_dim() * self.h1 + self.h1 * self.h2 + (self.h2 + CONTEXT_DIM) * self.h3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgnParams {
    pub w0: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
}

impl CgnParams {
    pub fn zeros(dims: &CgnDims) -> Self {
        CgnParams {
            w0: Matrix::zeros(dims.feature_dim(), dims.h1),
            w1: Matrix::zeros(dims.h1, dims.h2),
            w2: Matrix::zeros(dims.h2 + CONTEXT_DIM, dims.h3),
        }
    }

    /// Glorot-uniform initialisation.
    pub fn init(dims: &CgnDims, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(dims);
        for m in [&mut p.w0, &mut p.w1, &mut p.w2] {
            let limit = (6.0 / (m.rows() + m.cols()) as f64).sqrt();
            m.as_mut_slice().iter_mut().for_each(|w| *w = rng.gen_range(-limit..limit));
        }
        p
    }

    pub fn matrices(&self) -> [&Matrix; 3] {
        [&self.w0, &self.w1, &self.w2]
    }

    pub fn matrices_mut(&mut self) -> [&mut Matrix; 3] {
        [&mut self.w0, &mut self.w1, &mut self.w2]
    }

    pub fn fingerprint(&self) -> u64 {
        self.matrices().iter().fold(0xcbf2_9ce4_8422_2325, |h, m| fingerprint(h, m.as_slice()))
    }

    pub fn is_finite(&self) -> bool {
        self.matrices().iter().all(|m| m.is_finite())
    }
}

/// `|O| × (|O| + d)`: a shared detection indicator followed by each node's
/// word embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures(pub Matrix);

pub fn node_features(detections: &[Detection], emb: &EmbeddingTable) -> NodeFeatures {
    let n = emb.len();
    let mut x = Matrix::zeros(n, n + emb.dim);
    for j in 0..n {
        let row = x.row_mut(j);
        for d in detections {
            row[d.class] = 1.0;
        }
        row[n..].copy_from_slice(emb.vector(j));
    }
    NodeFeatures(x)
}

/// How the first layer's input was supplied.
#[derive(Debug, Clone)]
enum FirstInput {
    Dense(Matrix),
    /// `X = [1·bᵀ | E]` with `b` the indicator of `detected`.
    Shared { detected: Vec<usize>, embeddings: Arc<Matrix> },
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct CgnCache {
    x: FirstInput,
    z1: Matrix,
    h1: Matrix,
    z2: Matrix,
    h2: Matrix,
    /// `[H2 | C]` and its pre-activation; absent when the third layer is skipped.
    third: Option<(Matrix, Matrix)>,
    stamp: u64,
}

impl CgnCache {
    pub fn h2(&self) -> &Matrix {
        &self.h2
    }
}

fn fingerprint(seed: u64, data: &[f64]) -> u64 {
    data.iter().fold(seed, |h, v| (h ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3))
}

fn stamp(params: &CgnParams, adj: &Matrix) -> u64 {
    fingerprint(params.fingerprint(), adj.as_slice())
}

fn relu(m: &Matrix) -> Matrix {
    m.map(|v| if v > 0.0 { v } else { 0.0 })
}

fn check_shapes(params: &CgnParams, adj: &Matrix, x: &NodeFeatures) -> Result<()> {
    let n = adj.rows();
    if adj.cols() != n {
        return Err(Error::shape("normalized adjacency", "square", format!("{:?}", adj.shape())));
    }
    if x.0.rows() != n || x.0.cols() != params.w0.rows() {
        return Err(Error::shape(
            "node features",
            format!("{n}x{}", params.w0.rows()),
            format!("{:?}", x.0.shape()),
        ));
    }
    check_chain(params)
}

fn check_chain(params: &CgnParams) -> Result<()> {
    if params.w1.rows() != params.w0.cols() || params.w2.rows() != params.w1.cols() + CONTEXT_DIM {
        return Err(Error::shape("cgn weights", "chained layer sizes", "mismatch"));
    }
    Ok(())
}

/// Layers two and three from the first pre-activation.
fn finish(
    params: &CgnParams,
    adj: &Matrix,
    x: FirstInput,
    z1: Matrix,
    c: Option<&ContextMatrix>,
    stamp: u64,
) -> Result<(Vec<f64>, CgnCache)> {
    let h1 = relu(&z1);
    let z2 = adj.matmul(&h1.matmul(&params.w1));
    let h2 = relu(&z2);
    let (out, third) = match c {
        Some(c) => {
            if c.num_objects() != adj.rows() {
                return Err(Error::shape("context matrix rows", adj.rows(), c.num_objects()));
            }
            let h2c = h2.hcat(c.matrix());
            let z3 = adj.matmul(&h2c.matmul(&params.w2));
            (relu(&z3).into_vec(), Some((h2c, z3)))
        }
        None => (h2.as_slice().to_vec(), None),
    };
    let cache = CgnCache {
        x,
        z1,
        h1,
        z2,
        h2,
        third,
        stamp,
    };
    Ok((out, cache))
}

/// Full three-layer forward. Returns the row-major flatten of `H3`
/// (length `|O|·h3`).
pub fn forward(
    params: &CgnParams,
    adj: &Matrix,
    x: &NodeFeatures,
    c: &ContextMatrix,
) -> Result<(Vec<f64>, CgnCache)> {
    check_shapes(params, adj, x)?;
    let z1 = adj.matmul(&x.0.matmul(&params.w0));
    finish(params, adj, FirstInput::Dense(x.0.clone()), z1, Some(c), stamp(params, adj))
}

/// Ablation without the context layer: returns the flatten of `H2`
/// (length `|O|·h2`).
pub fn forward_no_g(params: &CgnParams, adj: &Matrix, x: &NodeFeatures) -> Result<(Vec<f64>, CgnCache)> {
    check_shapes(params, adj, x)?;
    let z1 = adj.matmul(&x.0.matmul(&params.w0));
    finish(params, adj, FirstInput::Dense(x.0.clone()), z1, None, stamp(params, adj))
}

/// The part of the first layer that depends only on the parameters,
/// adjacency and embeddings. With node features `[1·bᵀ | E]`,
/// `Â·X·W0 = (Â·1)·(bᵀ·W0_top) + Â·E·W0_bottom`; the second term is stored
/// here so each step only sums the detected rows of `W0_top`.
#[derive(Debug, Clone)]
pub struct Prepared {
    embeddings: Arc<Matrix>,
    row_sums: Vec<f64>,
    static_z1: Matrix,
    stamp: u64,
}

pub fn prepare(params: &CgnParams, adj: &Matrix, embeddings: Arc<Matrix>) -> Result<Prepared> {
    let n = adj.rows();
    if adj.cols() != n || embeddings.rows() != n || n + embeddings.cols() != params.w0.rows() {
        return Err(Error::shape(
            "adjacency/embeddings vs W0",
            format!("{}x{} features", n, params.w0.rows()),
            format!("{}x{}", embeddings.rows(), n + embeddings.cols()),
        ));
    }
    check_chain(params)?;
    let h1 = params.w0.cols();
    let w0_bottom = Matrix::from_vec(embeddings.cols(), h1, params.w0.as_slice()[n * h1..].to_vec());
    let static_z1 = adj.matmul(&embeddings.matmul(&w0_bottom));
    Ok(Prepared {
        row_sums: (0..n).map(|i| adj.row(i).iter().sum()).collect(),
        static_z1,
        embeddings,
        stamp: stamp(params, adj),
    })
}

/// Same result as [`forward`] (or [`forward_no_g`] when `c` is `None`) for
/// node features built from `detected` and the prepared embeddings.
pub fn forward_prepared(
    params: &CgnParams,
    adj: &Matrix,
    prep: &Prepared,
    detected: &[usize],
    c: Option<&ContextMatrix>,
) -> Result<(Vec<f64>, CgnCache)> {
    let stamp = stamp(params, adj);
    if prep.stamp != stamp {
        return Err(Error::StaleCache);
    }
    let n = adj.rows();
    let mut shared = vec![0.0; params.w0.cols()];
    for &k in detected {
        if k >= n {
            return Err(Error::shape("detected class index", format!("< {n}"), k));
        }
        crate::linalg::axpy(1.0, params.w0.row(k), &mut shared);
    }
    let mut z1 = prep.static_z1.clone();
    for (i, &s) in prep.row_sums.iter().enumerate() {
        crate::linalg::axpy(s, &shared, z1.row_mut(i));
    }
    let x = FirstInput::Shared {
        detected: detected.to_vec(),
        embeddings: Arc::clone(&prep.embeddings),
    };
    finish(params, adj, x, z1, c, stamp)
}

fn relu_grad(grad: &Matrix, pre: &Matrix) -> Matrix {
    let mut g = grad.clone();
    for (gv, &z) in g.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if z <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

/// Gradient accumulator over several backward passes. For prepared inputs
/// the embedding rows of the W0 gradient are deferred: the summed first-layer
/// signal is multiplied by `Âᵀ` and `Eᵀ` once in [`CgnGrads::finish`].
#[derive(Debug, Clone)]
pub struct CgnGrads {
    grads: CgnParams,
    pending: Option<(Matrix, Arc<Matrix>)>,
}

impl CgnGrads {
    pub fn zeros(dims: &CgnDims) -> Self {
        CgnGrads {
            grads: CgnParams::zeros(dims),
            pending: None,
        }
    }

    fn zeros_like(params: &CgnParams) -> Self {
        CgnGrads {
            grads: CgnParams {
                w0: Matrix::zeros(params.w0.rows(), params.w0.cols()),
                w1: Matrix::zeros(params.w1.rows(), params.w1.cols()),
                w2: Matrix::zeros(params.w2.rows(), params.w2.cols()),
            },
            pending: None,
        }
    }

    pub fn finish(mut self, adj: &Matrix) -> CgnParams {
        if let Some((g1_sum, embeddings)) = self.pending {
            let n = adj.rows();
            let d_pre1 = adj.t_matmul(&g1_sum);
            let bottom = embeddings.t_matmul(&d_pre1);
            let h1 = self.grads.w0.cols();
            for (acc, v) in self.grads.w0.as_mut_slice()[n * h1..].iter_mut().zip(bottom.as_slice()) {
                *acc += v;
            }
        }
        self.grads
    }
}

/// Gradients of `⟨grad_embedding, embedding⟩` w.r.t. W0, W1, W2. The relu
/// subgradient at zero is zero. Without the third layer W2 gets a zero
/// gradient.
pub fn backward(params: &CgnParams, adj: &Matrix, cache: &CgnCache, grad_embedding: &[f64]) -> Result<CgnParams> {
    let mut acc = CgnGrads::zeros_like(params);
    backward_into(params, adj, cache, grad_embedding, &mut acc)?;
    Ok(acc.finish(adj))
}

/// [`backward`], accumulated into `acc`.
pub fn backward_into(
    params: &CgnParams,
    adj: &Matrix,
    cache: &CgnCache,
    grad_embedding: &[f64],
    acc: &mut CgnGrads,
) -> Result<()> {
    if cache.stamp != stamp(params, adj) {
        return Err(Error::StaleCache);
    }
    if acc.grads.w0.shape() != params.w0.shape()
        || acc.grads.w1.shape() != params.w1.shape()
        || acc.grads.w2.shape() != params.w2.shape()
    {
        return Err(Error::shape("gradient accumulator", "parameter shapes", "mismatch"));
    }
    let n = adj.rows();
    let h2_cols = params.w1.cols();

    let d_h2 = match &cache.third {
        Some((h2c, z3)) => {
            let h3 = params.w2.cols();
            if grad_embedding.len() != n * h3 {
                return Err(Error::shape("grad_embedding", n * h3, grad_embedding.len()));
            }
            let g3 = relu_grad(&Matrix::from_vec(n, h3, grad_embedding.to_vec()), z3);
            let d_pre3 = adj.t_matmul(&g3);
            acc.grads.w2.add_assign(&h2c.t_matmul(&d_pre3));
            d_pre3.matmul_t(&params.w2).col_slice(0, h2_cols)
        }
        None => {
            if grad_embedding.len() != n * h2_cols {
                return Err(Error::shape("grad_embedding", n * h2_cols, grad_embedding.len()));
            }
            Matrix::from_vec(n, h2_cols, grad_embedding.to_vec())
        }
    };

    let g2 = relu_grad(&d_h2, &cache.z2);
    let d_pre2 = adj.t_matmul(&g2);
    acc.grads.w1.add_assign(&cache.h1.t_matmul(&d_pre2));
    let d_h1 = d_pre2.matmul_t(&params.w1);

    let g1 = relu_grad(&d_h1, &cache.z1);
    match &cache.x {
        FirstInput::Dense(x) => acc.grads.w0.add_assign(&x.t_matmul(&adj.t_matmul(&g1))),
        FirstInput::Shared { detected, embeddings } => {
            // column sums of Âᵀ·G1 are the row sums of Â weighted into G1
            let mut col_sum = vec![0.0; params.w0.cols()];
            for i in 0..n {
                let row_sum: f64 = adj.row(i).iter().sum();
                crate::linalg::axpy(row_sum, g1.row(i), &mut col_sum);
            }
            for &k in detected {
                crate::linalg::axpy(1.0, &col_sum, acc.grads.w0.row_mut(k));
            }
            match &mut acc.pending {
                Some((sum, _)) => sum.add_assign(&g1),
                None => acc.pending = Some((g1, Arc::clone(embeddings))),
            }
        }
    }
    Ok(())
}
