use std::path::Path;

use rand::Rng;

use crate::catalog::{Catalog, ObjectRole};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::rng::stream;

/// One word vector per catalog class, rows in class-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: Matrix,
}

impl EmbeddingTable {
    pub fn vector(&self, class: usize) -> &[f64] {
        self.vectors.row(class)
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cosine(&self, a: usize, b: usize) -> f64 {
        // rows are validated non-zero at construction
        cosine_similarity(self.vector(a), self.vector(b)).expect("non-zero embedding rows")
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("cosine_similarity", a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Parses `name v1 … vd` lines. Names outside the catalog are ignored; every
/// catalog class must be present.
pub fn parse_embeddings(text: &str, source: &str, catalog: &Catalog) -> Result<EmbeddingTable> {
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; catalog.len()];
    let mut dim: Option<usize> = None;
    for (n, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(name) = parts.next() else { continue };
        if name.starts_with('#') {
            continue;
        }
        let Some(id) = catalog.lookup(name) else { continue };
        let values: Vec<f64> = parts
            .map(|s| s.parse::<f64>().map_err(|_| Error::parse(source, n + 1, format!("bad number {s:?}"))))
            .collect::<Result<_>>()?;
        let expected = *dim.get_or_insert(values.len());
        if values.len() != expected {
            return Err(Error::EmbeddingDim {
                class: name.to_string(),
                expected,
                got: values.len(),
            });
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(Error::ZeroVector(name.to_string()));
        }
        rows[id] = Some(values);
    }
    let dim = dim.unwrap_or(0);
    let mut data = Vec::with_capacity(catalog.len() * dim);
    for (id, row) in rows.into_iter().enumerate() {
        let row = row.ok_or_else(|| Error::MissingEmbedding(catalog.name(id).to_string()))?;
        data.extend(row);
    }
    if dim < 2 {
        return Err(Error::Config(format!("embedding dimension {dim} < 2")));
    }
    Ok(EmbeddingTable {
        dim,
        vectors: Matrix::from_vec(catalog.len(), dim, data),
    })
}

pub fn load_embeddings(path: &Path, catalog: &Catalog) -> Result<EmbeddingTable> {
    let text = std::fs::read_to_string(path)?;
    parse_embeddings(&text, &path.display().to_string(), catalog)
}

/// Deterministic stand-in for pretrained word vectors. Each class gets a random
/// direction blended with the mean direction of its room types, so classes
/// sharing a room are mildly similar. Distinct classes always have cosine
/// similarity below 0.99.
pub fn synth_embeddings(seed: u64, dim: usize, catalog: &Catalog) -> Result<EmbeddingTable> {
    if dim < 2 {
        return Err(Error::Config(format!("embedding dimension {dim} < 2")));
    }
    let mut rng = stream(seed, &[0x0065_6d62_6564]);
    let uniform = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let room_dirs: Vec<Vec<f64>> = (0..4).map(|_| uniform(&mut rng)).collect();

    let mut vectors = Matrix::zeros(catalog.len(), dim);
    for class in catalog.classes() {
        loop {
            let mut v = uniform(&mut rng);
            if class.role != ObjectRole::Background {
                let w = 0.5 / class.room_types.len() as f64;
                for r in &class.room_types {
                    for (x, d) in v.iter_mut().zip(&room_dirs[r.index()]) {
                        *x += w * d;
                    }
                }
            }
            if norm(&v) < 1e-6 {
                continue;
            }
            let distinct = (0..class.id).all(|prev| {
                cosine_similarity(&v, vectors.row(prev)).is_ok_and(|c| c < 0.99)
            });
            if distinct {
                vectors.row_mut(class.id).copy_from_slice(&v);
                break;
            }
        }
    }
    Ok(EmbeddingTable { dim, vectors })
}
