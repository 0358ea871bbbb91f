//! Per-object context vectors `[b, x_c, y_c, bbox, cs]` and the stacked
//! context matrix.

use crate::catalog::ClassId;
use crate::error::{Error, Result};
use crate::knowledge::EmbeddingTable;
use crate::linalg::Matrix;
use crate::world::Detection;

pub const CONTEXT_DIM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextVector {
    pub b: f64,
    pub x_c: f64,
    pub y_c: f64,
    pub bbox: f64,
    pub cs: f64,
}

impl ContextVector {
    pub fn as_array(&self) -> [f64; CONTEXT_DIM] {
        [self.b, self.x_c, self.y_c, self.bbox, self.cs]
    }
}

/// `|O| × 5`, rows in knowledge-graph node order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextMatrix(Matrix);

impl ContextMatrix {
    pub fn num_objects(&self) -> usize {
        self.0.rows()
    }

    pub fn row(&self, class: ClassId) -> ContextVector {
        let r = self.0.row(class);
        ContextVector {
            b: r[0],
            x_c: r[1],
            y_c: r[2],
            bbox: r[3],
            cs: r[4],
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Row-major, length `5·|O|`.
    pub fn flatten(&self) -> Vec<f64> {
        self.0.as_slice().to_vec()
    }

    pub fn unflatten(v: &[f64]) -> Result<Self> {
        if !v.len().is_multiple_of(CONTEXT_DIM) {
            return Err(Error::shape("context vector", "a multiple of 5", v.len()));
        }
        Ok(ContextMatrix(Matrix::from_vec(v.len() / CONTEXT_DIM, CONTEXT_DIM, v.to_vec())))
    }

    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if m.cols() != CONTEXT_DIM {
            return Err(Error::shape("context matrix columns", CONTEXT_DIM, m.cols()));
        }
        Ok(ContextMatrix(m))
    }

    pub fn detected_count(&self) -> usize {
        (0..self.num_objects()).filter(|&j| self.0[(j, 0)] == 1.0).count()
    }
}

/// Cosine similarity of every class to `target`; the constant `cs` column.
pub fn target_similarity(target: ClassId, emb: &EmbeddingTable) -> Vec<f64> {
    (0..emb.len()).map(|j| emb.cosine(j, target)).collect()
}

pub fn context_matrix(detections: &[Detection], target: ClassId, emb: &EmbeddingTable) -> ContextMatrix {
    context_matrix_with(detections, &target_similarity(target, emb))
}

/// Same as [`context_matrix`] with a precomputed similarity column.
pub fn context_matrix_with(detections: &[Detection], similarity: &[f64]) -> ContextMatrix {
    let mut m = Matrix::zeros(similarity.len(), CONTEXT_DIM);
    for (j, &cs) in similarity.iter().enumerate() {
        m[(j, 4)] = cs;
    }
    for d in detections {
        let row = m.row_mut(d.class);
        row[0] = 1.0;
        row[1] = d.x_c;
        row[2] = d.y_c;
        row[3] = d.bbox_area;
    }
    ContextMatrix(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;
    use crate::knowledge::synth_embeddings;

    fn setup() -> (Catalog, EmbeddingTable) {
        let cat = Catalog::standard();
        let emb = synth_embeddings(5, 16, &cat).unwrap();
        (cat, emb)
    }

    #[test]
    fn empty_frame_keeps_similarity_only() {
        let (cat, emb) = setup();
        let toaster = cat.id("Toaster").unwrap();
        let m = context_matrix(&[], toaster, &emb);
        for j in 0..cat.len() {
            let r = m.row(j);
            assert_eq!((r.b, r.x_c, r.y_c, r.bbox), (0.0, 0.0, 0.0, 0.0));
            assert!((r.cs - emb.cosine(j, toaster)).abs() < 1e-15);
        }
        assert!((m.row(toaster).cs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detection_is_copied() {
        let (cat, emb) = setup();
        let mug = cat.id("Mug").unwrap();
        let det = Detection {
            class: mug,
            x_c: 0.5,
            y_c: 0.5,
            bbox_area: 0.1,
            distance: 1.0,
        };
        let m = context_matrix(&[det], cat.id("Toaster").unwrap(), &emb);
        let r = m.row(mug);
        assert_eq!((r.b, r.x_c, r.y_c, r.bbox), (1.0, 0.5, 0.5, 0.1));
        assert_eq!(m.detected_count(), 1);
    }

    #[test]
    fn flatten_is_row_major() {
        let m = ContextMatrix::from_matrix(Matrix::from_rows(&[
            vec![1.0, 0.5, 0.5, 0.1, 0.9],
            vec![0.0, 0.0, 0.0, 0.0, 0.2],
        ]))
        .unwrap();
        assert_eq!(m.flatten(), vec![1.0, 0.5, 0.5, 0.1, 0.9, 0.0, 0.0, 0.0, 0.0, 0.2]);
        assert_eq!(ContextMatrix::unflatten(&m.flatten()).unwrap(), m);
        let z = ContextMatrix::from_matrix(Matrix::zeros(3, 5)).unwrap();
        assert_eq!(z.flatten(), vec![0.0; 15]);
        assert!(ContextMatrix::unflatten(&[0.0; 7]).is_err());
    }
}
