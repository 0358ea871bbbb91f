//! Binary checkpoint format.
//!
//! All integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "OBJNAVCK"
//! format       u32      1
//! graph mode   u32      0 full, 1 no context layer, 2 zeroed
//! nodes        u64
//! embed dim    u64
//! h1 h2 h3     u64 × 3
//! hidden       u64
//! episodes     u64      episodes completed
//! version      u64      optimizer applies so far
//! adam step    u64
//! param count  u64      N
//! params       f64 × N  flat model layout
//! adam m       f64 × N
//! adam v       f64 × N
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{GraphMode, Model, ModelDims};
use crate::trainer::shared::AdamState;

pub const MAGIC: &[u8; 8] = b"OBJNAVCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dims: ModelDims,
    pub mode: GraphMode,
    pub episodes: u64,
    pub version: u64,
    pub params: Vec<f64>,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn model(&self) -> Result<Model> {
        Model::from_flat(self.dims, self.mode, &self.params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(96 + 24 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.mode.code().to_le_bytes());
        let d = &self.dims;
        for v in [
            d.nodes as u64,
            d.embed_dim as u64,
            d.h1 as u64,
            d.h2 as u64,
            d.h3 as u64,
            d.hidden as u64,
            self.episodes,
            self.version,
            self.adam.t,
            self.params.len() as u64,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for arr in [&self.params, &self.adam.m, &self.adam.v] {
            for v in arr.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn read_from(mut r: impl Read) -> std::result::Result<Self, String> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| e.to_string())?;
        if &magic != MAGIC {
            return Err("not a checkpoint (bad magic)".into());
        }
        let format = read_u32(&mut r)?;
        if format != FORMAT_VERSION {
            return Err(format!("unsupported format version {format}"));
        }
        let mode = read_u32(&mut r)?;
        let mode = GraphMode::from_code(mode).ok_or_else(|| format!("unknown graph mode {mode}"))?;
        let mut h = [0u64; 10];
        for v in &mut h {
            *v = read_u64(&mut r)?;
        }
        let dims = ModelDims {
            nodes: h[0] as usize,
            embed_dim: h[1] as usize,
            h1: h[2] as usize,
            h2: h[3] as usize,
            h3: h[4] as usize,
            hidden: h[5] as usize,
        };
        dims.validate().map_err(|e| e.to_string())?;
        let n = h[9] as usize;
        if n != dims.num_params(mode) {
            return Err(format!("parameter count {n} does not match dimensions ({})", dims.num_params(mode)));
        }
        let mut arrays = [Vec::new(), Vec::new(), Vec::new()];
        for arr in &mut arrays {
            *arr = read_f64s(&mut r, n)?;
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(|e| e.to_string())?;
        if !rest.is_empty() {
            return Err(format!("{} trailing bytes", rest.len()));
        }
        let [params, m, v] = arrays;
        Ok(Checkpoint {
            dims,
            mode,
            episodes: h[6],
            version: h[7],
            params,
            adam: AdamState { m, v, t: h[8] },
        })
    }

    /// Writes through a temporary file so a crash never leaves a torn checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let err = |e: std::io::Error| Error::Checkpoint {
            path: path.to_path_buf(),
            msg: e.to_string(),
        };
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(err)?;
        fs::rename(&tmp, path).map_err(err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let err = |msg: String| Error::Checkpoint {
            path: path.to_path_buf(),
            msg,
        };
        let bytes = fs::read(path).map_err(|e| err(e.to_string()))?;
        Self::read_from(bytes.as_slice()).map_err(err)
    }
}

fn read_u32(r: &mut impl Read) -> std::result::Result<u32, String> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| format!("truncated header: {e}"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::result::Result<u64, String> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| format!("truncated header: {e}"))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> std::result::Result<Vec<f64>, String> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes).map_err(|e| format!("truncated arrays: {e}"))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}
