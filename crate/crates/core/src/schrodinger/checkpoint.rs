//! Bit-exact binary snapshots of a wave function.
//!
//! Layout (little-endian): 8-byte magic, `u32` version, `u32 n_A`, `u32 n_x`,
//! then `f64` fields `L_A, L_x, t, e, m, ħ`, then `n_A·n_x` interleaved
//! `(re, im)` pairs, row-major with `A` slow.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use super::{Grid2D, WaveFunction2D};
use crate::error::{Error, Result};
use crate::model::ModelParams;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"SQCWF1\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 3 * 4 + 6 * 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub wf: WaveFunction2D,
    pub params: ModelParams,
}

pub fn checkpoint_save(wf: &WaveFunction2D, params: &ModelParams, path: &Path) -> Result<()> {
    let g = wf.grid;
    let mut buf = Vec::with_capacity(HEADER_LEN + 16 * g.len());
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for n in [g.n_a, g.n_x] {
        let n = u32::try_from(n).map_err(|_| Error::Format(format!("grid size {n} exceeds u32")))?;
        buf.extend_from_slice(&n.to_le_bytes());
    }
    for v in [g.l_a, g.l_x, wf.t, params.e, params.m, params.hbar] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for z in &wf.amplitudes {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    fs::write(path, buf).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn checkpoint_load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::SizeMismatch {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    if bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("bad magic bytes {:?}", &bytes[..8])));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"));
    let f64_at = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
    let version = u32_at(8);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version(version));
    }
    let (n_a, n_x) = (u32_at(12) as usize, u32_at(16) as usize);
    let fields: Vec<f64> = (0..6).map(|k| f64_at(20 + 8 * k)).collect();
    let expected = HEADER_LEN as u64 + 16 * n_a as u64 * n_x as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: bytes.len() as u64,
        });
    }
    let grid = Grid2D::new(n_a, n_x, fields[0], fields[1]).map_err(|e| Error::Format(e.to_string()))?;
    let params = ModelParams::new(fields[3], fields[4], fields[5], 1).map_err(|e| Error::Format(e.to_string()))?;
    let amplitudes = bytes[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    Ok(Checkpoint {
        wf: WaveFunction2D {
            grid,
            amplitudes,
            t: fields[2],
        },
        params,
    })
}
