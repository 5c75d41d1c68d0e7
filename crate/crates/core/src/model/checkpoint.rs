//! Binary model checkpoint.
//!
//! Little-endian throughout:
//!
//! ```text
//! b"PRNK"  u32 version (=1)  u32 layer count
//! per layer: u64 in, u64 out, in·out f64 weights (row-major), out f64 biases
//! ```

use std::io::{Read, Write};

use super::{Mlp, ModelError};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"PRNK";
const VERSION: u32 = 1;

pub fn save(model: &Mlp, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(model.layers().len() as u32).to_le_bytes())?;
    for (weight, bias) in model.layers() {
        w.write_all(&(weight.shape()[0] as u64).to_le_bytes())?;
        w.write_all(&(weight.shape()[1] as u64).to_le_bytes())?;
        for v in weight.data().iter().chain(bias.data()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N], ModelError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| ModelError::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>, ModelError> {
    (0..n).map(|_| read_array::<8>(r).map(f64::from_le_bytes)).collect()
}

pub fn load(mut r: impl Read) -> Result<Mlp, ModelError> {
    if &read_array::<4>(&mut r)? != MAGIC {
        return Err(ModelError::Checkpoint("not a model checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let inp = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let out = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let n = inp
            .checked_mul(out)
            .filter(|&n| n <= 1 << 32)
            .ok_or_else(|| ModelError::Checkpoint(format!("implausible layer {inp}×{out}")))?;
        let weight = Tensor::matrix(inp, out, read_f64s(&mut r, n)?);
        let bias = Tensor::matrix(1, out, read_f64s(&mut r, out)?);
        layers.push((weight, bias));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| ModelError::Checkpoint(e.to_string()))? != 0 {
        return Err(ModelError::Checkpoint("trailing bytes after the last layer".into()));
    }
    Mlp::from_layers(layers)
}
