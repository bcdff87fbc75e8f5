//! Binary network checkpoints.
//!
//! Layout (all integers little-endian `u64`, parameters little-endian `f64`):
//!
//! ```text
//! "RLS3NET1"
//! layer_count
//! layer_count × (inputs, outputs, activation_tag)
//! param_count
//! param_count × f64   -- per layer: weights row-major, then bias
//! ```

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::{Activation, Dense, Mlp, Scalar};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RLS3NET1";

const MAX_DIM: u64 = 1 << 24;

pub fn write_network<T: Scalar, W: Write>(net: &Mlp<T>, mut out: W) -> Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&(net.layers().len() as u64).to_le_bytes())?;
    for layer in net.layers() {
        out.write_all(&(layer.inputs() as u64).to_le_bytes())?;
        out.write_all(&(layer.outputs() as u64).to_le_bytes())?;
        out.write_all(&layer.activation.tag().to_le_bytes())?;
    }
    out.write_all(&(net.param_count() as u64).to_le_bytes())?;
    for p in net.params_flat() {
        out.write_all(&p.as_f64().to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_network<T: Scalar, R: Read>(mut input: R) -> Result<Mlp<T>> {
    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|e| Error::Checkpoint(format!("missing magic: {e}")))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let count = read_u64(&mut input)?;
    if count == 0 || count > 1024 {
        return Err(Error::Checkpoint(format!("implausible layer count {count}")));
    }
    let mut shapes = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let inputs = read_u64(&mut input)?;
        let outputs = read_u64(&mut input)?;
        let tag = read_u64(&mut input)?;
        if inputs == 0 || outputs == 0 || inputs > MAX_DIM || outputs > MAX_DIM {
            return Err(Error::Checkpoint(format!("implausible layer shape {inputs}×{outputs}")));
        }
        let activation =
            Activation::from_tag(tag).ok_or_else(|| Error::Checkpoint(format!("unknown activation tag {tag}")))?;
        shapes.push((inputs as usize, outputs as usize, activation));
    }
    let expected: usize = shapes.iter().map(|(i, o, _)| i * o + o).sum();
    let params = read_u64(&mut input)? as usize;
    if params != expected {
        return Err(Error::Checkpoint(format!(
            "parameter count {params} does not match layer shapes ({expected})"
        )));
    }
    let mut next = || -> Result<T> {
        let mut buf = [0u8; 8];
        input
            .read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("truncated parameters: {e}")))?;
        Ok(T::of(f64::from_le_bytes(buf)))
    };
    let mut layers = Vec::with_capacity(shapes.len());
    for (inputs, outputs, activation) in shapes {
        let mut w = Vec::with_capacity(inputs * outputs);
        for _ in 0..inputs * outputs {
            w.push(next()?);
        }
        let mut b = Vec::with_capacity(outputs);
        for _ in 0..outputs {
            b.push(next()?);
        }
        layers.push(Dense {
            weights: Array2::from_shape_vec((inputs, outputs), w).expect("sized above"),
            bias: Array1::from_vec(b),
            activation,
        });
    }
    Mlp::new(layers).map_err(|e| Error::Checkpoint(e.to_string()))
}
