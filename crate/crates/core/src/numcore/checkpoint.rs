//! Flat binary network checkpoints.
//!
//! Layout of one network block (all integers and floats little-endian):
//!
//! | field              | type                 |
//! |--------------------|----------------------|
//! | magic              | 8 bytes `CMDPNET\x01`|
//! | number of sizes n  | u32                  |
//! | layer sizes        | n × u64              |
//! | hidden activations | (n − 2) × u8, 0 = tanh, 1 = relu |
//! | layer-norm flag    | u8                   |
//! | parameter count    | u64                  |
//! | parameters         | count × f64, per layer: weights row-major (out × in) then biases |
//!
//! Parameters are always stored as 64-bit floats regardless of the in-memory
//! scalar type.

use std::io::{Read, Write};

use super::dense::{Activation, DenseNet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const NET_MAGIC: &[u8; 8] = b"CMDPNET\x01";

pub fn write_net<T: Scalar, W: Write>(net: &DenseNet<T>, w: &mut W) -> Result<()> {
    w.write_all(NET_MAGIC)?;
    w.write_all(&(net.sizes().len() as u32).to_le_bytes())?;
    for &s in net.sizes() {
        w.write_all(&(s as u64).to_le_bytes())?;
    }
    for a in net.activations() {
        w.write_all(&[match a {
            Activation::Tanh => 0u8,
            Activation::Relu => 1u8,
        }])?;
    }
    w.write_all(&[net.layer_norm_first() as u8])?;
    w.write_all(&(net.params().len() as u64).to_le_bytes())?;
    for p in net.params() {
        w.write_all(&p.as_f64().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_net<T: Scalar, R: Read>(r: &mut R) -> Result<DenseNet<T>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != NET_MAGIC {
        return Err(Error::Checkpoint(format!("bad network magic {magic:?}")));
    }
    let n = read_u32(r)? as usize;
    if !(2..=64).contains(&n) {
        return Err(Error::Checkpoint(format!("implausible layer count {n}")));
    }
    let sizes = (0..n)
        .map(|_| read_u64(r).map(|s| s as usize))
        .collect::<Result<Vec<_>>>()?;
    let activations = (0..n - 2)
        .map(|_| match read_u8(r)? {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Relu),
            b => Err(Error::Checkpoint(format!("unknown activation tag {b}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let ln = read_u8(r)? != 0;
    let mut net = DenseNet::with_activations(&sizes, activations, ln).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let count = read_u64(r)? as usize;
    if count != net.params().len() {
        return Err(Error::Checkpoint(format!(
            "parameter count {count} does not match sizes {sizes:?}"
        )));
    }
    for p in net.params_mut() {
        *p = T::of(read_f64(r)?);
    }
    Ok(net)
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
