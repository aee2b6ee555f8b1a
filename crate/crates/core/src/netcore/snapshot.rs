//! Flat parameter snapshots.
//!
//! Layout (all little-endian): `u64` layer count, then `u64 rows, u64 cols`
//! per layer (rows = output width, cols = input width), then every
//! parameter as `f64` in buffer order (per layer: weights row-major, then
//! bias). Hidden layers are ReLU and the last layer is linear on reload.

use std::io::{Read, Write};

use super::DenseNet;
use crate::error::{Error, Result};

pub fn write_snapshot<W: Write>(net: &DenseNet, mut w: W) -> Result<()> {
    let layers = net.num_layers();
    w.write_all(&(layers as u64).to_le_bytes())?;
    for l in 0..layers {
        let view = net.layer(l);
        w.write_all(&(view.output as u64).to_le_bytes())?;
        w.write_all(&(view.input as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(net.num_params() * 8);
    for p in net.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn snapshot_bytes(net: &DenseNet) -> Vec<u8> {
    let mut out = Vec::new();
    write_snapshot(net, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<DenseNet> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_snapshot(&bytes)
}

fn read_u64(bytes: &[u8], offset: usize) -> Result<u64> {
    bytes
        .get(offset..offset + 8)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(offset, "truncated snapshot header"))
}

pub fn parse_snapshot(bytes: &[u8]) -> Result<DenseNet> {
    let (net, used) = parse_snapshot_prefix(bytes)?;
    if used != bytes.len() {
        return Err(Error::format(used, format!("{} trailing bytes after snapshot", bytes.len() - used)));
    }
    Ok(net)
}

/// Parses one snapshot from the front of `bytes` and returns it with the
/// number of bytes it occupied.
pub fn parse_snapshot_prefix(bytes: &[u8]) -> Result<(DenseNet, usize)> {
    let layers = read_u64(bytes, 0)? as usize;
    if layers == 0 || layers > 1024 {
        return Err(Error::format(0, format!("implausible layer count {layers}")));
    }
    let mut widths = Vec::with_capacity(layers + 1);
    let mut offset = 8;
    for l in 0..layers {
        let rows = read_u64(bytes, offset)? as usize;
        let cols = read_u64(bytes, offset + 8)? as usize;
        if l == 0 {
            widths.push(cols);
        } else if widths[l] != cols {
            return Err(Error::format(
                offset + 8,
                format!("layer {l} expects {cols} inputs but previous layer has {}", widths[l]),
            ));
        }
        widths.push(rows);
        offset += 16;
    }
    let mut net = DenseNet::zeros(&widths, &DenseNet::default_activations(layers))?;
    let need = net.num_params() * 8;
    if bytes.len() < offset + need {
        return Err(Error::format(
            offset,
            format!("expected {need} parameter bytes, found {}", bytes.len() - offset),
        ));
    }
    let params = net.params_mut();
    for (i, chunk) in bytes[offset..offset + need].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(offset + i * 8, "non-finite parameter"));
        }
        params[i] = v;
    }
    Ok((net, offset + need))
}
