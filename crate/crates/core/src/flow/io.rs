//! Flow files: magic `LCFL`, width and height as little-endian `u32`, then
//! the row-major `f32` (little-endian) u-plane followed by the v-plane.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::FlowField;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"LCFL";

pub fn write_flow<W: Write>(mut w: W, flow: &FlowField) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(flow.width as u32).to_le_bytes())?;
    w.write_all(&(flow.height as u32).to_le_bytes())?;
    for v in flow.u.iter().chain(&flow.v) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_flow<R: Read>(mut r: R) -> Result<FlowField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a flow file (bad magic)".into()));
    }
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    let width = u32::from_le_bytes(b) as usize;
    r.read_exact(&mut b)?;
    let height = u32::from_le_bytes(b) as usize;
    let n = width * height;
    let mut raw = vec![0u8; 8 * n];
    r.read_exact(&mut raw)?;
    let vals: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("flow file contains non-finite values".into()));
    }
    Ok(FlowField {
        width,
        height,
        u: vals[..n].to_vec(),
        v: vals[n..].to_vec(),
    })
}

pub fn write_flow_file(path: &Path, flow: &FlowField) -> Result<()> {
    write_flow(BufWriter::new(File::create(path)?), flow)
}

pub fn read_flow_file(path: &Path) -> Result<FlowField> {
    read_flow(BufReader::new(File::open(path)?))
}

/// Colour-wheel visualization (`3×H×W`, values in `[0,1]`): hue encodes
/// direction, brightness the magnitude relative to `max_magnitude` (the
/// field's own maximum when `None`).
pub fn flow_to_rgb(flow: &FlowField, max_magnitude: Option<f32>) -> Tensor<f32> {
    let n = flow.width * flow.height;
    let maxm = max_magnitude.unwrap_or_else(|| flow.max_magnitude()).max(1e-6);
    let mut data = vec![0.0f32; 3 * n];
    for i in 0..n {
        let (u, v) = (flow.u[i], flow.v[i]);
        let mag = ((u * u + v * v).sqrt() / maxm).min(1.0);
        let hue = (v.atan2(u) / std::f32::consts::TAU).rem_euclid(1.0) * 6.0;
        let sector = hue.floor() as i32 % 6;
        let f = hue - hue.floor();
        let (r, g, b) = match sector {
            0 => (1.0, f, 0.0),
            1 => (1.0 - f, 1.0, 0.0),
            2 => (0.0, 1.0, f),
            3 => (0.0, 1.0 - f, 1.0),
            4 => (f, 0.0, 1.0),
            _ => (1.0, 0.0, 1.0 - f),
        };
        data[i] = r * mag;
        data[n + i] = g * mag;
        data[2 * n + i] = b * mag;
    }
    Tensor::new(vec![3, flow.height, flow.width], data).expect("finite colours")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flow_file_layout() {
        let f = FlowField {
            width: 2,
            height: 1,
            u: vec![1.0, -2.0],
            v: vec![0.5, 3.0],
        };
        let mut buf = Vec::new();
        write_flow(&mut buf, &f).unwrap();
        assert_eq!(&buf[..4], b"LCFL");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(buf.len(), 12 + 16);
        assert_eq!(f32::from_le_bytes(buf[20..24].try_into().unwrap()), 0.5);
        assert_eq!(read_flow(&buf[..]).unwrap(), f);
    }
}
