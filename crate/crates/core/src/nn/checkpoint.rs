//! Binary network checkpoints.
//!
//! All integers are little-endian.
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `FCNN` |
//! | 4     | format version (u32, currently 1) |
//! | 12    | input shape h, w, c (3 × u32) |
//! | 4     | frozen prefix (u32) |
//! | 4     | layer count L (u32) |
//! | 9 × L | per layer: kind tag (u8), then two u32 arguments |
//! | 8     | parameter count P (u64) |
//! | 8 × P | parameters as f64, layer order, each layer weights then biases |
//!
//! Kind tags and arguments: 0 Conv2D (c_in, c_out), 1 MaxPool2x2, 2 Upsample2x,
//! 3 Dense (inputs, outputs), 4 ReLU, 5 Tanh, 6 Softmax, 7 CenterCrop (size, 0).
//! Unused arguments are written as 0.

use std::fs;
use std::path::Path;

use super::{Layer, LayerSpec, Network};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FCNN";
const VERSION: u32 = 1;

fn tag(spec: &LayerSpec) -> (u8, u32, u32) {
    match *spec {
        LayerSpec::Conv2D { c_in, c_out } => (0, c_in as u32, c_out as u32),
        LayerSpec::MaxPool2x2 => (1, 0, 0),
        LayerSpec::UpsampleNearest2x => (2, 0, 0),
        LayerSpec::Dense { inputs, outputs } => (3, inputs as u32, outputs as u32),
        LayerSpec::ReLU => (4, 0, 0),
        LayerSpec::Tanh => (5, 0, 0),
        LayerSpec::Softmax => (6, 0, 0),
        LayerSpec::CenterCrop { size } => (7, size as u32, 0),
    }
}

fn untag(t: u8, a: u32, b: u32) -> Result<LayerSpec> {
    let (a, b) = (a as usize, b as usize);
    Ok(match t {
        0 => LayerSpec::Conv2D { c_in: a, c_out: b },
        1 => LayerSpec::MaxPool2x2,
        2 => LayerSpec::UpsampleNearest2x,
        3 => LayerSpec::Dense {
            inputs: a,
            outputs: b,
        },
        4 => LayerSpec::ReLU,
        5 => LayerSpec::Tanh,
        6 => LayerSpec::Softmax,
        7 => LayerSpec::CenterCrop { size: a },
        other => return Err(Error::invalid(format!("unknown layer tag {other}"))),
    })
}

pub fn encode(net: &Network) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + net.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let (h, w, c) = net.input_shape();
    for v in [h, w, c, net.frozen_prefix, net.layers().len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for l in net.layers() {
        let (t, a, b) = tag(&l.spec);
        out.push(t);
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
    }
    out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    for l in net.layers() {
        for p in &l.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::invalid(format!("checkpoint truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::invalid("not a network checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::invalid(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let shape = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let frozen = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    let mut specs = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let t = r.take(1)?[0];
        let (a, b) = (r.u32()?, r.u32()?);
        specs.push(untag(t, a, b)?);
    }
    let total = r.u64()? as usize;
    let expected: usize = specs.iter().map(|s| s.param_count()).sum();
    if total != expected {
        return Err(Error::invalid(format!(
            "checkpoint declares {total} parameters, layers need {expected}"
        )));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for spec in specs {
        let params = (0..spec.param_count())
            .map(|_| r.f64())
            .collect::<Result<Vec<_>>>()?;
        layers.push(Layer { spec, params });
    }
    if r.pos != bytes.len() {
        return Err(Error::invalid("trailing bytes after checkpoint"));
    }
    let mut net = Network::from_layers(shape, layers)?;
    net.frozen_prefix = frozen;
    Ok(net)
}

pub fn save(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let specs = [
            LayerSpec::Conv2D { c_in: 1, c_out: 2 },
            LayerSpec::ReLU,
            LayerSpec::MaxPool2x2,
            LayerSpec::Dense {
                inputs: 8,
                outputs: 3,
            },
            LayerSpec::Softmax,
        ];
        let net = Network::new((4, 4, 1), &specs, 9).unwrap();
        let bytes = encode(&net);
        assert_eq!(&bytes[..4], b"FCNN");
        assert_eq!(bytes.len(), 4 + 4 + 20 + 9 * 5 + 8 + 8 * net.param_count());
        assert_eq!(decode(&bytes).unwrap(), net);

        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
    }
}
