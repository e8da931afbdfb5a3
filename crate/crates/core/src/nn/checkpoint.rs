//! Model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "GRPN" | version u16 = 1 | layer count u32 | input dim u32
//! | input shape (channels, height, width) 3 x u32 | class count u32
//! per layer: kind tag u8, then
//!   1 dense    input u32, output u32, weights f64[out*in], bias f64[out]
//!   2 conv2d   channels, height, width u32, out channels u32,
//!              weights f64[out*in_ch*25], bias f64[out]
//!   3 maxpool  channels, height, width u32
//!   4 relu     channels, height, width u32
//!   5 dropout  channels, height, width u32, rate f64
//!   6 softmax  len u32
//! ```

use super::layers::{Layer, Shape, KERNEL};
use super::model::NetworkModel;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GRPN";
const VERSION: u16 = 1;

pub fn save_model(model: &NetworkModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, model.layers().len());
    put_u32(&mut out, model.input_dim());
    put_shape(&mut out, model.input_shape());
    put_u32(&mut out, model.class_count());
    for layer in model.layers() {
        match layer {
            Layer::Dense {
                input,
                output,
                weights,
                bias,
            } => {
                out.push(1);
                put_u32(&mut out, *input);
                put_u32(&mut out, *output);
                put_f64s(&mut out, weights);
                put_f64s(&mut out, bias);
            }
            Layer::Conv2d {
                input,
                out_channels,
                weights,
                bias,
            } => {
                out.push(2);
                put_shape(&mut out, *input);
                put_u32(&mut out, *out_channels);
                put_f64s(&mut out, weights);
                put_f64s(&mut out, bias);
            }
            Layer::MaxPool { input } => {
                out.push(3);
                put_shape(&mut out, *input);
            }
            Layer::Relu { shape } => {
                out.push(4);
                put_shape(&mut out, *shape);
            }
            Layer::Dropout { rate, shape } => {
                out.push(5);
                put_shape(&mut out, *shape);
                out.extend_from_slice(&rate.to_le_bytes());
            }
            Layer::Softmax { len } => {
                out.push(6);
                put_u32(&mut out, *len);
            }
        }
    }
    out
}

pub fn load_model(bytes: &[u8]) -> Result<NetworkModel> {
    let mut r = Reader { bytes, at: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "not a model checkpoint (magic {magic:?})"
        )));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = r.u32()?;
    let input_dim = r.u32()?;
    let input_shape = r.shape()?;
    let classes = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let layer = match r.take(1)?[0] {
            1 => {
                let (input, output) = (r.u32()?, r.u32()?);
                Layer::Dense {
                    input,
                    output,
                    weights: r.f64s(input.saturating_mul(output))?,
                    bias: r.f64s(output)?,
                }
            }
            2 => {
                let input = r.shape()?;
                let out_channels = r.u32()?;
                let n = out_channels.saturating_mul(input.channels * KERNEL * KERNEL);
                Layer::Conv2d {
                    input,
                    out_channels,
                    weights: r.f64s(n)?,
                    bias: r.f64s(out_channels)?,
                }
            }
            3 => Layer::MaxPool { input: r.shape()? },
            4 => Layer::Relu { shape: r.shape()? },
            5 => {
                let shape = r.shape()?;
                let rate = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
                Layer::Dropout { rate, shape }
            }
            6 => Layer::Softmax { len: r.u32()? },
            tag => return Err(Error::Format(format!("unknown layer tag {tag}"))),
        };
        layers.push(layer);
    }
    if r.at != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes",
            bytes.len() - r.at
        )));
    }
    NetworkModel::new(input_dim, input_shape, classes, layers)
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_shape(out: &mut Vec<u8>, s: Shape) {
    for v in [s.channels, s.height, s.width] {
        put_u32(out, v);
    }
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.at..end];
                self.at = end;
                Ok(s)
            }
            None => Err(Error::TruncatedFile(format!(
                "checkpoint needs {n} more bytes at offset {}",
                self.at
            ))),
        }
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn shape(&mut self) -> Result<Shape> {
        Ok(Shape::image(self.u32()?, self.u32()?, self.u32()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Format("tensor too large".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
