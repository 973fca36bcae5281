//! `.wtz` weights: magic, version, loss kind, input shape, layer manifest,
//! then every layer's arrays as little-endian f32.

use super::layers::{Layer, LayerKind, Param};
use super::network::{LossKind, Network};
use super::tensor::Real;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"WAMIWTZ\0";
pub const VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated(format!(
                "weights end while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn dim(&mut self, what: &str) -> Result<usize> {
        let v = self.u32(what)? as usize;
        if v == 0 || v > 1 << 26 {
            return Err(Error::Format(format!("implausible {what} {v}")));
        }
        Ok(v)
    }

    fn reals<T: Real>(&mut self, n: usize, what: &str) -> Result<Vec<T>> {
        let raw = self.take(n * 4, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| T::from_f32(f32::from_le_bytes(c.try_into().unwrap())).unwrap())
            .collect())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_reals<T: Real>(out: &mut Vec<u8>, v: &[T]) {
    for x in v {
        out.extend_from_slice(&x.to_f32().unwrap().to_le_bytes());
    }
}

pub fn save_weights<T: Real>(net: &Network<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(net.loss_kind() as u8);
    for d in net.input_shape() {
        put_u32(&mut out, d);
    }
    put_u32(&mut out, net.layers().len());
    for l in net.layers() {
        out.push(l.kind() as u8);
        match l {
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                put_u32(&mut out, *in_channels);
                put_u32(&mut out, *out_channels);
                put_u32(&mut out, *kernel);
            }
            Layer::BatchNorm { channels, .. } => put_u32(&mut out, *channels),
            Layer::Dense { inputs, outputs, .. } => {
                put_u32(&mut out, *inputs);
                put_u32(&mut out, *outputs);
            }
            _ => {}
        }
    }
    for l in net.layers() {
        match l {
            Layer::Conv2d { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                put_reals(&mut out, &weight.value);
                put_reals(&mut out, &bias.value);
            }
            Layer::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                ..
            } => {
                put_reals(&mut out, &gamma.value);
                put_reals(&mut out, &beta.value);
                put_reals(&mut out, running_mean);
                put_reals(&mut out, running_var);
            }
            _ => {}
        }
    }
    out
}

pub fn load_weights<T: Real>(bytes: &[u8]) -> Result<Network<T>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format("not a .wtz weights file (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported weights version {version}")));
    }
    let loss_code = r.u8("loss kind")?;
    let loss = LossKind::from_code(loss_code)
        .ok_or_else(|| Error::Format(format!("unknown loss kind {loss_code}")))?;
    let input = [r.dim("input channels")?, r.dim("input height")?, r.dim("input width")?];
    let count = r.u32("layer count")? as usize;
    if count > 1024 {
        return Err(Error::Format(format!("implausible layer count {count}")));
    }
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let code = r.u8("layer kind")?;
        let kind = LayerKind::from_code(code)
            .ok_or_else(|| Error::Format(format!("unknown layer kind {code}")))?;
        let dims = match kind {
            LayerKind::Conv2d => vec![r.dim("conv in")?, r.dim("conv out")?, r.dim("conv kernel")?],
            LayerKind::BatchNorm => vec![r.dim("batchnorm channels")?],
            LayerKind::Dense => vec![r.dim("dense in")?, r.dim("dense out")?],
            _ => vec![],
        };
        manifest.push((kind, dims));
    }
    let mut layers = Vec::with_capacity(count);
    for (kind, d) in manifest {
        let layer = match kind {
            LayerKind::Conv2d => Layer::Conv2d {
                in_channels: d[0],
                out_channels: d[1],
                kernel: d[2],
                weight: Param::new(r.reals(d[0] * d[1] * d[2] * d[2], "conv weight")?),
                bias: Param::new(r.reals(d[1], "conv bias")?),
            },
            LayerKind::BatchNorm => Layer::BatchNorm {
                channels: d[0],
                gamma: Param::new(r.reals(d[0], "batchnorm gamma")?),
                beta: Param::new(r.reals(d[0], "batchnorm beta")?),
                running_mean: r.reals(d[0], "batchnorm mean")?,
                running_var: r.reals(d[0], "batchnorm variance")?,
            },
            LayerKind::Dense => Layer::Dense {
                inputs: d[0],
                outputs: d[1],
                weight: Param::new(r.reals(d[0] * d[1], "dense weight")?),
                bias: Param::new(r.reals(d[1], "dense bias")?),
            },
            LayerKind::Relu => Layer::Relu,
            LayerKind::MaxPool2 => Layer::MaxPool2,
            LayerKind::Softmax => Layer::Softmax,
            LayerKind::Sigmoid => Layer::Sigmoid,
        };
        if let Layer::BatchNorm { running_var, .. } = &layer {
            if running_var.iter().any(|v| !(*v > T::zero())) {
                return Err(Error::Format("batchnorm running variance must be positive".into()));
            }
        }
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after weights",
            bytes.len() - r.pos
        )));
    }
    Network::new(input, layers, loss).map_err(|e| Error::Format(format!("inconsistent manifest: {e}")))
}

pub fn save_weights_file<T: Real>(path: &std::path::Path, net: &Network<T>) -> Result<()> {
    std::fs::write(path, save_weights(net))?;
    Ok(())
}

pub fn load_weights_file<T: Real>(path: &std::path::Path) -> Result<Network<T>> {
    load_weights(&std::fs::read(path)?)
}
