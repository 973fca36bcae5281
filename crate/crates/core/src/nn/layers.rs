use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::tensor::{Real, Tensor4};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Trainable array with its gradient and momentum buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub velocity: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn new(value: Vec<T>) -> Self {
        let n = value.len();
        Self {
            value,
            grad: vec![T::zero(); n],
            velocity: vec![T::zero(); n],
        }
    }

    fn he_normal(n: usize, fan_in: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
        Self::new((0..n).map(|_| T::lit(normal.sample(rng))).collect())
    }

    fn filled(n: usize, v: f64) -> Self {
        Self::new(vec![T::lit(v); n])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv2d = 1,
    BatchNorm = 2,
    Relu = 3,
    MaxPool2 = 4,
    Dense = 5,
    Softmax = 6,
    Sigmoid = 7,
}

impl LayerKind {
    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            1 => Self::Conv2d,
            2 => Self::BatchNorm,
            3 => Self::Relu,
            4 => Self::MaxPool2,
            5 => Self::Dense,
            6 => Self::Softmax,
            7 => Self::Sigmoid,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    /// Square kernel, stride 1, zero padding `k / 2`.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        /// `out x (in * k * k)`
        weight: Param<T>,
        bias: Param<T>,
    },
    /// Per-channel normalization over batch and spatial positions.
    BatchNorm {
        channels: usize,
        gamma: Param<T>,
        beta: Param<T>,
        running_mean: Vec<T>,
        running_var: Vec<T>,
    },
    Relu,
    /// 2x2 window, stride 2, odd trailing row/column dropped.
    MaxPool2,
    /// Flattens its input. Weight is `outputs x inputs`.
    Dense {
        inputs: usize,
        outputs: usize,
        weight: Param<T>,
        bias: Param<T>,
    },
    /// Over the channel axis.
    Softmax,
    Sigmoid,
}

/// What a training-mode forward pass keeps for the backward pass.
#[derive(Clone, Debug)]
pub enum Cache<T> {
    Conv { cols: Vec<T>, in_dims: [usize; 4] },
    Bn {
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_mean: Vec<T>,
        /// Unbiased.
        batch_var: Vec<T>,
    },
    Relu { input: Vec<T> },
    Pool { argmax: Vec<usize>, in_dims: [usize; 4] },
    Dense { input: Vec<T>, in_dims: [usize; 4] },
    Activation { output: Vec<T> },
}

impl<T: Real> Layer<T> {
    pub fn conv2d(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel,
            weight: Param::he_normal(out_channels * fan_in, fan_in, rng),
            bias: Param::filled(out_channels, 0.0),
        }
    }

    pub fn dense(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Layer::Dense {
            inputs,
            outputs,
            weight: Param::he_normal(inputs * outputs, inputs, rng),
            bias: Param::filled(outputs, 0.0),
        }
    }

    pub fn batch_norm(channels: usize) -> Self {
        Layer::BatchNorm {
            channels,
            gamma: Param::filled(channels, 1.0),
            beta: Param::filled(channels, 0.0),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d { .. } => LayerKind::Conv2d,
            Layer::BatchNorm { .. } => LayerKind::BatchNorm,
            Layer::Relu => LayerKind::Relu,
            Layer::MaxPool2 => LayerKind::MaxPool2,
            Layer::Dense { .. } => LayerKind::Dense,
            Layer::Softmax => LayerKind::Softmax,
            Layer::Sigmoid => LayerKind::Sigmoid,
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Conv2d { weight, bias, .. } | Layer::Dense { weight, bias, .. } => vec![weight, bias],
            Layer::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Conv2d { weight, bias, .. } | Layer::Dense { weight, bias, .. } => vec![weight, bias],
            Layer::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            _ => vec![],
        }
    }

    /// Per-sample output shape `(c, h, w)` for a per-sample input shape.
    pub fn output_shape(&self, s: [usize; 3]) -> Result<[usize; 3]> {
        let [c, h, w] = s;
        let bad = |what: String| Err(Error::DimensionMismatch(format!("{:?}: {what}", self.kind())));
        match self {
            Layer::Conv2d {
                in_channels,
                out_channels,
                ..
            } => {
                if c != *in_channels {
                    return bad(format!("expects {in_channels} channels, got {c}"));
                }
                Ok([*out_channels, h, w])
            }
            Layer::BatchNorm { channels, .. } => {
                if c != *channels {
                    return bad(format!("expects {channels} channels, got {c}"));
                }
                Ok(s)
            }
            Layer::MaxPool2 => {
                if h < 2 || w < 2 {
                    return bad(format!("input {h}x{w} too small to pool"));
                }
                Ok([c, h / 2, w / 2])
            }
            Layer::Dense { inputs, outputs, .. } => {
                if c * h * w != *inputs {
                    return bad(format!("expects {inputs} inputs, got {}", c * h * w));
                }
                Ok([*outputs, 1, 1])
            }
            Layer::Relu | Layer::Softmax | Layer::Sigmoid => Ok(s),
        }
    }

    /// Returns the output and, in training mode, the cache for `backward`.
    pub fn forward(&self, x: &Tensor4<T>, training: bool) -> Result<(Tensor4<T>, Option<Cache<T>>)> {
        let [n, c, h, w] = x.dims();
        let [oc, oh, ow] = self.output_shape([c, h, w])?;
        let out_dims = [n, oc, oh, ow];
        match self {
            Layer::Conv2d {
                kernel,
                weight,
                bias,
                ..
            } => {
                let cols = im2col(x, *kernel);
                let hw = h * w;
                let p = n * hw;
                let r = c * kernel * kernel;
                let mut y = vec![T::zero(); oc * p];
                T::gemm(oc, r, p, T::one(), &weight.value, r as isize, 1, &cols, p as isize, 1, T::zero(), &mut y, p as isize, 1);
                let mut out = Tensor4::zeros(out_dims);
                let od = out.data_mut();
                for s in 0..n {
                    for o in 0..oc {
                        let src = &y[o * p + s * hw..o * p + (s + 1) * hw];
                        let dst = &mut od[(s * oc + o) * hw..(s * oc + o + 1) * hw];
                        let b = bias.value[o];
                        for (d, v) in dst.iter_mut().zip(src) {
                            *d = *v + b;
                        }
                    }
                }
                let cache = training.then(|| Cache::Conv {
                    cols,
                    in_dims: x.dims(),
                });
                Ok((out, cache))
            }
            Layer::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                ..
            } => {
                let hw = h * w;
                let m = n * hw;
                let eps = T::lit(BN_EPS);
                let xd = x.data();
                let mut out = Tensor4::zeros(out_dims);
                if !training {
                    let od = out.data_mut();
                    for ch in 0..c {
                        let inv = (running_var[ch] + eps).sqrt().recip();
                        let (g, b, mu) = (gamma.value[ch], beta.value[ch], running_mean[ch]);
                        for s in 0..n {
                            let base = (s * c + ch) * hw;
                            for i in base..base + hw {
                                od[i] = (xd[i] - mu) * inv * g + b;
                            }
                        }
                    }
                    return Ok((out, None));
                }
                let mut xhat = vec![T::zero(); xd.len()];
                let mut inv_std = vec![T::zero(); c];
                let mut batch_mean = vec![T::zero(); c];
                let mut batch_var = vec![T::zero(); c];
                let mf = T::from_usize(m).unwrap();
                let od = out.data_mut();
                for ch in 0..c {
                    let mut sum = T::zero();
                    for s in 0..n {
                        let base = (s * c + ch) * hw;
                        for v in &xd[base..base + hw] {
                            sum += *v;
                        }
                    }
                    let mean = sum / mf;
                    let mut sq = T::zero();
                    for s in 0..n {
                        let base = (s * c + ch) * hw;
                        for v in &xd[base..base + hw] {
                            sq += (*v - mean) * (*v - mean);
                        }
                    }
                    let var = sq / mf;
                    let inv = (var + eps).sqrt().recip();
                    inv_std[ch] = inv;
                    batch_mean[ch] = mean;
                    batch_var[ch] = if m > 1 {
                        sq / T::from_usize(m - 1).unwrap()
                    } else {
                        T::zero()
                    };
                    let (g, b) = (gamma.value[ch], beta.value[ch]);
                    for s in 0..n {
                        let base = (s * c + ch) * hw;
                        for i in base..base + hw {
                            let xh = (xd[i] - mean) * inv;
                            xhat[i] = xh;
                            od[i] = xh * g + b;
                        }
                    }
                }
                Ok((
                    out,
                    Some(Cache::Bn {
                        xhat,
                        inv_std,
                        batch_mean,
                        batch_var,
                    }),
                ))
            }
            Layer::Relu => {
                let out = Tensor4::new(out_dims, x.data().iter().map(|v| v.max(T::zero())).collect())?;
                let cache = training.then(|| Cache::Relu {
                    input: x.data().to_vec(),
                });
                Ok((out, cache))
            }
            Layer::MaxPool2 => {
                let mut out = Tensor4::zeros(out_dims);
                let mut argmax = vec![0usize; out.data().len()];
                let xd = x.data();
                let od = out.data_mut();
                for plane in 0..n * c {
                    let ib = plane * h * w;
                    let ob = plane * oh * ow;
                    for y in 0..oh {
                        for xx in 0..ow {
                            let mut best = ib + 2 * y * w + 2 * xx;
                            for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                                let i = ib + (2 * y + dy) * w + 2 * xx + dx;
                                if xd[i] > xd[best] {
                                    best = i;
                                }
                            }
                            od[ob + y * ow + xx] = xd[best];
                            argmax[ob + y * ow + xx] = best;
                        }
                    }
                }
                let cache = training.then(|| Cache::Pool {
                    argmax,
                    in_dims: x.dims(),
                });
                Ok((out, cache))
            }
            Layer::Dense {
                inputs,
                outputs,
                weight,
                bias,
            } => {
                let (fi, fo) = (*inputs, *outputs);
                let mut y = vec![T::zero(); n * fo];
                for s in 0..n {
                    y[s * fo..(s + 1) * fo].copy_from_slice(&bias.value);
                }
                T::gemm(n, fi, fo, T::one(), x.data(), fi as isize, 1, &weight.value, 1, fi as isize, T::one(), &mut y, fo as isize, 1);
                let cache = training.then(|| Cache::Dense {
                    input: x.data().to_vec(),
                    in_dims: x.dims(),
                });
                Ok((Tensor4::new(out_dims, y)?, cache))
            }
            Layer::Softmax => {
                let hw = h * w;
                let mut out = x.clone();
                let od = out.data_mut();
                for s in 0..n {
                    for p in 0..hw {
                        let idx = |ch: usize| (s * c + ch) * hw + p;
                        let mx = (0..c).map(|ch| od[idx(ch)]).fold(T::neg_infinity(), T::max);
                        let mut sum = T::zero();
                        for ch in 0..c {
                            let e = (od[idx(ch)] - mx).exp();
                            od[idx(ch)] = e;
                            sum += e;
                        }
                        for ch in 0..c {
                            od[idx(ch)] = od[idx(ch)] / sum;
                        }
                    }
                }
                let cache = training.then(|| Cache::Activation {
                    output: out.data().to_vec(),
                });
                Ok((out, cache))
            }
            Layer::Sigmoid => {
                let out = Tensor4::new(
                    out_dims,
                    x.data().iter().map(|v| T::one() / (T::one() + (-*v).exp())).collect(),
                )?;
                let cache = training.then(|| Cache::Activation {
                    output: out.data().to_vec(),
                });
                Ok((out, cache))
            }
        }
    }

    /// Writes parameter gradients (overwriting) and returns the gradient
    /// with respect to the layer input.
    pub fn backward(&mut self, cache: &Cache<T>, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let kind = self.kind();
        let mismatch = || Error::InvalidArgument(format!("{kind:?}: cache does not belong to this layer"));
        match (self, cache) {
            (
                Layer::Conv2d {
                    kernel,
                    weight,
                    bias,
                    out_channels,
                    ..
                },
                Cache::Conv { cols, in_dims },
            ) => {
                let [n, c, h, w] = *in_dims;
                let (k, oc) = (*kernel, *out_channels);
                let hw = h * w;
                let p = n * hw;
                let r = c * k * k;
                let dyd = dy.data();
                let mut dyp = vec![T::zero(); oc * p];
                for s in 0..n {
                    for o in 0..oc {
                        dyp[o * p + s * hw..o * p + (s + 1) * hw]
                            .copy_from_slice(&dyd[(s * oc + o) * hw..(s * oc + o + 1) * hw]);
                    }
                }
                T::gemm(oc, p, r, T::one(), &dyp, p as isize, 1, cols, 1, p as isize, T::zero(), &mut weight.grad, r as isize, 1);
                for o in 0..oc {
                    bias.grad[o] = dyp[o * p..(o + 1) * p].iter().copied().sum();
                }
                let mut dcols = vec![T::zero(); r * p];
                T::gemm(r, oc, p, T::one(), &weight.value, 1, r as isize, &dyp, p as isize, 1, T::zero(), &mut dcols, p as isize, 1);
                Ok(col2im(&dcols, *in_dims, k))
            }
            (
                Layer::BatchNorm { gamma, beta, .. },
                Cache::Bn { xhat, inv_std, .. },
            ) => {
                let [n, c, h, w] = dy.dims();
                let hw = h * w;
                let mf = T::from_usize(n * hw).unwrap();
                let dyd = dy.data();
                let mut dx = Tensor4::zeros(dy.dims());
                let dxd = dx.data_mut();
                for ch in 0..c {
                    let (mut sdy, mut sdyx) = (T::zero(), T::zero());
                    for s in 0..n {
                        let base = (s * c + ch) * hw;
                        for i in base..base + hw {
                            sdy += dyd[i];
                            sdyx += dyd[i] * xhat[i];
                        }
                    }
                    gamma.grad[ch] = sdyx;
                    beta.grad[ch] = sdy;
                    let g = gamma.value[ch];
                    let k = g * inv_std[ch] / mf;
                    for s in 0..n {
                        let base = (s * c + ch) * hw;
                        for i in base..base + hw {
                            dxd[i] = k * (mf * dyd[i] - sdy - xhat[i] * sdyx);
                        }
                    }
                }
                Ok(dx)
            }
            (Layer::Relu, Cache::Relu { input }) => Tensor4::new(
                dy.dims(),
                dy.data()
                    .iter()
                    .zip(input)
                    .map(|(g, x)| if *x > T::zero() { *g } else { T::zero() })
                    .collect(),
            ),
            (Layer::MaxPool2, Cache::Pool { argmax, in_dims }) => {
                let mut dx = Tensor4::zeros(*in_dims);
                let dxd = dx.data_mut();
                for (g, &i) in dy.data().iter().zip(argmax) {
                    dxd[i] += *g;
                }
                Ok(dx)
            }
            (
                Layer::Dense {
                    inputs,
                    outputs,
                    weight,
                    bias,
                },
                Cache::Dense { input, in_dims },
            ) => {
                let (fi, fo) = (*inputs, *outputs);
                let n = in_dims[0];
                let dyd = dy.data();
                T::gemm(fo, n, fi, T::one(), dyd, 1, fo as isize, input, fi as isize, 1, T::zero(), &mut weight.grad, fi as isize, 1);
                for o in 0..fo {
                    bias.grad[o] = (0..n).map(|s| dyd[s * fo + o]).sum();
                }
                let mut dx = Tensor4::zeros(*in_dims);
                T::gemm(n, fo, fi, T::one(), dyd, fo as isize, 1, &weight.value, fi as isize, 1, T::zero(), dx.data_mut(), fi as isize, 1);
                Ok(dx)
            }
            (Layer::Softmax, Cache::Activation { output }) => {
                let [n, c, h, w] = dy.dims();
                let hw = h * w;
                let dyd = dy.data();
                let mut dx = Tensor4::zeros(dy.dims());
                let dxd = dx.data_mut();
                for s in 0..n {
                    for p in 0..hw {
                        let idx = |ch: usize| (s * c + ch) * hw + p;
                        let dot: T = (0..c).map(|ch| dyd[idx(ch)] * output[idx(ch)]).sum();
                        for ch in 0..c {
                            dxd[idx(ch)] = output[idx(ch)] * (dyd[idx(ch)] - dot);
                        }
                    }
                }
                Ok(dx)
            }
            (Layer::Sigmoid, Cache::Activation { output }) => Tensor4::new(
                dy.dims(),
                dy.data()
                    .iter()
                    .zip(output)
                    .map(|(g, y)| *g * *y * (T::one() - *y))
                    .collect(),
            ),
            _ => Err(mismatch()),
        }
    }
}

/// `(c * k * k) x (n * h * w)` patch matrix with zero padding `k / 2`.
pub fn im2col<T: Real>(x: &Tensor4<T>, k: usize) -> Vec<T> {
    let [n, c, h, w] = x.dims();
    let pad = (k / 2) as isize;
    let hw = h * w;
    let p = n * hw;
    let mut cols = vec![T::zero(); c * k * k * p];
    let xd = x.data();
    cols.par_chunks_mut(p).enumerate().for_each(|(r, row)| {
        let ch = r / (k * k);
        let ky = (r / k) % k;
        let kx = r % k;
        for s in 0..n {
            let plane = &xd[(s * c + ch) * hw..(s * c + ch + 1) * hw];
            for y in 0..h {
                let iy = y as isize + ky as isize - pad;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                let dst = &mut row[s * hw + y * w..s * hw + (y + 1) * w];
                for (xx, d) in dst.iter_mut().enumerate() {
                    let ix = xx as isize + kx as isize - pad;
                    if ix >= 0 && ix < w as isize {
                        *d = plane[iy as usize * w + ix as usize];
                    }
                }
            }
        }
    });
    cols
}

fn col2im<T: Real>(dcols: &[T], in_dims: [usize; 4], k: usize) -> Tensor4<T> {
    let [n, c, h, w] = in_dims;
    let pad = (k / 2) as isize;
    let hw = h * w;
    let p = n * hw;
    let mut dx = Tensor4::zeros(in_dims);
    dx.data_mut()
        .par_chunks_mut(hw)
        .enumerate()
        .for_each(|(plane, out)| {
            let (s, ch) = (plane / c, plane % c);
            for ky in 0..k {
                for kx in 0..k {
                    let r = (ch * k + ky) * k + kx;
                    let row = &dcols[r * p + s * hw..r * p + (s + 1) * hw];
                    for y in 0..h {
                        let iy = y as isize + ky as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for xx in 0..w {
                            let ix = xx as isize + kx as isize - pad;
                            if ix >= 0 && ix < w as isize {
                                out[iy as usize * w + ix as usize] += row[y * w + xx];
                            }
                        }
                    }
                }
            }
        });
    dx
}
