use rayon::prelude::*;

use super::layers::{Cache, Layer, Param, BN_MOMENTUM};
use super::tensor::{Real, Tensor4};
use crate::error::{Error, Result};

/// Inference batch size; fixed so results do not depend on thread count.
pub const INFER_CHUNK: usize = 64;
const CE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// Mean over the batch of `-sum t ln p`.
    CrossEntropy = 1,
    /// Mean over the batch of `sum (y - t)^2`.
    MeanSquaredError = 2,
}

impl LossKind {
    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(Self::CrossEntropy),
            2 => Some(Self::MeanSquaredError),
            _ => None,
        }
    }

    pub fn value<T: Real>(self, y: &Tensor4<T>, t: &Tensor4<T>) -> T {
        let n = T::from_usize(y.batch()).unwrap();
        let s: T = match self {
            Self::CrossEntropy => y
                .data()
                .iter()
                .zip(t.data())
                .map(|(p, t)| -*t * p.max(T::lit(CE_FLOOR)).ln())
                .sum(),
            Self::MeanSquaredError => y
                .data()
                .iter()
                .zip(t.data())
                .map(|(p, t)| (*p - *t) * (*p - *t))
                .sum(),
        };
        s / n
    }

    fn gradient<T: Real>(self, y: &Tensor4<T>, t: &Tensor4<T>) -> Tensor4<T> {
        let n = T::from_usize(y.batch()).unwrap();
        let data = match self {
            Self::CrossEntropy => y
                .data()
                .iter()
                .zip(t.data())
                .map(|(p, t)| {
                    if *p > T::lit(CE_FLOOR) {
                        -*t / (*p * n)
                    } else {
                        T::zero()
                    }
                })
                .collect(),
            Self::MeanSquaredError => y
                .data()
                .iter()
                .zip(t.data())
                .map(|(p, t)| T::lit(2.0) * (*p - *t) / n)
                .collect(),
        };
        Tensor4::new(y.dims(), data).unwrap()
    }
}

#[derive(Clone, Debug)]
struct TrainState<T> {
    caches: Vec<Cache<T>>,
    output: Tensor4<T>,
}

#[derive(Clone, Debug)]
pub struct Network<T> {
    input: [usize; 3],
    layers: Vec<Layer<T>>,
    loss: LossKind,
    state: Option<TrainState<T>>,
}

impl<T> PartialEq for Network<T>
where
    T: Real,
{
    /// Architecture and parameters; transient training state is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.input == other.input
            && self.loss == other.loss
            && self.cast::<T>().layers == other.cast::<T>().layers
    }
}

/// Result of a backward pass.
#[derive(Clone, Debug)]
pub struct Backward<T> {
    pub loss: T,
    pub input_grad: Tensor4<T>,
}

impl<T: Real> Network<T> {
    /// Checks that layer shapes chain from `input`.
    pub fn new(input: [usize; 3], layers: Vec<Layer<T>>, loss: LossKind) -> Result<Self> {
        let mut s = input;
        for (i, l) in layers.iter().enumerate() {
            s = l
                .output_shape(s)
                .map_err(|e| Error::DimensionMismatch(format!("layer {i}: {e}")))?;
        }
        Ok(Self {
            input,
            layers,
            loss,
            state: None,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input
    }

    pub fn output_shape(&self) -> [usize; 3] {
        let mut s = self.input;
        for l in &self.layers {
            s = l.output_shape(s).expect("validated at construction");
        }
        s
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        let [_, c, h, w] = x.dims();
        if [c, h, w] != self.input {
            return Err(Error::DimensionMismatch(format!(
                "network input expects {:?}, got {:?}",
                self.input,
                [c, h, w]
            )));
        }
        if x.batch() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        Ok(())
    }

    /// Training mode uses batch statistics and keeps what `backward`
    /// needs; inference mode uses running statistics.
    pub fn forward(&mut self, x: &Tensor4<T>, training: bool) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        if !training {
            self.state = None;
            return self.infer(x);
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let (out, cache) = l
                .forward(&cur, true)
                .map_err(|e| Error::DimensionMismatch(format!("layer {i}: {e}")))?;
            caches.push(cache.expect("training forward yields a cache"));
            cur = out;
        }
        self.state = Some(TrainState {
            caches,
            output: cur.clone(),
        });
        Ok(cur)
    }

    /// Inference on a shared network.
    pub fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            cur = l
                .forward(&cur, false)
                .map_err(|e| Error::DimensionMismatch(format!("layer {i}: {e}")))?
                .0;
        }
        Ok(cur)
    }

    /// Inference over any number of samples in fixed-size chunks evaluated
    /// in parallel; output order follows input order.
    pub fn infer_batched(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let n = x.batch();
        let sl = x.sample_len();
        let [c, h, w] = self.input;
        let chunks: Vec<Tensor4<T>> = x
            .data()
            .par_chunks(INFER_CHUNK * sl)
            .map(|chunk| {
                let b = chunk.len() / sl;
                self.infer(&Tensor4::new([b, c, h, w], chunk.to_vec())?)
            })
            .collect::<Result<_>>()?;
        let [oc, oh, ow] = self.output_shape();
        let data = chunks.into_iter().flat_map(|t| t.into_data()).collect();
        Tensor4::new([n, oc, oh, ow], data)
    }

    /// Gradients of the loss of the last training-mode forward pass.
    pub fn backward(&mut self, target: &Tensor4<T>) -> Result<Backward<T>> {
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("backward called before a training forward pass".into()))?;
        if target.dims() != state.output.dims() {
            return Err(Error::DimensionMismatch(format!(
                "target {:?} does not match output {:?}",
                target.dims(),
                state.output.dims()
            )));
        }
        let loss = self.loss.value(&state.output, target);
        let mut grad = self.loss.gradient(&state.output, target);
        let state = self.state.take().unwrap();
        for (l, cache) in self.layers.iter_mut().zip(&state.caches).rev() {
            grad = l.backward(cache, &grad)?;
        }
        self.state = Some(state);
        Ok(Backward {
            loss,
            input_grad: grad,
        })
    }

    /// `v <- momentum v + g; p <- p - lr v`, then folds the last batch's
    /// statistics into the batchnorm running averages.
    pub fn sgd_step(&mut self, lr: T, momentum: T) {
        for p in self.params_mut() {
            for ((v, g), x) in p.velocity.iter_mut().zip(&p.grad).zip(p.value.iter_mut()) {
                *v = momentum * *v + *g;
                *x -= lr * *v;
            }
        }
        if let Some(state) = self.state.take() {
            let keep = T::lit(BN_MOMENTUM);
            for (l, cache) in self.layers.iter_mut().zip(&state.caches) {
                if let (
                    Layer::BatchNorm {
                        running_mean,
                        running_var,
                        ..
                    },
                    Cache::Bn {
                        batch_mean,
                        batch_var,
                        ..
                    },
                ) = (l, cache)
                {
                    for (r, b) in running_mean.iter_mut().zip(batch_mean) {
                        *r = keep * *r + (T::one() - keep) * *b;
                    }
                    for (r, b) in running_var.iter_mut().zip(batch_var) {
                        *r = keep * *r + (T::one() - keep) * *b;
                    }
                }
            }
        }
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<U: Real>(&self) -> Network<U> {
        let cv = |v: &[T]| -> Vec<U> { v.iter().map(|x| U::from_f64(x.to_f64().unwrap()).unwrap()).collect() };
        let cp = |p: &Param<T>| Param::new(cv(&p.value));
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    weight,
                    bias,
                } => Layer::Conv2d {
                    in_channels: *in_channels,
                    out_channels: *out_channels,
                    kernel: *kernel,
                    weight: cp(weight),
                    bias: cp(bias),
                },
                Layer::BatchNorm {
                    channels,
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => Layer::BatchNorm {
                    channels: *channels,
                    gamma: cp(gamma),
                    beta: cp(beta),
                    running_mean: cv(running_mean),
                    running_var: cv(running_var),
                },
                Layer::Relu => Layer::Relu,
                Layer::MaxPool2 => Layer::MaxPool2,
                Layer::Dense {
                    inputs,
                    outputs,
                    weight,
                    bias,
                } => Layer::Dense {
                    inputs: *inputs,
                    outputs: *outputs,
                    weight: cp(weight),
                    bias: cp(bias),
                },
                Layer::Softmax => Layer::Softmax,
                Layer::Sigmoid => Layer::Sigmoid,
            })
            .collect();
        Network {
            input: self.input,
            layers,
            loss: self.loss,
            state: None,
        }
    }
}
