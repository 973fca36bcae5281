use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{LossKind, Network};
use super::tensor::{Real, Tensor4};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Learning rate is multiplied by 0.1 from this epoch on.
    pub decay_epoch: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            decay_epoch: (2 * epochs).div_ceil(3),
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Flat samples with per-sample inputs of `shape` and fixed-length targets.
#[derive(Clone, Debug, Default)]
pub struct Dataset<T> {
    pub shape: [usize; 3],
    pub target_len: usize,
    pub inputs: Vec<T>,
    pub targets: Vec<T>,
}

impl<T: Real> Dataset<T> {
    pub fn new(shape: [usize; 3], target_len: usize) -> Self {
        Self {
            shape,
            target_len,
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        if self.target_len == 0 {
            0
        } else {
            self.targets.len() / self.target_len
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn sample_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn push(&mut self, input: &[T], target: &[T]) -> Result<()> {
        if input.len() != self.sample_len() || target.len() != self.target_len {
            return Err(Error::DimensionMismatch(format!(
                "sample of {}+{} values, dataset expects {}+{}",
                input.len(),
                target.len(),
                self.sample_len(),
                self.target_len
            )));
        }
        self.inputs.extend_from_slice(input);
        self.targets.extend_from_slice(target);
        Ok(())
    }

    pub fn extend(&mut self, other: &Dataset<T>) -> Result<()> {
        if other.shape != self.shape || other.target_len != self.target_len {
            return Err(Error::DimensionMismatch("datasets differ in sample shape".into()));
        }
        self.inputs.extend_from_slice(&other.inputs);
        self.targets.extend_from_slice(&other.targets);
        Ok(())
    }

    pub fn input(&self, i: usize) -> &[T] {
        let s = self.sample_len();
        &self.inputs[i * s..(i + 1) * s]
    }

    pub fn target(&self, i: usize) -> &[T] {
        &self.targets[i * self.target_len..(i + 1) * self.target_len]
    }

    pub fn batch(&self, idx: &[usize]) -> (Tensor4<T>, Tensor4<T>) {
        let [c, h, w] = self.shape;
        let mut x = Vec::with_capacity(idx.len() * self.sample_len());
        let mut t = Vec::with_capacity(idx.len() * self.target_len);
        for &i in idx {
            x.extend_from_slice(self.input(i));
            t.extend_from_slice(self.target(i));
        }
        (
            Tensor4::new([idx.len(), c, h, w], x).unwrap(),
            Tensor4::new([idx.len(), self.target_len, 1, 1], t).unwrap(),
        )
    }

    pub fn all(&self) -> (Tensor4<T>, Tensor4<T>) {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset<T> {
        let mut out = Dataset::new(self.shape, self.target_len);
        for &i in idx {
            out.inputs.extend_from_slice(self.input(i));
            out.targets.extend_from_slice(self.target(i));
        }
        out
    }

    /// Seeded shuffle split into (kept, held out), the held-out part being
    /// `round(fraction * len)` samples.
    pub fn split(&self, fraction: f64, seed: u64) -> (Dataset<T>, Dataset<T>) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let held = ((fraction * self.len() as f64).round() as usize).min(self.len());
        let (a, b) = idx.split_at(self.len() - held);
        (self.subset(a), self.subset(b))
    }
}

/// Fraction of correct predictions: argmax agreement for cross-entropy,
/// per-cell agreement of the 0.5-thresholded output for squared error.
pub fn batch_accuracy<T: Real>(loss: LossKind, y: &Tensor4<T>, t: &Tensor4<T>) -> f64 {
    let argmax = |v: &[T]| {
        v.iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |b, (i, &x)| if x > b.1 { (i, x) } else { b })
            .0
    };
    let n = y.batch();
    match loss {
        LossKind::CrossEntropy => {
            let hits = (0..n).filter(|&i| argmax(y.sample(i)) == argmax(t.sample(i))).count();
            hits as f64 / n as f64
        }
        LossKind::MeanSquaredError => {
            let half = T::lit(0.5);
            let hits = y
                .data()
                .iter()
                .zip(t.data())
                .filter(|(a, b)| (**a > half) == (**b > half))
                .count();
            hits as f64 / y.data().len() as f64
        }
    }
}

/// Inference-mode accuracy over a whole dataset.
pub fn evaluate<T: Real>(net: &Network<T>, data: &Dataset<T>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("evaluation on an empty dataset".into()));
    }
    let (x, t) = data.all();
    let y = net.infer_batched(&x)?;
    let [oc, oh, ow] = net.output_shape();
    let t = Tensor4::new([t.batch(), oc, oh, ow], t.into_data())?;
    Ok(batch_accuracy(net.loss_kind(), &y, &t))
}

/// Minibatch SGD with momentum and a single step decay of the learning
/// rate. Batches are drawn from a seeded shuffle; a trailing batch of one
/// sample is folded into the previous batch so batch statistics exist.
pub fn train<T: Real>(
    net: &mut Network<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    if data.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "training needs at least 2 samples, got {}",
            data.len()
        )));
    }
    if data.shape != net.input_shape() {
        return Err(Error::DimensionMismatch(format!(
            "dataset samples {:?} do not fit network input {:?}",
            data.shape,
            net.input_shape()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let [oc, oh, ow] = net.output_shape();
    for epoch in 0..cfg.epochs {
        let lr = if epoch >= cfg.decay_epoch {
            cfg.learning_rate * 0.1
        } else {
            cfg.learning_rate
        };
        order.shuffle(&mut rng);
        let mut batches: Vec<&[usize]> = order.chunks(cfg.batch_size.max(2)).collect();
        let merged;
        if batches.len() > 1 && batches.last().unwrap().len() == 1 {
            batches.pop();
            let start = order.len() - 1 - batches.last().unwrap().len();
            merged = &order[start..];
            *batches.last_mut().unwrap() = merged;
        }
        let (mut loss_sum, mut acc_sum, mut seen) = (0.0, 0.0, 0usize);
        for idx in batches {
            let (x, t) = data.batch(idx);
            let t = Tensor4::new([t.batch(), oc, oh, ow], t.into_data())?;
            let y = net.forward(&x, true)?;
            let b = net.backward(&t)?;
            let loss = b.loss.to_f64().unwrap();
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss at epoch {epoch}")));
            }
            net.sgd_step(T::lit(lr), T::lit(cfg.momentum));
            loss_sum += loss * idx.len() as f64;
            acc_sum += batch_accuracy(net.loss_kind(), &y, &t) * idx.len() as f64;
            seen += idx.len();
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / seen as f64,
            accuracy: acc_sum / seen as f64,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(history)
}

pub fn write_training_log(path: &Path, stats: &[EpochStats]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "epoch,loss,accuracy")?;
    for s in stats {
        writeln!(w, "{},{},{}", s.epoch, s.loss, s.accuracy)?;
    }
    w.flush()?;
    Ok(())
}
