use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::Layer;
use super::network::{LossKind, Network};
use super::tensor::Real;

pub const CLASSIFIER_INPUT: [usize; 3] = [4, 21, 21];
pub const REGRESSOR_INPUT: [usize; 3] = [4, 45, 45];
pub const REGRESSOR_OUTPUTS: usize = 225;
pub const REGRESSOR_HIDDEN: usize = 512;

/// 21x21x4 window to two softmax scores.
pub fn classifier<T: Real>(seed: u64) -> Network<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        Layer::conv2d(4, 16, 3, &mut rng),
        Layer::batch_norm(16),
        Layer::Relu,
        Layer::MaxPool2,
        Layer::conv2d(16, 32, 3, &mut rng),
        Layer::batch_norm(32),
        Layer::Relu,
        Layer::MaxPool2,
        Layer::dense(32 * 5 * 5, 64, &mut rng),
        Layer::batch_norm(64),
        Layer::Relu,
        Layer::dense(64, 2, &mut rng),
        Layer::Softmax,
    ];
    Network::new(CLASSIFIER_INPUT, layers, LossKind::CrossEntropy).expect("classifier shapes chain")
}

/// 45x45x4 stack to a 15x15 response grid.
pub fn regressor<T: Real>(seed: u64) -> Network<T> {
    regressor_with_hidden(seed, REGRESSOR_HIDDEN)
}

pub fn regressor_with_hidden<T: Real>(seed: u64, hidden: usize) -> Network<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        Layer::conv2d(4, 16, 3, &mut rng),
        Layer::batch_norm(16),
        Layer::Relu,
        Layer::MaxPool2,
        Layer::conv2d(16, 32, 3, &mut rng),
        Layer::batch_norm(32),
        Layer::Relu,
        Layer::dense(32 * 22 * 22, hidden, &mut rng),
        Layer::batch_norm(hidden),
        Layer::Relu,
        Layer::dense(hidden, REGRESSOR_OUTPUTS, &mut rng),
        Layer::Sigmoid,
    ];
    Network::new(REGRESSOR_INPUT, layers, LossKind::MeanSquaredError).expect("regressor shapes chain")
}

/// Scales a patch stack to [0, 1] by its own min and max; a flat stack
/// becomes all zeros.
pub fn normalize_stack<T: Real>(values: &mut [T]) {
    let lo = values.iter().copied().fold(T::infinity(), T::min);
    let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
    let span = hi - lo;
    if span > T::zero() {
        values.iter_mut().for_each(|v| *v = (*v - lo) / span);
    } else {
        values.iter_mut().for_each(|v| *v = T::zero());
    }
}
