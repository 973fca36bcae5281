//! Small convolutional network engine: layers, losses, SGD training and
//! the `.wtz` weight format.

pub mod arch;
pub mod layers;
pub mod network;
pub mod tensor;
pub mod train;
pub mod wtz;


pub use arch::{
    classifier, normalize_stack, regressor, regressor_with_hidden, CLASSIFIER_INPUT, REGRESSOR_HIDDEN,
    REGRESSOR_INPUT, REGRESSOR_OUTPUTS,
};
pub use layers::{Cache, Layer, LayerKind, Param};
pub use network::{Backward, LossKind, Network};
pub use tensor::{Real, Tensor4};
pub use train::{evaluate, train, write_training_log, Dataset, EpochStats, TrainConfig};
pub use wtz::{load_weights, load_weights_file, save_weights, save_weights_file};
