//! Minimal CPU tensor engine: NCHW tensors, layers with hand-written
//! backward passes, and the Adam optimizer.

pub mod activation;
pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod init;
pub mod loss;
pub mod pool;
pub mod tensor;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward};
pub use adam::{adam_step, AdamConfig, Moments};
pub use batchnorm::{
    batchnorm_backward, batchnorm_eval, batchnorm_train, BatchNorm, BatchNormCache, BatchStats, Mode, RunningStats,
    BN_EPS, BN_MOMENTUM,
};
pub use conv::{conv2d, conv2d_backward, transposed_conv2d, transposed_conv2d_backward, LayerGrads};
pub use init::he_init;
pub use loss::mse_loss;
pub use pool::{maxpool2, maxpool2_backward};
pub use tensor::{concat_channels, split_channels, Tensor};
