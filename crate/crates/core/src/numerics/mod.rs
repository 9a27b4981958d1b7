//! Dense 64-bit tensor engine: the layer inventory needed by the 1D-CNN
//! autoencoder and classifier, with hand-written backward passes, and the
//! two training losses.

mod layers;
mod loss;
mod tensor;

pub use layers::{backward, backward_with_output, forward, Activation, Gradients, LayerKind, Padding};
pub use loss::{cross_entropy_loss, mse_loss, softmax};
pub use tensor::Tensor;
