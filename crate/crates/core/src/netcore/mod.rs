//! Fully connected networks with explicit backpropagation, masked softmax
//! cross-entropy and Adam.

mod adam;
mod loss;
mod net;
pub mod snapshot;

pub use adam::Adam;
pub use loss::{batch_cross_entropy, masked_cross_entropy, masked_softmax, ActiveSet};
pub use net::{Activation, Backward, DenseNet, ForwardCache, LayerView};
