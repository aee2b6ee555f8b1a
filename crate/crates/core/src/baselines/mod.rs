//! Rehearsal-free baselines on the shared softmax network, plus stream
//! adapters for the generative classifier and SLDA.

mod cwr;
mod dgr;
mod generated;
mod learner;
mod reg;
mod softmax;

pub use cwr::{CwrHead, CwrVariant};
pub use dgr::{replay_weights, DgrLearner, FrozenModels};
pub use generated::{draw_classes, train_on_generated, GeneratedLearner};
pub use learner::{run_stream, GcLearner, Learner, SldaLearner};
pub use reg::{estimate_fisher, EwcAnchor, EwcState, OmegaCap, SiState};
pub use softmax::{ActiveMode, BaselineParams, SoftmaxLearner};
