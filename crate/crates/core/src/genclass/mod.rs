//! Generative classification: one VAE per class, importance-sampled
//! likelihoods, and prediction by Bayes' rule.

mod classifier;
mod likelihood;
mod persist;
mod vae;

pub use classifier::{ClassTrainer, GcConfig, GenerativeClassifier, PriorMode, Prediction};
pub use likelihood::{importance_log_likelihood, importance_log_likelihood_with_noise, LikelihoodEstimate, SIGMA_FLOOR};
pub use persist::{load_classifier, sample_grid, save_classifier, GreyImage};
pub use vae::{ElboTerms, ReconScale, VaeGrads, VaeModel, VaeOptimizer};
