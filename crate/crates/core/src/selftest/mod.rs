//! Oracle and property checks runnable outside the test harness.

mod checks;
pub mod oracles;

pub use checks::{
    gradient_checks, importance_sampling_check, order_invariance_check, protocol_check, quick_config,
    reproducibility_check, run_all, slda_batch_check, slda_recurrence_check, CheckOutcome,
};
