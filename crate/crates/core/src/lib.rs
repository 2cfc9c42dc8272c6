//! Blahut-Arimoto satisficing Thompson sampling (BLASTS) for multi-armed
//! bandits.
//!
//! * [`rdcore`]: a base-2 Blahut-Arimoto rate-distortion solver.
//! * [`bandit`]: Bernoulli and Gaussian ground-truth environments.
//! * [`belief`]: conjugate posteriors over arm means.
//! * [`agents`]: BLASTS, Thompson sampling, a uniform baseline, adaptive
//!   `beta` and regret-bound diagnostics.
//! * [`harness`]: seeded experiments, aggregation and CSV/SVG output.

pub mod agents;
pub mod bandit;
pub mod belief;
pub mod error;
pub mod harness;
pub mod rdcore;

pub use error::{Error, Result};
