//! Long-term treatment effect estimation from short-term surrogate sequences.
//!
//! An observational panel carries short-term outcomes and the long-term
//! outcome; an experimental panel carries only the short-term ones. LTEE
//! encodes covariates, rolls a per-arm GRU over the short-term sequence,
//! pools it with attention and reads the long-term outcome off that state,
//! with a Wasserstein penalty between treated and control representations.
//!
//! - [`ndcore`]: dense tensors and a reverse-mode tape
//! - [`balance`]: log-domain Sinkhorn transport
//! - [`seqmodel`]: the network and its checkpoints
//! - [`trainer`]: loss, Adam, early stopping
//! - [`datagen`]: IHDP-like and News-like panel simulators
//! - [`baselines`]: comparison estimators behind a read-audited data view
//! - [`harness`]: sweeps, CSV output and flat config files
//!
//! The `ltee` binary wraps the harness.

pub mod balance;
pub mod baselines;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod ndcore;
pub mod seqmodel;
pub mod trainer;

pub use error::{Error, Result};
pub use seqmodel::Arm;
