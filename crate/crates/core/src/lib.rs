//! Scheduling engine for remote inference over a two-way channel whose delay
//! statistics follow a Markov chain.
//!
//! The pieces, bottom up:
//!
//! - [`error_model`]: the inference-error-vs-age curve `h(δ)` of a Gaussian AR source.
//! - [`channel`]: the Markov-modulated transmission/feedback delay model.
//! - [`policy`]: the index function, the threshold root-finder and the
//!   buffer-mapping optimizer.
//! - [`simulator`]: slot-level simulation of scheduling policies and the α sweep.
//! - [`oracle`]: relative value iteration on a truncated SMDP, used to
//!   certify the threshold policy on small instances.
//! - [`config`]: experiment configuration, policy artifacts and CSV output.

pub mod channel;
pub mod config;
pub mod error_model;
pub mod oracle;
pub mod policy;
pub mod simulator;
pub mod stats;

pub use channel::{ChannelError, ChannelModel, DelayPmf};
pub use error_model::{ArModel, ErrorCurve, ErrorModelError, Integration};
pub use policy::{BufferMapping, PolicyContext, PolicyError, ThresholdPolicy};
pub use simulator::{PolicySpec, SimConfig, SimReport};
