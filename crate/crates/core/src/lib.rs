//! Exam practice and assessment research core.
//!
//! Everything persists through a [`store::DocumentStore`] with
//! compare-and-set writes, so any number of stateless front ends can share
//! one store. Time flows through [`clock::Clock`] so rate limits, backoff and
//! timestamps can be driven by a simulated clock in tests.

pub mod assessment;
pub mod clock;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod gateway;
pub mod harness;
pub mod platform;
pub mod session;
pub mod store;
pub mod synth;
mod util;

pub use error::Error;
pub use platform::{Platform, PlatformConfig, Principal};
