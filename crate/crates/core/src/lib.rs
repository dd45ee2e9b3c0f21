//! Combined variant selection and hyperparameter tuning for a modular CMA-ES.
//!
//! The crate covers the joint search space of 4,608 CMA-ES variants and their
//! covariance learning rates ([`space`]), the optimizer itself ([`engine`]),
//! seeded test problems ([`benchmarks`]), performance estimators
//! ([`metrics`]), two configurators ([`racing`], [`ego`]) and the end-to-end
//! experiment drivers ([`pipelines`]).

pub mod benchmarks;
pub mod ego;
pub mod engine;
pub mod error;
pub mod evaluator;
pub mod exec;
pub mod metrics;
pub mod pipelines;
pub mod racing;
pub mod seed;
pub mod space;

pub use error::{Error, Result};
