//! Information cascade analysis over Yelp-format review and tip data.
//!
//! The pipeline runs in stages:
//!
//! 1. [`ingest`] parses the dataset files into interned, city-partitioned tables.
//! 2. [`graph`] builds the undirected friendship network.
//! 3. [`cascade`] derives per-business influence cascades from event order.
//! 4. [`census`] buckets cascades by topology signature; [`stats`] fits the
//!    size distribution and extracts the longest cascades.
//! 5. [`features`] turns the first `k` nodes of a cascade into a feature
//!    vector; [`learner`] trains and cross-validates classifiers on them.
//!
//! [`pipeline`] ties the stages to on-disk artifacts for the CLI, and
//! [`synthetic`] generates Yelp-format fixtures with known influence edges.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

pub mod cascade;
pub mod census;
pub mod error;
pub mod features;
pub mod graph;
pub mod ingest;
pub mod learner;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type PowerLawFit = stats::PowerLawFit<f64>;
pub type FeatureVector = features::FeatureVector<f64>;
pub type LabeledExample = features::LabeledExample<f64>;
pub type LogRegModel = learner::LogisticRegression<f64>;
pub type GbdtModel = learner::Gbdt<f64>;
pub type EvalReport = learner::EvalReport<f64>;
