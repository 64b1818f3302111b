//! Crowdsourced label aggregation with inverse-propensity weighting.
//!
//! Majority voting, Dawid-Skene and GLAD, each with an IPS-weighted variant
//! that reweights every observed label by `1/e_ij`, plus propensity
//! estimation by 1-bit matrix completion and an experiment harness.

pub mod data;
pub mod ds;
pub mod em;
pub mod error;
pub mod glad;
pub mod harness;
pub mod io;
pub mod majority;
pub mod propensity;
pub mod simgen;
pub mod stats;

pub use data::{LabelDataset, LabelPosterior, Names, Observation, ObservationMatrix, PropensityMatrix};
pub use error::{Error, Result};
