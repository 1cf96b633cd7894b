//! Weakly supervised fake news detection with a mean teacher that refines
//! noisy weak labels.
//!
//! A baseline detector (hierarchical transformer over an article and its
//! user reports, plus an emotion-aware attention branch) is pre-trained on
//! a small labeled set and used to annotate unlabeled articles. A
//! teacher/student pair then refines those weak labels by propagating
//! information between the two networks and down-weights samples whose
//! labels the two networks disagree on.

pub mod checkpoint;
pub mod corpus;
pub mod data;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod features;
pub mod linalg;
pub mod meanteacher;
pub mod metrics;
pub mod optim;
pub mod runconfig;
pub mod trainer;

pub use error::{Error, Result};
