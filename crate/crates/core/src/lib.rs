//! Sliced optimal transport with random-path projecting directions.
//!
//! The crate provides exact one-dimensional Wasserstein distances, sampling
//! laws on the unit sphere, a family of sliced Wasserstein estimators,
//! gradient flows between point clouds and mini-batch energy distances.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exactot;
pub mod flow;
pub mod mbenergy;
pub mod measures;
pub mod ot1d;
pub mod randompath;
pub mod rng;
pub mod sphere;
pub mod studies;
pub mod swfamily;

pub use error::{Error, Result};
pub use exactot::{grid_max_sw, wasserstein_exact};
pub use flow::{run_flow, FlowConfig, KappaSchedule, Trajectory};
pub use mbenergy::{agme2, agme_split_loss, gme2, Augmentation, DistanceKernel, ExactKernel, MiniBatch, SlicedKernel};
pub use measures::{DiscreteMeasure, Direction, Measure1D};
pub use sphere::SliceFamily;
pub use swfamily::{DistanceEstimate, EnergyFunction, EstimatorConfig, Variant};
