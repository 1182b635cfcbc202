//! Continual linear classification by sequential gradient descent.
//!
//! The crate covers the full pipeline for checking the behavior of
//! sequential GD at desk scale: datasets and task partitions, logistic and
//! exponential losses, small dense QP solvers for max-margin geometry, the
//! three training engines (sequential GD, joint GD, sequential max-margin
//! projection) and evaluators for forgetting and the closed-form bounds.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the crate root fix the scalar to `f64`; the `*32` aliases fix
//! it to `f32`.

pub mod data;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod qp;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = data::JointDataset<f64>;
pub type Dataset32 = data::JointDataset<f32>;
pub type Point = data::DataPoint<f64>;
pub type Point32 = data::DataPoint<f32>;
pub type Loss = loss::LossSpec<f64>;
pub type Loss32 = loss::LossSpec<f32>;
pub type Certificate = geometry::MarginCertificate<f64>;
pub type Certificate32 = geometry::MarginCertificate<f32>;
pub type NonSep = geometry::NonSepCertificate<f64>;
pub type Solution = qp::QpSolution<f64>;
pub type Run = train::TrainRun<f64>;
pub type Run32 = train::TrainRun<f32>;
pub type Config = train::TrainConfig<f64>;
