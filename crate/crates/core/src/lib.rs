//! Affine interaction models for crowd trajectories.
//!
//! Each agent's next coordinate is modelled as a sparse affine function of
//! its own and its neighbors' current coordinates. The crate estimates these
//! models from short windows of tracks, reads coherent groups off their
//! eigenvectors, labels group activities from their eigenvalues and classifies
//! whole scenes with a random forest over histogram features.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the common double-precision case.

pub mod activity;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod estimator;
pub mod features;
pub mod forest;
pub mod grouping;
pub mod lasso;
pub mod metrics;
pub mod pipeline;
pub mod scalar;
pub mod synthesis;
pub mod tracks;

pub use activity::{Activity, AtomicActivity};
pub use error::{Error, Result};
pub use grouping::GroupPartition;
pub use scalar::Scalar;
pub use tracks::{AgentId, Axis, Frame};

pub type TrackSet64 = tracks::TrackSet<f64>;
pub type InteractionModel64 = dynamics::InteractionModel<f64>;
pub type SceneModel64 = estimator::SceneModel<f64>;
pub type EstimatorConfig64 = estimator::EstimatorConfig<f64>;
pub type ActivityReport64 = activity::ActivityReport<f64>;
pub type CrowdFeatures64 = features::CrowdFeatures<f64>;
pub type Forest64 = forest::Forest<f64>;
pub type PipelineConfig64 = pipeline::PipelineConfig<f64>;
pub type LabeledScene64 = synthesis::LabeledScene<f64>;

pub type TrackSet32 = tracks::TrackSet<f32>;
pub type InteractionModel32 = dynamics::InteractionModel<f32>;
pub type SceneModel32 = estimator::SceneModel<f32>;
