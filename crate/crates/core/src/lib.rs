//! Occlusion-aware single-object tracking on top of a black-box mask predictor.

pub mod anchor;
pub mod branch;
pub mod config;
pub mod error;
pub mod geometry;
pub mod memory;
pub mod metrics;
pub mod mode;
pub mod pipeline;
pub mod pointer;
pub mod predictor;
pub mod reliability;
pub mod runner;
pub mod sim;
pub mod trace;

pub use config::Config;
pub use error::{Error, Result};
pub use metrics::RunMetrics;
pub use mode::TrackingMode;
pub use pipeline::{Ablations, Tracker};
pub use runner::run_sequence;
pub use trace::TraceEvent;
