//! Hyperspectral camouflaged-object tracking.
//!
//! Spectral embedding, prompt fusion over a frozen toy backbone, response-map
//! decoding, confidence-gated Kalman rectification, a synthetic sequence
//! generator and the usual success/precision evaluation.

pub mod archive;
pub mod config;
pub mod dam;
pub mod error;
pub mod io;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod sen;
pub mod spbn;
pub mod synthgen;
pub mod types;

pub use config::{parse_config, GeneratorKind, KalmanNoise, TrackerConfig};
pub use dam::{decision_confidence, Dam, DamStep, Source};
pub use error::{Error, Result};
pub use metrics::{evaluate, EvalResult};
pub use pipeline::{track_sequence, FrameRecord, TrackRun, Tracker};
pub use types::{Attribute, BBox, HsiCube, ResponseMaps, SequenceRecord};
