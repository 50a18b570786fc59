//! Per-frame multimodal feature streams and the windows cut from them.
//!
//! Streams are resampled onto a canonical 25 Hz grid (frame `k` sits at
//! `k / 25` seconds). Identification windows cover the listener's instance
//! interval `[onset, offset)`; prediction windows cover exactly the three
//! seconds of speaker context before the instance onset.

mod aggregate;
mod scaler;
mod schema;
mod stream;
mod window;

use alloc::string::String;

use thiserror::Error;

pub use aggregate::{aggregate, AggregateVector};
pub use scaler::{standardize, ScaleMode, Scaler};
pub use schema::{Channel, ChannelKind, FeatureSchema, FeatureSet, Modality, GAZE_STATES};
pub use stream::FeatureStream;
pub use window::{cut_context_window, cut_identification_window, window_series, ContextOutcome, FeatureWindow, Role};

pub const CANONICAL_RATE_HZ: f64 = 25.0;
pub const CONTEXT_SECONDS: f64 = 3.0;
/// Frames in a speaker context window at the canonical rate.
pub const CONTEXT_FRAMES: usize = 75;
/// Largest tolerated spacing between consecutive input samples.
pub const MAX_GAP_S: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("missing channel `{0}`")]
    MissingChannel(String),
    #[error("row {row}: timestamp {time} does not increase")]
    NonMonotone { row: usize, time: f64 },
    #[error("row {row}: gap of {gap:.3} s exceeds {MAX_GAP_S} s")]
    Gap { row: usize, gap: f64 },
    #[error("row {row}: {message}")]
    BadValue { row: usize, message: String },
    #[error("stream has no samples")]
    EmptyStream,
    #[error("interval [{onset}, {offset}) lies outside the stream [{start}, {end})")]
    OutsideStream { onset: f64, offset: f64, start: f64, end: f64 },
    #[error("window for `{0}` contains no frames")]
    EmptyWindow(String),
    #[error("window has {got} columns, schema expects {expected}")]
    Width { got: usize, expected: usize },
}

/// Index of the first canonical frame at or after `t`.
pub(crate) fn frame_ceil(t: f64, rate: f64) -> i64 {
    libm::ceil(t * rate - 1e-9) as i64
}

pub(crate) fn frame_floor(t: f64, rate: f64) -> i64 {
    libm::floor(t * rate + 1e-9) as i64
}
