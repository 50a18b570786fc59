use alloc::string::String;
use alloc::vec::Vec;

use super::{frame_ceil, ChannelKind, FeatureError, FeatureSchema, FeatureSet, FeatureStream, CONTEXT_FRAMES};
use crate::annotations::TimeInterval;
use crate::learners::Series;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Listener,
    Speaker,
}

/// Frames cut from one subject's stream for one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureWindow {
    pub instance_id: String,
    pub role: Role,
    pub interval: TimeInterval,
    width: usize,
    frames: Vec<f64>,
}

impl FeatureWindow {
    pub fn new(instance_id: String, role: Role, interval: TimeInterval, width: usize, frames: Vec<f64>) -> Self {
        assert!(width > 0 && frames.len().is_multiple_of(width), "frame matrix shape");
        Self { instance_id, role, interval, width, frames }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len() / self.width
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn frames(&self) -> &[f64] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.frames[i * self.width..(i + 1) * self.width]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ContextOutcome {
    Window(FeatureWindow),
    /// Less than three seconds of stream precede the onset.
    Dropped {
        instance_id: String,
        onset_s: f64,
    },
}

fn out_of_stream(stream: &FeatureStream, onset: f64, offset: f64) -> FeatureError {
    FeatureError::OutsideStream { onset, offset, start: stream.start_s(), end: stream.end_s() }
}

/// Listener frames with timestamps in `[onset, offset)`.
pub fn cut_identification_window(
    stream: &FeatureStream,
    instance_id: &str,
    interval: TimeInterval,
) -> Result<FeatureWindow, FeatureError> {
    let rate = stream.frame_rate_hz;
    let lo = frame_ceil(interval.onset(), rate) - stream.first_frame();
    let hi = frame_ceil(interval.offset(), rate) - stream.first_frame();
    if lo < 0 || hi > stream.n_frames() as i64 {
        return Err(out_of_stream(stream, interval.onset(), interval.offset()));
    }
    if hi <= lo {
        return Err(FeatureError::EmptyWindow(instance_id.into()));
    }
    Ok(FeatureWindow::new(
        instance_id.into(),
        Role::Listener,
        interval,
        stream.width(),
        stream.slice(lo as usize, hi as usize).to_vec(),
    ))
}

/// The 75 speaker frames spanning `[onset - 3, onset)`.
pub fn cut_context_window(
    stream: &FeatureStream,
    instance_id: &str,
    onset_s: f64,
) -> Result<ContextOutcome, FeatureError> {
    let rate = stream.frame_rate_hz;
    let hi = frame_ceil(onset_s, rate) - stream.first_frame();
    let lo = hi - CONTEXT_FRAMES as i64;
    if hi > stream.n_frames() as i64 {
        return Err(out_of_stream(stream, onset_s - super::CONTEXT_SECONDS, onset_s));
    }
    if lo < 0 {
        return Ok(ContextOutcome::Dropped { instance_id: instance_id.into(), onset_s });
    }
    let start = stream.time_of(lo as usize);
    let interval = TimeInterval::new(start, onset_s).map_err(|_| out_of_stream(stream, start, onset_s))?;
    Ok(ContextOutcome::Window(FeatureWindow::new(
        instance_id.into(),
        Role::Speaker,
        interval,
        stream.width(),
        stream.slice(lo as usize, hi as usize).to_vec(),
    )))
}

/// Time-major series input for sequence models, restricted to `set`, with
/// categorical channels one-hot encoded.
pub fn window_series(window: &FeatureWindow, schema: &FeatureSchema, set: FeatureSet) -> Series {
    let width = schema.series_width(set);
    let mut data = Vec::with_capacity(window.n_frames() * width);
    for t in 0..window.n_frames() {
        let frame = window.frame(t);
        for (c, v) in schema.channels().iter().zip(frame) {
            if !set.includes(c.modality) {
                continue;
            }
            match &c.kind {
                ChannelKind::Categorical(values) => {
                    data.extend((0..values.len()).map(|k| if *v as usize == k { 1.0 } else { 0.0 }))
                }
                _ => data.push(*v),
            }
        }
    }
    Series::new(width, data)
}
