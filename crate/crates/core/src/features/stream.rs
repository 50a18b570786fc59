use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{frame_ceil, frame_floor, ChannelKind, FeatureError, FeatureSchema, MAX_GAP_S};

/// A subject's features on the canonical frame grid. Frame `i` of the stream
/// is grid frame `first_frame + i`, at time `(first_frame + i) / rate`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStream {
    pub conversation_id: String,
    pub subject_id: String,
    pub frame_rate_hz: f64,
    first_frame: i64,
    width: usize,
    data: Vec<f64>,
}

impl FeatureStream {
    /// Wraps frames already on the grid.
    pub fn from_frames(
        conversation_id: String,
        subject_id: String,
        frame_rate_hz: f64,
        first_frame: i64,
        width: usize,
        data: Vec<f64>,
    ) -> Self {
        assert!(width > 0 && data.len().is_multiple_of(width), "frame matrix shape");
        Self { conversation_id, subject_id, frame_rate_hz, first_frame, width, data }
    }

    /// Resamples irregular samples onto the canonical grid. Continuous
    /// channels are linearly interpolated; binary and categorical channels
    /// take the nearest sample (the earlier one on ties).
    ///
    /// `rows` holds one sample per timestamp, categorical values given as
    /// category indices.
    pub fn resample(
        conversation_id: String,
        subject_id: String,
        schema: &FeatureSchema,
        times: &[f64],
        rows: &[Vec<f64>],
        rate: f64,
    ) -> Result<Self, FeatureError> {
        if times.is_empty() {
            return Err(FeatureError::EmptyStream);
        }
        let width = schema.width();
        for (row, (t, values)) in times.iter().zip(rows).enumerate() {
            if !t.is_finite() {
                return Err(FeatureError::BadValue { row, message: format!("timestamp {t}") });
            }
            if values.len() != width {
                return Err(FeatureError::Width { got: values.len(), expected: width });
            }
            if row > 0 {
                let dt = t - times[row - 1];
                if dt <= 0.0 {
                    return Err(FeatureError::NonMonotone { row, time: *t });
                }
                if dt > MAX_GAP_S {
                    return Err(FeatureError::Gap { row, gap: dt });
                }
            }
            for (c, v) in schema.channels().iter().zip(values) {
                let ok = match &c.kind {
                    ChannelKind::Continuous => v.is_finite(),
                    ChannelKind::Binary => *v == 0.0 || *v == 1.0,
                    ChannelKind::Categorical(cats) => libm::trunc(*v) == *v && *v >= 0.0 && (*v as usize) < cats.len(),
                };
                if !ok {
                    return Err(FeatureError::BadValue {
                        row,
                        message: format!("invalid value {v} for channel `{}`", c.name),
                    });
                }
            }
        }

        let first = frame_ceil(times[0], rate);
        let last = frame_floor(times[times.len() - 1], rate);
        if last < first {
            return Err(FeatureError::EmptyStream);
        }
        let n = (last - first + 1) as usize;
        let mut data = Vec::with_capacity(n * width);
        let mut j = 0usize;
        for k in first..=last {
            let t = k as f64 / rate;
            while j + 1 < times.len() && times[j + 1] <= t {
                j += 1;
            }
            let (lo, hi) = if j + 1 < times.len() && times[j] < t { (j, j + 1) } else { (j, j) };
            let frac = if hi == lo { 0.0 } else { (t - times[lo]) / (times[hi] - times[lo]) };
            let nearest = if hi != lo && (times[hi] - t) < (t - times[lo]) { hi } else { lo };
            for (ci, c) in schema.channels().iter().enumerate() {
                let v = match c.kind {
                    ChannelKind::Continuous => {
                        let (a, b) = (rows[lo][ci], rows[hi][ci]);
                        a + (b - a) * frac
                    }
                    _ => rows[nearest][ci],
                };
                data.push(v);
            }
        }
        Ok(Self { conversation_id, subject_id, frame_rate_hz: rate, first_frame: first, width, data })
    }

    pub fn first_frame(&self) -> i64 {
        self.first_frame
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn start_s(&self) -> f64 {
        self.first_frame as f64 / self.frame_rate_hz
    }

    /// Time just past the last frame.
    pub fn end_s(&self) -> f64 {
        (self.first_frame + self.n_frames() as i64) as f64 / self.frame_rate_hz
    }

    pub fn time_of(&self, i: usize) -> f64 {
        (self.first_frame + i as i64) as f64 / self.frame_rate_hz
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Frames `[from, to)` in stream-local indices.
    pub(crate) fn slice(&self, from: usize, to: usize) -> &[f64] {
        &self.data[from * self.width..to * self.width]
    }
}
