//! Negative (no-backchannel) instances: stretches where the listener is not
//! speaking and no consensus backchannel was marked.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::annotations::{ConsensusInstance, TimeInterval};
use crate::seed;

pub const MIN_NEGATIVE_S: f64 = 1.06;
pub const MAX_NEGATIVE_S: f64 = 5.43;
/// Extra length draws allowed when a drawn length overruns the region.
pub const LENGTH_RETRIES: usize = 3;

/// Speech intervals of one subject, sorted and pairwise disjoint.
#[derive(Clone, Debug, PartialEq)]
pub struct VoiceActivity {
    pub conversation_id: String,
    pub subject_id: String,
    intervals: Vec<TimeInterval>,
}

impl VoiceActivity {
    /// Sorts the intervals and merges any that touch or overlap.
    pub fn new(conversation_id: String, subject_id: String, mut intervals: Vec<TimeInterval>) -> Self {
        intervals.sort_by(|a, b| a.onset().total_cmp(&b.onset()));
        let mut merged: Vec<TimeInterval> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            match merged.last_mut() {
                Some(last) if iv.onset() <= last.offset() => {
                    if iv.offset() > last.offset() {
                        *last = TimeInterval::new(last.onset(), iv.offset()).expect("ordered");
                    }
                }
                _ => merged.push(iv),
            }
        }
        Self { conversation_id, subject_id, intervals: merged }
    }

    pub fn intervals(&self) -> &[TimeInterval] {
        &self.intervals
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NegativeInstance {
    pub conversation_id: String,
    pub subject_id: String,
    pub interval: TimeInterval,
}

/// `span` minus the union of `cuts`, as sorted disjoint intervals.
pub fn subtract(span: TimeInterval, cuts: &[TimeInterval]) -> Vec<TimeInterval> {
    let mut cuts: Vec<TimeInterval> = cuts.to_vec();
    cuts.sort_by(|a, b| a.onset().total_cmp(&b.onset()));
    let mut out = Vec::new();
    let mut cursor = span.onset();
    for c in cuts {
        if c.offset() <= cursor {
            continue;
        }
        if c.onset() >= span.offset() {
            break;
        }
        if c.onset() > cursor {
            out.push(TimeInterval::new(cursor, c.onset()).expect("cursor < cut onset"));
        }
        cursor = cursor.max(c.offset());
        if cursor >= span.offset() {
            break;
        }
    }
    if cursor < span.offset() {
        out.push(TimeInterval::new(cursor, span.offset()).expect("cursor < span end"));
    }
    out
}

/// Maximal stretches of `span` where the listener neither speaks nor has a
/// consensus backchannel. Speech is removed first, then the positives, so
/// short verbal backchannels present in the raw voice activity are excluded
/// either way.
pub fn eligible_regions(
    span: TimeInterval,
    listener_vad: &VoiceActivity,
    positives: &[ConsensusInstance],
) -> Vec<TimeInterval> {
    let silent = subtract(span, listener_vad.intervals());
    let pos: Vec<TimeInterval> = positives.iter().map(|p| p.interval).collect();
    silent.into_iter().flat_map(|r| subtract(r, &pos)).collect()
}

/// Packs disjoint intervals left to right into each region, taking lengths
/// from `draw_length`. When the drawn length overruns the region the draw is
/// retried up to [`LENGTH_RETRIES`] times before moving to the next region.
pub fn pack_regions(
    regions: &[TimeInterval],
    mut draw_length: impl FnMut() -> f64,
    max_count: Option<usize>,
) -> Vec<TimeInterval> {
    let mut out = Vec::new();
    for region in regions {
        let mut cursor = region.onset();
        'region: loop {
            if max_count.is_some_and(|m| out.len() >= m) {
                return out;
            }
            if region.offset() - cursor < MIN_NEGATIVE_S {
                break;
            }
            for _ in 0..=LENGTH_RETRIES {
                let len = draw_length();
                let end = cursor + len;
                if end <= region.offset() {
                    out.push(TimeInterval::new(cursor, end).expect("positive length"));
                    cursor = end;
                    continue 'region;
                }
            }
            break;
        }
    }
    out
}

/// Seeded negative sampling with lengths uniform on
/// `[MIN_NEGATIVE_S, MAX_NEGATIVE_S]`.
pub fn sample_negatives(
    conversation_id: &str,
    subject_id: &str,
    regions: &[TimeInterval],
    rng_seed: u64,
    max_count: Option<usize>,
) -> Vec<NegativeInstance> {
    let mut rng = seed::rng(rng_seed);
    pack_regions(regions, || rng.gen_range(MIN_NEGATIVE_S..=MAX_NEGATIVE_S), max_count)
        .into_iter()
        .map(|interval| NegativeInstance {
            conversation_id: conversation_id.into(),
            subject_id: subject_id.into(),
            interval,
        })
        .collect()
}
