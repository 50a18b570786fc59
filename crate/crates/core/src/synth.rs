//! Seeded generator of synthetic dyadic conversations with planted listener
//! signatures, predictive speaker context, noisy coder annotations, voice
//! activity and extraversion scores.
//!
//! Each conversation has two subjects taking alternating turns. While one
//! speaks, the other emits backchannels at the configured rate. A
//! backchannel leaves a half-sine bump on the listener's channels for its
//! signals; the speaker's energy dips and pitch falls linearly over the 1.5 s
//! before its onset, with a per-category cue on one MFCC. Amplitudes scale
//! with `detectability`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Exp, Normal};
use thiserror::Error;

use crate::annotations::{CoderAnnotation, SignalKind, TimeInterval};
use crate::features::{FeatureSchema, FeatureStream, CANONICAL_RATE_HZ, GAZE_STATES};
use crate::persona::{inverse_transform, sample_response, PersonaProfile, SignalCategory};
use crate::sampling::{VoiceActivity, MIN_NEGATIVE_S};
use crate::seed;

/// Peak of a listener signature at detectability 1, in noise standard deviations.
pub const BURST_AMPLITUDE: f64 = 3.0;
/// Size of the speaker cues at detectability 1.
pub const CONTEXT_AMPLITUDE: f64 = 2.0;
pub const CONTEXT_CUE_S: f64 = 1.5;
pub const MAX_EVENT_S: f64 = 3.0;
/// Gap kept between the end of one backchannel and the next onset.
pub const MIN_SEPARATION_S: f64 = 1.0;
/// Earliest onset after the speaker takes the turn.
pub const TURN_LEAD_S: f64 = 0.5;
const AR_COEF: f64 = 0.9;
const GAZE_STAY: f64 = 0.95;
const SPEECH_ENERGY: f64 = 1.5;
const SPEECH_F0: f64 = 1.0;
const MIN_CODED_S: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_conversations: usize,
    pub duration_s: f64,
    /// Backchannels per minute of listening.
    pub rate_per_min: f64,
    pub miss_prob: f64,
    pub jitter_s: f64,
    pub confusion_prob: f64,
    pub extrovert_fraction: f64,
    pub detectability: f64,
    /// Share of visual, verbal and both-category events.
    pub category_mix: [f64; 3],
    /// Chance of an eyebrow signal joining an event.
    pub eyebrow_prob: f64,
    pub turn_min_s: f64,
    pub turn_max_s: f64,
    pub n_coders: usize,
    pub frame_rate_hz: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_conversations: 50,
            duration_s: 480.0,
            rate_per_min: 7.0,
            miss_prob: 0.1,
            jitter_s: 0.15,
            confusion_prob: 0.05,
            extrovert_fraction: 0.5,
            detectability: 1.0,
            category_mix: [0.58, 0.12, 0.30],
            eyebrow_prob: 0.05,
            turn_min_s: 15.0,
            turn_max_s: 40.0,
            n_coders: 3,
            frame_rate_hz: CANONICAL_RATE_HZ,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: &str| Err(SynthError::Config(m.into()));
        let prob = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        if self.n_conversations == 0 {
            return err("n_conversations must be positive");
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 10.0) {
            return err("duration_s must be at least 10");
        }
        if !(self.rate_per_min.is_finite() && self.rate_per_min >= 0.0) {
            return err("rate_per_min must be non-negative");
        }
        for (name, p) in [
            ("miss_prob", self.miss_prob),
            ("confusion_prob", self.confusion_prob),
            ("extrovert_fraction", self.extrovert_fraction),
            ("eyebrow_prob", self.eyebrow_prob),
        ] {
            if !prob(p) {
                return Err(SynthError::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.jitter_s.is_finite() && self.jitter_s >= 0.0 && self.jitter_s < 0.5) {
            return err("jitter_s must lie in [0, 0.5)");
        }
        if !(self.detectability.is_finite() && self.detectability >= 0.0) {
            return err("detectability must be non-negative");
        }
        if !self.category_mix.iter().all(|&p| prob(p)) || (self.category_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return err("category_mix must be a distribution");
        }
        if !(self.turn_min_s >= TURN_LEAD_S + MAX_EVENT_S && self.turn_max_s >= self.turn_min_s) {
            return err("turn lengths must satisfy 3.5 <= turn_min_s <= turn_max_s");
        }
        if self.n_coders < 2 {
            return err("at least two coders are needed for consensus");
        }
        if !(self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0) {
            return err("frame_rate_hz must be positive");
        }
        Ok(())
    }

    pub fn conversation_id(i: usize) -> String {
        format!("conv{i:03}")
    }

    pub fn subject_ids(i: usize) -> [String; 2] {
        [format!("s{:03}", 2 * i), format!("s{:03}", 2 * i + 1)]
    }

    pub fn coder_id(c: usize) -> String {
        format!("coder{}", c + 1)
    }

    pub fn n_frames(&self) -> usize {
        libm::floor(self.duration_s * self.frame_rate_hz) as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrueEvent {
    pub conversation_id: String,
    /// The listener who produced the backchannel.
    pub subject_id: String,
    pub interval: TimeInterval,
    pub category: SignalCategory,
    pub signals: BTreeSet<SignalKind>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectTruth {
    pub subject_id: String,
    pub extraversion: f64,
    pub extrovert: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConversation {
    pub id: String,
    pub subjects: [SubjectTruth; 2],
    /// Turns as (speaker index, interval).
    pub turns: Vec<(usize, TimeInterval)>,
    pub streams: [FeatureStream; 2],
    pub vad: [VoiceActivity; 2],
    pub events: Vec<TrueEvent>,
    /// Coder annotations; ids are local to the conversation.
    pub annotations: Vec<CoderAnnotation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub conversations: Vec<SynthConversation>,
}

impl SynthCorpus {
    /// All annotations, renumbered with corpus-wide ids.
    pub fn annotations(&self) -> Vec<CoderAnnotation> {
        let mut out: Vec<CoderAnnotation> =
            self.conversations.iter().flat_map(|c| c.annotations.iter().cloned()).collect();
        for (i, a) in out.iter_mut().enumerate() {
            a.id = i;
        }
        out
    }

    pub fn events(&self) -> impl Iterator<Item = &TrueEvent> {
        self.conversations.iter().flat_map(|c| &c.events)
    }

    pub fn subjects(&self) -> impl Iterator<Item = &SubjectTruth> {
        self.conversations.iter().flat_map(|c| &c.subjects)
    }

    pub fn streams(&self) -> impl Iterator<Item = &FeatureStream> {
        self.conversations.iter().flat_map(|c| &c.streams)
    }

    pub fn vad(&self) -> impl Iterator<Item = &VoiceActivity> {
        self.conversations.iter().flat_map(|c| &c.vad)
    }
}

fn sample_turns(cfg: &SynthConfig, rng: &mut seed::Rng) -> Vec<(usize, TimeInterval)> {
    let mut turns = Vec::new();
    let mut speaker = rng.gen_range(0..2usize);
    let mut t = 0.0;
    while cfg.duration_s - t >= cfg.turn_min_s {
        let len = rng.gen_range(cfg.turn_min_s..=cfg.turn_max_s);
        let end = if cfg.duration_s - (t + len) < cfg.turn_min_s { cfg.duration_s } else { t + len };
        turns.push((speaker, TimeInterval::new(t, end).expect("positive turn")));
        speaker = 1 - speaker;
        t = end;
    }
    turns
}

fn event_signals(
    cfg: &SynthConfig,
    profile: &PersonaProfile,
    category: SignalCategory,
    rng: &mut seed::Rng,
) -> BTreeSet<SignalKind> {
    let mut signals = match category {
        SignalCategory::Verbal => [SignalKind::Utterance].into_iter().collect(),
        c => sample_response(profile, c, rng).signals,
    };
    if rng.gen::<f64>() < cfg.eyebrow_prob {
        signals.insert(if rng.gen::<bool>() { SignalKind::EyebrowRaise } else { SignalKind::EyebrowFrown });
    }
    signals
}

fn sample_events(
    cfg: &SynthConfig,
    conv: &str,
    subjects: &[SubjectTruth; 2],
    turns: &[(usize, TimeInterval)],
    rng: &mut seed::Rng,
) -> Vec<TrueEvent> {
    let mut events = Vec::new();
    if cfg.rate_per_min == 0.0 {
        return events;
    }
    let mean_len = (MIN_NEGATIVE_S + MAX_EVENT_S) / 2.0;
    let mean_gap = (60.0 / cfg.rate_per_min - mean_len - MIN_SEPARATION_S).max(0.1);
    let gap = Exp::new(1.0 / mean_gap).expect("positive rate");
    let profiles =
        subjects.each_ref().map(
            |s| {
                if s.extrovert {
                    PersonaProfile::extrovert()
                } else {
                    PersonaProfile::introvert()
                }
            },
        );
    for &(speaker, turn) in turns {
        let listener = 1 - speaker;
        let mut t = turn.onset() + TURN_LEAD_S + gap.sample(rng);
        loop {
            let len = rng.gen_range(MIN_NEGATIVE_S..=MAX_EVENT_S);
            if t + len > turn.offset() {
                break;
            }
            let category = SignalCategory::ALL[inverse_transform(cfg.category_mix, rng.gen::<f64>())];
            let signals = event_signals(cfg, &profiles[listener], category, rng);
            events.push(TrueEvent {
                conversation_id: conv.into(),
                subject_id: subjects[listener].subject_id.clone(),
                interval: TimeInterval::new(t, t + len).expect("positive length"),
                category,
                signals,
            });
            t += len + MIN_SEPARATION_S + gap.sample(rng);
        }
    }
    events
}

fn code_events(cfg: &SynthConfig, events: &[TrueEvent], rng: &mut seed::Rng) -> Vec<CoderAnnotation> {
    let end = cfg.n_frames() as f64 / cfg.frame_rate_hz;
    let jitter = Normal::new(0.0, cfg.jitter_s).expect("finite jitter");
    let mut out = Vec::new();
    for c in 0..cfg.n_coders {
        let coder = SynthConfig::coder_id(c);
        for e in events {
            if rng.gen::<f64>() < cfg.miss_prob {
                continue;
            }
            let mut on = e.interval.onset();
            let mut off = e.interval.offset();
            if cfg.jitter_s > 0.0 {
                on = (on + jitter.sample(rng)).max(0.0);
                off = (off + jitter.sample(rng)).min(end).max(on + MIN_CODED_S);
            }
            let signals: BTreeSet<SignalKind> = e
                .signals
                .iter()
                .map(|&s| {
                    if rng.gen::<f64>() < cfg.confusion_prob {
                        let others: Vec<SignalKind> = SignalKind::ALL.iter().copied().filter(|&k| k != s).collect();
                        others[rng.gen_range(0..others.len())]
                    } else {
                        s
                    }
                })
                .collect();
            out.push(CoderAnnotation {
                id: out.len(),
                coder_id: coder.clone(),
                conversation_id: e.conversation_id.clone(),
                subject_id: e.subject_id.clone(),
                interval: TimeInterval::new(on, off).expect("coded interval"),
                signals,
            });
        }
    }
    out
}

struct Channels {
    head_vel_t: usize,
    head_acc_t: usize,
    head_vel_r: usize,
    head_acc_r: usize,
    smile: usize,
    au: [usize; 6],
    f0: usize,
    energy: usize,
    mfcc: [usize; 6],
    gaze: usize,
    voice: usize,
}

impl Channels {
    fn new(schema: &FeatureSchema) -> Self {
        let ix = |n: &str| schema.index_of(n).expect("standard channel");
        Self {
            head_vel_t: ix("head_vel_T"),
            head_acc_t: ix("head_acc_T"),
            head_vel_r: ix("head_vel_R"),
            head_acc_r: ix("head_acc_R"),
            smile: ix("smile_ratio"),
            // AU01, AU02, AU04, AU06, AU12, AU15
            au: ["AU01_r", "AU02_r", "AU04_r", "AU06_r", "AU12_r", "AU15_r"].map(ix),
            f0: ix("f0"),
            energy: ix("energy"),
            mfcc: ["mfcc_1", "mfcc_2", "mfcc_3", "mfcc_4", "mfcc_5", "mfcc_6"].map(ix),
            gaze: ix("gaze_state"),
            voice: ix("voice_activity"),
        }
    }

    fn for_signal(&self, s: SignalKind) -> Vec<usize> {
        let [au01, au02, au04, au06, au12, au15] = self.au;
        match s {
            SignalKind::Nod => vec![self.head_vel_r, self.head_acc_r],
            SignalKind::HeadShake => vec![self.head_vel_t, self.head_acc_t],
            SignalKind::MouthSmile => vec![self.smile, au12, au06],
            SignalKind::MouthFrown => vec![au15, au04],
            SignalKind::EyebrowRaise => vec![au01, au02],
            SignalKind::EyebrowFrown => vec![au04],
            SignalKind::Utterance => vec![self.energy, self.f0, self.mfcc[0], self.mfcc[1], self.mfcc[2]],
        }
    }
}

/// Frames of `[onset, offset)` on a grid starting at time zero.
fn frame_range(iv: &TimeInterval, rate: f64, n: usize) -> core::ops::Range<usize> {
    let lo = libm::ceil(iv.onset() * rate - 1e-9).max(0.0) as usize;
    let hi = libm::ceil(iv.offset() * rate - 1e-9).max(0.0) as usize;
    lo.min(n)..hi.min(n)
}

fn base_stream(schema: &FeatureSchema, ch: &Channels, n: usize, rng: &mut seed::Rng) -> Vec<f64> {
    let width = schema.width();
    let innovation = libm::sqrt(1.0 - AR_COEF * AR_COEF);
    let mut data = vec![0.0; n * width];
    let mut state: Vec<f64> = (0..width).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let mut gaze = rng.gen_range(0..GAZE_STATES.len());
    for t in 0..n {
        let row = &mut data[t * width..(t + 1) * width];
        for c in 0..width {
            if c == ch.gaze || c == ch.voice {
                continue;
            }
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            state[c] = AR_COEF * state[c] + innovation * z;
            row[c] = state[c];
        }
        if rng.gen::<f64>() >= GAZE_STAY {
            gaze = (gaze + rng.gen_range(1..GAZE_STATES.len())) % GAZE_STATES.len();
        }
        row[ch.gaze] = gaze as f64;
    }
    data
}

fn mark_speech(data: &mut [f64], width: usize, ch: &Channels, speech: &[TimeInterval], rate: f64, n: usize) {
    for iv in speech {
        for t in frame_range(iv, rate, n) {
            let row = &mut data[t * width..(t + 1) * width];
            if row[ch.voice] == 0.0 {
                row[ch.voice] = 1.0;
                row[ch.energy] += SPEECH_ENERGY;
                row[ch.f0] += SPEECH_F0;
            }
        }
    }
}

fn plant_burst(data: &mut [f64], width: usize, ch: &Channels, e: &TrueEvent, amp: f64, rate: f64, n: usize) {
    let targets: BTreeSet<usize> = e.signals.iter().flat_map(|&s| ch.for_signal(s)).collect();
    let (on, len) = (e.interval.onset(), e.interval.duration());
    for t in frame_range(&e.interval, rate, n) {
        let phase = (t as f64 / rate - on) / len;
        let bump = amp * libm::sin(core::f64::consts::PI * phase.clamp(0.0, 1.0));
        let row = &mut data[t * width..(t + 1) * width];
        for &c in &targets {
            row[c] += bump;
        }
    }
}

fn plant_context(data: &mut [f64], width: usize, ch: &Channels, e: &TrueEvent, amp: f64, rate: f64, n: usize) {
    let on = e.interval.onset();
    let start = (on - CONTEXT_CUE_S).max(0.0);
    let Ok(span) = TimeInterval::new(start, on) else { return };
    let cue = ch.mfcc[3 + e.category.index()];
    for t in frame_range(&span, rate, n) {
        let ramp = (t as f64 / rate - (on - CONTEXT_CUE_S)) / CONTEXT_CUE_S;
        let row = &mut data[t * width..(t + 1) * width];
        row[ch.energy] -= amp;
        row[ch.f0] -= amp * ramp;
        row[cue] += amp;
    }
}

/// Generates conversation `i` from its own seed stream, independent of the
/// other conversations.
pub fn generate_conversation(cfg: &SynthConfig, i: usize) -> Result<SynthConversation, SynthError> {
    cfg.validate()?;
    let id = SynthConfig::conversation_id(i);
    let conv_seed = seed::for_conversation(cfg.seed, &id);
    let mut rng_people = seed::rng(seed::derive(conv_seed, &[0]));
    let mut rng_turns = seed::rng(seed::derive(conv_seed, &[1]));
    let mut rng_events = seed::rng(seed::derive(conv_seed, &[2]));
    let mut rng_coders = seed::rng(seed::derive(conv_seed, &[3]));

    let ids = SynthConfig::subject_ids(i);
    let subjects = ids.map(|subject_id| {
        let extrovert = rng_people.gen::<f64>() < cfg.extrovert_fraction;
        let extraversion =
            if extrovert { 5.0 - 2.0 * rng_people.gen::<f64>() } else { 1.0 + 2.0 * rng_people.gen::<f64>() };
        SubjectTruth { subject_id, extraversion, extrovert }
    });
    let turns = sample_turns(cfg, &mut rng_turns);
    let events = sample_events(cfg, &id, &subjects, &turns, &mut rng_events);
    let annotations = code_events(cfg, &events, &mut rng_coders);

    let speech: [Vec<TimeInterval>; 2] = core::array::from_fn(|s| {
        let mut v: Vec<TimeInterval> = turns.iter().filter(|t| t.0 == s).map(|t| t.1).collect();
        v.extend(
            events
                .iter()
                .filter(|e| e.subject_id == subjects[s].subject_id && e.signals.contains(&SignalKind::Utterance))
                .map(|e| e.interval),
        );
        v
    });

    let schema = FeatureSchema::standard();
    let ch = Channels::new(&schema);
    let width = schema.width();
    let n = cfg.n_frames();
    let rate = cfg.frame_rate_hz;
    let burst = BURST_AMPLITUDE * cfg.detectability;
    let context = CONTEXT_AMPLITUDE * cfg.detectability;
    let streams: [FeatureStream; 2] = core::array::from_fn(|s| {
        let mut rng = seed::rng(seed::derive(conv_seed, &[4, s as u64]));
        let mut data = base_stream(&schema, &ch, n, &mut rng);
        mark_speech(&mut data, width, &ch, &speech[s], rate, n);
        for e in &events {
            if e.subject_id == subjects[s].subject_id {
                plant_burst(&mut data, width, &ch, e, burst, rate, n);
            } else {
                plant_context(&mut data, width, &ch, e, context, rate, n);
            }
        }
        FeatureStream::from_frames(id.clone(), subjects[s].subject_id.clone(), rate, 0, width, data)
    });
    let vad =
        core::array::from_fn(|s| VoiceActivity::new(id.clone(), subjects[s].subject_id.clone(), speech[s].clone()));
    Ok(SynthConversation { id, subjects, turns, streams, vad, events, annotations })
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let conversations = (0..cfg.n_conversations).map(|i| generate_conversation(cfg, i)).collect::<Result<_, _>>()?;
    Ok(SynthCorpus { conversations })
}
