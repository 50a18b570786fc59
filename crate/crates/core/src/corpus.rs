//! Instance tables for the four tasks: backchannel opportunity and signal
//! category, each identified from the listener's own window or predicted
//! from the speaker's preceding context.
//!
//! Positives are consensus instances. Negatives are sampled from the
//! listener's silent, backchannel-free time and subsampled to the listener's
//! positive count.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{ConsensusInstance, SignalKind, TimeInterval};
use crate::evaluation::{EvalError, TaskData};
use crate::features::{
    aggregate, cut_context_window, cut_identification_window, window_series, ContextOutcome, FeatureError,
    FeatureSchema, FeatureSet, FeatureStream, FeatureWindow, Scaler,
};
use crate::learners::Series;
use crate::persona::{categorize, SignalCategory};
use crate::sampling::{eligible_regions, sample_negatives, NegativeInstance, VoiceActivity};
use crate::seed;
use crate::selftrain::{self_train, split_seed, SeedSplit, SelfTrainConfig, SelfTrainOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("conversation {conversation} has {found} streams, expected 2")]
    Dyad { conversation: String, found: usize },
    #[error("no stream for subject {subject} in conversation {conversation}")]
    MissingStream { conversation: String, subject: String },
    #[error("no voice activity for subject {subject} in conversation {conversation}")]
    MissingVad { conversation: String, subject: String },
    #[error("instance {id}: {source}")]
    Window { id: String, source: FeatureError },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusOptions {
    pub set: FeatureSet,
    /// Keep per-frame series for sequence models.
    pub series: bool,
    /// Subsample negatives to each listener's positive count.
    pub balance: bool,
    pub seed: u64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self { set: FeatureSet::Multimodal, series: false, balance: true, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub conversation_id: String,
    /// The listener.
    pub subject_id: String,
    pub speaker_id: String,
    pub interval: TimeInterval,
    pub opportunity: bool,
    /// Empty for negatives.
    pub signals: BTreeSet<SignalKind>,
    /// `None` for negatives and eyebrow-only positives.
    pub category: Option<SignalCategory>,
    pub listener: Vec<f64>,
    pub listener_series: Option<Series>,
    /// Aggregate of the speaker's three-second context; `None` when the
    /// onset is too early.
    pub context: Option<Vec<f64>>,
    pub context_series: Option<Series>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub instances: Vec<Instance>,
    pub occupancy: Vec<bool>,
    pub set: FeatureSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Task {
    IdentifyOpportunity,
    IdentifySignal,
    PredictOpportunity,
    PredictSignal,
}

impl Task {
    pub const ALL: [Task; 4] =
        [Task::IdentifyOpportunity, Task::IdentifySignal, Task::PredictOpportunity, Task::PredictSignal];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::IdentifyOpportunity => "identify-opportunity",
            Task::IdentifySignal => "identify-signal",
            Task::PredictOpportunity => "predict-opportunity",
            Task::PredictSignal => "predict-signal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| t.as_str() == s)
    }

    pub fn is_prediction(&self) -> bool {
        matches!(self, Task::PredictOpportunity | Task::PredictSignal)
    }

    pub fn is_signal(&self) -> bool {
        matches!(self, Task::IdentifySignal | Task::PredictSignal)
    }

    /// The identification task whose labels stand in for this task's.
    pub fn identification(&self) -> Task {
        if self.is_signal() {
            Task::IdentifySignal
        } else {
            Task::IdentifyOpportunity
        }
    }

    pub fn n_classes(&self) -> usize {
        if self.is_signal() {
            SignalCategory::ALL.len()
        } else {
            2
        }
    }

    pub fn positive_class(&self) -> Option<usize> {
        (!self.is_signal()).then_some(1)
    }

    pub fn includes(&self, inst: &Instance) -> bool {
        (!self.is_signal() || inst.category.is_some()) && (!self.is_prediction() || inst.context.is_some())
    }

    pub fn label(&self, inst: &Instance) -> Option<usize> {
        if self.is_signal() {
            inst.category.map(|c| c.index())
        } else {
            Some(inst.opportunity as usize)
        }
    }
}

/// A task's rows with the instance index of each row.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskView {
    pub task: Task,
    pub data: TaskData,
    pub instances: Vec<usize>,
}

impl Corpus {
    pub fn task(&self, task: Task) -> TaskView {
        let instances: Vec<usize> = (0..self.instances.len()).filter(|&i| task.includes(&self.instances[i])).collect();
        let pick = |i: &usize| &self.instances[*i];
        let vectors = instances
            .iter()
            .map(|i| {
                let inst = pick(i);
                if task.is_prediction() {
                    inst.context.clone().expect("filtered")
                } else {
                    inst.listener.clone()
                }
            })
            .collect();
        let series = instances
            .iter()
            .map(|i| {
                let inst = pick(i);
                if task.is_prediction() {
                    inst.context_series.clone()
                } else {
                    inst.listener_series.clone()
                }
            })
            .collect::<Option<Vec<Series>>>();
        let labels = instances.iter().map(|i| task.label(pick(i)).expect("filtered")).collect();
        TaskView {
            task,
            data: TaskData {
                vectors,
                series,
                labels,
                n_classes: task.n_classes(),
                occupancy: self.occupancy.clone(),
                positive_class: task.positive_class(),
            },
            instances,
        }
    }

    pub fn subjects_of(&self, view: &TaskView) -> Vec<&str> {
        view.instances.iter().map(|&i| self.instances[i].subject_id.as_str()).collect()
    }

    /// Positive count per listener, for balanced group assignment.
    pub fn subject_counts(&self) -> Vec<(String, usize)> {
        let mut m: BTreeMap<&str, usize> = BTreeMap::new();
        for inst in &self.instances {
            *m.entry(&inst.subject_id).or_default() += inst.opportunity as usize;
        }
        m.into_iter().map(|(s, n)| (s.into(), n)).collect()
    }
}

struct Encoded {
    vector: Vec<f64>,
    series: Option<Series>,
}

fn encode(w: &FeatureWindow, schema: &FeatureSchema, opts: &CorpusOptions) -> Result<Encoded, FeatureError> {
    Ok(Encoded {
        vector: aggregate(w, schema, opts.set)?.0,
        series: opts.series.then(|| window_series(w, schema, opts.set)),
    })
}

fn dyads<'a>(
    streams: &'a [FeatureStream],
    consensus: &[ConsensusInstance],
) -> Result<BTreeMap<&'a str, [&'a FeatureStream; 2]>, CorpusError> {
    let mut by_conv: BTreeMap<&str, Vec<&FeatureStream>> = BTreeMap::new();
    for s in streams {
        by_conv.entry(&s.conversation_id).or_default().push(s);
    }
    let mut out = BTreeMap::new();
    for (conv, mut pair) in by_conv {
        if pair.len() != 2 {
            return Err(CorpusError::Dyad { conversation: conv.into(), found: pair.len() });
        }
        pair.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        out.insert(conv, [pair[0], pair[1]]);
    }
    for c in consensus {
        let known = out.get(c.conversation_id.as_str()).is_some_and(|p| p.iter().any(|s| s.subject_id == c.subject_id));
        if !known {
            return Err(CorpusError::MissingStream {
                conversation: c.conversation_id.clone(),
                subject: c.subject_id.clone(),
            });
        }
    }
    Ok(out)
}

fn listener_seed(opts: &CorpusOptions, conv: &str, subj: &str) -> u64 {
    seed::derive(seed::for_conversation(opts.seed, conv), &[seed::hash_str(subj)])
}

/// Negatives for every listener, in (conversation, subject, onset) order.
/// Each listener's stream span is the sampling span.
pub fn sample_corpus_negatives(
    streams: &[FeatureStream],
    vad: &[VoiceActivity],
    consensus: &[ConsensusInstance],
    opts: &CorpusOptions,
) -> Result<Vec<NegativeInstance>, CorpusError> {
    let mut out = Vec::new();
    for (conv, pair) in dyads(streams, consensus)? {
        for listener in pair {
            let subj = listener.subject_id.as_str();
            let listener_vad = vad
                .iter()
                .find(|v| v.conversation_id == conv && v.subject_id == subj)
                .ok_or_else(|| CorpusError::MissingVad { conversation: conv.into(), subject: subj.into() })?;
            let positives: Vec<ConsensusInstance> =
                consensus.iter().filter(|c| c.conversation_id == conv && c.subject_id == subj).cloned().collect();
            let span = TimeInterval::new(listener.start_s(), listener.end_s())
                .map_err(|_| CorpusError::Window { id: format!("{conv}:{subj}"), source: FeatureError::EmptyStream })?;
            let regions = eligible_regions(span, listener_vad, &positives);
            let base = listener_seed(opts, conv, subj);
            let mut negatives = sample_negatives(conv, subj, &regions, base, None);
            if opts.balance && negatives.len() > positives.len() {
                let mut rng = seed::rng(seed::derive(base, &[1]));
                negatives.shuffle(&mut rng);
                negatives.truncate(positives.len());
                negatives.sort_by(|a, b| a.interval.onset().total_cmp(&b.interval.onset()));
            }
            out.extend(negatives);
        }
    }
    Ok(out)
}

/// Cuts and aggregates the listener window and speaker context of every
/// positive and negative. Instance ids are `conversation:subject:pNNNN` or
/// `:nNNNN`, numbered in onset order per listener.
pub fn build_instances(
    streams: &[FeatureStream],
    consensus: &[ConsensusInstance],
    negatives: &[NegativeInstance],
    schema: &FeatureSchema,
    opts: &CorpusOptions,
) -> Result<Corpus, CorpusError> {
    let pairs = dyads(streams, consensus)?;
    for n in negatives {
        if !pairs.get(n.conversation_id.as_str()).is_some_and(|p| p.iter().any(|s| s.subject_id == n.subject_id)) {
            return Err(CorpusError::MissingStream {
                conversation: n.conversation_id.clone(),
                subject: n.subject_id.clone(),
            });
        }
    }
    let mut instances = Vec::new();
    for (conv, pair) in pairs {
        for li in 0..2 {
            let (listener, speaker) = (pair[li], pair[1 - li]);
            let subj = listener.subject_id.as_str();
            let mut items: Vec<(TimeInterval, Option<&ConsensusInstance>)> = consensus
                .iter()
                .filter(|c| c.conversation_id == conv && c.subject_id == subj)
                .map(|p| (p.interval, Some(p)))
                .collect();
            items.extend(
                negatives
                    .iter()
                    .filter(|n| n.conversation_id == conv && n.subject_id == subj)
                    .map(|n| (n.interval, None)),
            );
            items.sort_by(|a, b| a.0.onset().total_cmp(&b.0.onset()).then(a.1.is_none().cmp(&b.1.is_none())));
            let (mut np, mut nn) = (0usize, 0usize);
            for (interval, pos) in items {
                let id = match pos {
                    Some(_) => {
                        np += 1;
                        format!("{conv}:{subj}:p{np:04}")
                    }
                    None => {
                        nn += 1;
                        format!("{conv}:{subj}:n{nn:04}")
                    }
                };
                let wrap = |e: FeatureError| CorpusError::Window { id: id.clone(), source: e };
                let lw = cut_identification_window(listener, &id, interval).map_err(wrap)?;
                let l = encode(&lw, schema, opts).map_err(wrap)?;
                let (context, context_series) =
                    match cut_context_window(speaker, &id, interval.onset()).map_err(wrap)? {
                        ContextOutcome::Window(w) => {
                            let e = encode(&w, schema, opts).map_err(wrap)?;
                            (Some(e.vector), e.series)
                        }
                        ContextOutcome::Dropped { .. } => (None, None),
                    };
                let signals = pos.map(|p| p.signals.clone()).unwrap_or_default();
                let category = if signals.is_empty() { None } else { categorize(&signals).ok().flatten() };
                instances.push(Instance {
                    id,
                    conversation_id: conv.into(),
                    subject_id: subj.into(),
                    speaker_id: speaker.subject_id.clone(),
                    interval,
                    opportunity: pos.is_some(),
                    signals,
                    category,
                    listener: l.vector,
                    listener_series: l.series,
                    context,
                    context_series,
                });
            }
        }
    }
    Ok(Corpus { instances, occupancy: schema.occupancy_mask(opts.set), set: opts.set })
}

/// Negative sampling followed by instance construction.
pub fn build_corpus(
    streams: &[FeatureStream],
    vad: &[VoiceActivity],
    consensus: &[ConsensusInstance],
    schema: &FeatureSchema,
    opts: &CorpusOptions,
) -> Result<Corpus, CorpusError> {
    let negatives = sample_corpus_negatives(streams, vad, consensus, opts)?;
    build_instances(streams, consensus, &negatives, schema, opts)
}

/// Self-training over every row of a task: a stratified seed of fraction
/// `cfg.seed_fraction` keeps its human labels and the rest receive
/// pseudo-labels. Vectors are standardized over all rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Identification {
    pub split: SeedSplit,
    pub scaler: Scaler,
    pub outcome: SelfTrainOutcome,
}

impl Identification {
    /// Ledger label of every row.
    pub fn labels(&self, n: usize) -> Vec<usize> {
        (0..n).map(|r| self.outcome.ledger.get(r).expect("ledger covers every row").label).collect()
    }
}

pub fn identify(data: &TaskData, cfg: &SelfTrainConfig, split: u64) -> Result<Identification, EvalError> {
    data.validate()?;
    let rows: Vec<usize> = (0..data.len()).collect();
    let split = split_seed(&rows, &data.labels, cfg.seed_fraction, split)?;
    let scaler = Scaler::fit(&data.vectors, &data.occupancy);
    let scaled: Vec<Vec<f64>> = data.vectors.iter().map(|v| scaler.apply(v)).collect();
    let inputs = if cfg.base.kind().uses_series() {
        crate::learners::Inputs::Series(
            data.series.as_deref().ok_or_else(|| EvalError::Config("task has no series".into()))?,
        )
    } else {
        crate::learners::Inputs::Vectors(&scaled)
    };
    let outcome = self_train(cfg, inputs, &split.labeled, &split.unlabeled, data.n_classes)?;
    Ok(Identification { split, scaler, outcome })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::consensus_all;
    use crate::synth::{generate, SynthConfig};
    use alloc::vec::Vec;

    fn corpus(series: bool) -> Corpus {
        let cfg = SynthConfig { n_conversations: 2, duration_s: 120.0, seed: 3, ..SynthConfig::default() };
        let syn = generate(&cfg).unwrap();
        let streams: Vec<FeatureStream> = syn.streams().cloned().collect();
        let vad: Vec<VoiceActivity> = syn.vad().cloned().collect();
        let cons = consensus_all(&syn.annotations()).unwrap();
        let opts = CorpusOptions { series, seed: 1, ..CorpusOptions::default() };
        build_corpus(&streams, &vad, &cons.instances, &FeatureSchema::standard(), &opts).unwrap()
    }

    #[test]
    fn negatives_balance_positives_per_listener() {
        let c = corpus(false);
        let mut per: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for i in &c.instances {
            let e = per.entry(&i.subject_id).or_default();
            if i.opportunity {
                e.0 += 1
            } else {
                e.1 += 1
            }
        }
        assert_eq!(per.len(), 4);
        for (p, n) in per.values() {
            assert!(*p > 0 && p == n);
        }
    }

    #[test]
    fn negatives_avoid_positives_and_own_speech() {
        let c = corpus(false);
        for n in c.instances.iter().filter(|i| !i.opportunity) {
            assert!(c
                .instances
                .iter()
                .filter(|p| p.opportunity && p.subject_id == n.subject_id)
                .all(|p| !p.interval.overlaps(&n.interval)));
            assert_eq!(n.category, None);
        }
    }

    #[test]
    fn task_views_have_consistent_shapes() {
        let c = corpus(true);
        for task in Task::ALL {
            let v = c.task(task);
            v.data.validate().unwrap();
            assert!(!v.data.is_empty());
            assert_eq!(v.data.series.as_ref().map(|s| s.len()), Some(v.data.len()));
            assert!(v.instances.iter().all(|&i| task.includes(&c.instances[i])));
        }
        let sig = c.task(Task::IdentifySignal);
        assert!(sig.instances.iter().all(|&i| c.instances[i].opportunity));
    }

    #[test]
    fn identification_ledger_covers_rows() {
        let c = corpus(false);
        let v = c.task(Task::IdentifyOpportunity);
        let spec = crate::learners::ClassifierSpec::default_for(crate::learners::ClassifierKind::Knn, 1);
        let id = identify(&v.data, &SelfTrainConfig::new(spec, 0.25), 9).unwrap();
        assert_eq!(id.labels(v.data.len()).len(), v.data.len());
        for &(r, l) in &id.split.labeled {
            assert_eq!(id.outcome.ledger.get(r).unwrap().label, l);
        }
    }
}
