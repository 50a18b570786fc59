use backchannel_core::annotations::consensus_all;
use backchannel_core::corpus::{build_corpus, Corpus, CorpusOptions, Task};
use backchannel_core::features::{FeatureSchema, FeatureStream};
use backchannel_core::learners::{fit_supervised, predict_proba, ClassifierKind, ClassifierSpec, Inputs, Sample};
use backchannel_core::sampling::VoiceActivity;
use backchannel_core::synth::{generate, SynthConfig};

fn corpus(cfg: &SynthConfig) -> Corpus {
    let synth = generate(cfg).unwrap();
    let positives = consensus_all(&synth.annotations()).unwrap().instances;
    let streams: Vec<FeatureStream> = synth.streams().cloned().collect();
    let vad: Vec<VoiceActivity> = synth.vad().cloned().collect();
    let opts = CorpusOptions { seed: cfg.seed, ..CorpusOptions::default() };
    build_corpus(&streams, &vad, &positives, &FeatureSchema::standard(), &opts).unwrap()
}

/// Mann-Whitney estimate of the area under the ROC curve.
fn auc(scores: &[f64], positive: &[bool]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(positive).filter(|(_, p)| **p).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(positive).filter(|(_, p)| !**p).map(|(s, _)| *s).collect();
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// Held-out AUC on `task` with the first half of subjects for training.
fn held_out_auc(c: &Corpus, task: Task) -> f64 {
    let view = c.task(task);
    let subjects = c.subjects_of(&view);
    let mut names: Vec<&str> = subjects.clone();
    names.sort_unstable();
    names.dedup();
    let train_set: Vec<&str> = names[..names.len() / 2].to_vec();
    let (train, test): (Vec<usize>, Vec<usize>) = (0..view.data.len()).partition(|&i| train_set.contains(&subjects[i]));
    let spec = ClassifierSpec::default_for(ClassifierKind::RandomForest, 3);
    let labels: Vec<usize> = train.iter().map(|&i| view.data.labels[i]).collect();
    let model = fit_supervised(&spec, Inputs::Vectors(&view.data.vectors), &train, &labels, 2).unwrap();
    let pos = view.data.positive_class.unwrap();
    let scores: Vec<f64> = test
        .iter()
        .map(|&i| predict_proba(&model, Sample::Vector(&view.data.vectors[i])).unwrap().probs[pos])
        .collect();
    let truth: Vec<bool> = test.iter().map(|&i| view.data.labels[i] == pos).collect();
    auc(&scores, &truth)
}

fn small(detectability: f64, seed: u64) -> SynthConfig {
    SynthConfig { n_conversations: 16, duration_s: 300.0, detectability, seed, ..SynthConfig::default() }
}

#[test]
fn null_corpus_is_unlearnable() {
    for seed in [5, 6, 7] {
        let a = held_out_auc(&corpus(&small(0.0, seed)), Task::PredictOpportunity);
        assert!((a - 0.5).abs() <= 0.05, "seed {seed}: auc {a}");
    }
}

#[test]
fn planted_signal_is_learnable() {
    let a = held_out_auc(&corpus(&small(1.0, 5)), Task::IdentifyOpportunity);
    assert!(a > 0.9, "auc {a}");
}

#[test]
fn synthesis_is_reproducible() {
    let cfg = SynthConfig { n_conversations: 3, duration_s: 120.0, seed: 9, ..SynthConfig::default() };
    let a = corpus(&cfg);
    let b = corpus(&cfg);
    assert_eq!(a, b);
    let other = corpus(&SynthConfig { seed: 10, ..cfg });
    assert_ne!(a, other);
}
