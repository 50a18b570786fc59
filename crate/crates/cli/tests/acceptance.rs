//! Acceptance suite: one pass/fail line per criterion.
//!
//! Run with `cargo test -p backchannel --test acceptance -- --nocapture` to
//! see the report.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;

use backchannel_core::annotations::{
    cluster_annotations, consensus, consensus_all, fleiss_kappa, AgreementTable, CoderAnnotation, Kappa, SignalKind,
    TimeInterval,
};
use backchannel_core::corpus::{build_corpus, identify, Corpus, CorpusOptions, Task};
use backchannel_core::evaluation::{
    compare_paradigms, compute_metrics, ks_two_sample, wilcoxon_signed_rank, worst_case_confusion, GroupAssignment,
    ParadigmConfig, ParadigmData, RunKey, SweepPlan,
};
use backchannel_core::features::{FeatureSchema, FeatureStream};
use backchannel_core::learners::mlp::Mlp;
use backchannel_core::learners::resnet::ResNet;
use backchannel_core::learners::{
    smote, ClassifierKind, ClassifierSpec, ForestParams, Hyperparameters, MlpParams, ResNetParams, Series, SmoteOptions,
};
use backchannel_core::persona::{sample_response, PersonaProfile, SignalCategory};
use backchannel_core::sampling::{eligible_regions, sample_negatives, VoiceActivity};
use backchannel_core::seed;
use backchannel_core::selftrain::SelfTrainConfig;
use backchannel_core::synth::{generate, SynthConfig};
use backchannel_core::ConsensusInstance;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const CORPUS_SEED: u64 = 42;

/// The default synthetic corpus with per-frame series cached.
fn default_corpus() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let synth = generate(&SynthConfig { seed: CORPUS_SEED, ..SynthConfig::default() }).expect("synth");
        let positives = consensus_all(&synth.annotations()).expect("consensus").instances;
        let streams: Vec<FeatureStream> = synth.streams().cloned().collect();
        let vad: Vec<VoiceActivity> = synth.vad().cloned().collect();
        let opts = CorpusOptions { series: true, seed: CORPUS_SEED, ..CorpusOptions::default() };
        build_corpus(&streams, &vad, &positives, &FeatureSchema::standard(), &opts).expect("corpus")
    })
}

// ------------------------------------------------------------------ 1

fn canonical(a: &CoderAnnotation, b: &CoderAnnotation) -> std::cmp::Ordering {
    a.interval
        .onset()
        .total_cmp(&b.interval.onset())
        .then(a.interval.offset().total_cmp(&b.interval.offset()))
        .then_with(|| a.coder_id.cmp(&b.coder_id))
        .then_with(|| a.signals.cmp(&b.signals))
        .then(a.id.cmp(&b.id))
}

fn linked(a: &CoderAnnotation, b: &CoderAnnotation) -> bool {
    a.coder_id != b.coder_id
        && (a.interval.onset() - b.interval.onset()).abs() < 1.0
        && (a.interval.offset() - b.interval.offset()).abs() < 1.0
}

fn connected(block: &[&CoderAnnotation]) -> bool {
    let mut reached = vec![false; block.len()];
    reached[0] = true;
    let mut grew = true;
    while grew {
        grew = false;
        for i in 0..block.len() {
            for j in 0..block.len() {
                if reached[i] && !reached[j] && linked(block[i], block[j]) {
                    reached[j] = true;
                    grew = true;
                }
            }
        }
    }
    reached.iter().all(|r| *r)
}

fn spread(block: &[&CoderAnnotation]) -> f64 {
    let n = block.len() as f64;
    let on = block.iter().map(|a| a.interval.onset()).sum::<f64>() / n;
    let off = block.iter().map(|a| a.interval.offset()).sum::<f64>() / n;
    block.iter().map(|a| (a.interval.onset() - on).abs() + (a.interval.offset() - off).abs()).sum()
}

/// Every set partition via restricted growth strings; the admissible one
/// with fewest blocks, then least spread, then smallest leader vector.
fn oracle_partition(items: &[&CoderAnnotation]) -> Vec<Vec<usize>> {
    let n = items.len();
    let mut best: Option<(usize, f64, Vec<usize>, Vec<Vec<usize>>)> = None;
    let mut rgs = vec![0usize; n];
    loop {
        let k = rgs.iter().max().map_or(0, |m| m + 1);
        let blocks: Vec<Vec<usize>> = (0..k).map(|b| (0..n).filter(|&i| rgs[i] == b).collect()).collect();
        let ok = blocks.iter().all(|b| {
            let members: Vec<&CoderAnnotation> = b.iter().map(|&i| items[i]).collect();
            let coders: BTreeSet<&str> = members.iter().map(|a| a.coder_id.as_str()).collect();
            coders.len() == members.len() && connected(&members)
        });
        if ok {
            let cost: f64 = blocks.iter().map(|b| spread(&b.iter().map(|&i| items[i]).collect::<Vec<_>>())).sum();
            let leaders: Vec<usize> = (0..n).map(|i| blocks[rgs[i]][0]).collect();
            let better = match &best {
                None => true,
                Some((bk, bc, bl, _)) => {
                    k < *bk || (k == *bk && (cost < bc - 1e-9 || ((cost - bc).abs() <= 1e-9 && leaders < *bl)))
                }
            };
            if better {
                best = Some((k, cost, leaders, blocks));
            }
        }
        // next restricted growth string
        let mut i = n;
        loop {
            if i == 1 || n == 0 {
                return best.expect("singletons are admissible").3;
            }
            i -= 1;
            let max_prefix = rgs[..i].iter().max().copied().unwrap_or(0);
            if rgs[i] <= max_prefix {
                rgs[i] += 1;
                for r in rgs.iter_mut().skip(i + 1) {
                    *r = 0;
                }
                break;
            }
        }
    }
}

fn random_case(rng: &mut impl Rng) -> Vec<CoderAnnotation> {
    let n = rng.gen_range(1..=6);
    let kinds = [SignalKind::Nod, SignalKind::MouthSmile, SignalKind::Utterance];
    let mut out: Vec<CoderAnnotation> = Vec::new();
    while out.len() < n {
        let coder = ["c1", "c2", "c3"][rng.gen_range(0..3)];
        let on = rng.gen_range(0..60) as f64 * 0.05;
        let off = on + rng.gen_range(6..30) as f64 * 0.05;
        let mut signals: BTreeSet<SignalKind> = kinds.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        if signals.is_empty() {
            signals.insert(kinds[rng.gen_range(0..3)]);
        }
        let iv = TimeInterval::new(on, off).unwrap();
        if out.iter().any(|a| a.coder_id == coder && a.interval == iv) {
            continue;
        }
        out.push(CoderAnnotation {
            id: out.len(),
            coder_id: coder.into(),
            conversation_id: "c".into(),
            subject_id: "s".into(),
            interval: iv,
            signals,
        });
    }
    out
}

fn oracle_consensus(blocks: &[Vec<&CoderAnnotation>]) -> Vec<ConsensusInstance> {
    let mut out = Vec::new();
    for b in blocks.iter().filter(|b| b.len() >= 2) {
        let signals: BTreeSet<SignalKind> =
            SignalKind::ALL.into_iter().filter(|s| b.iter().filter(|a| a.signals.contains(s)).count() >= 2).collect();
        if signals.is_empty() {
            continue;
        }
        let n = b.len() as f64;
        let on = b.iter().map(|a| a.interval.onset()).sum::<f64>() / n;
        let off = b.iter().map(|a| a.interval.offset()).sum::<f64>() / n;
        let mut ids: Vec<usize> = b.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        out.push(ConsensusInstance {
            conversation_id: "c".into(),
            subject_id: "s".into(),
            interval: TimeInterval::new(on, off).unwrap(),
            signals,
            support: b.len(),
            member_ids: ids,
        });
    }
    out.sort_by(|a, b| {
        a.interval.onset().total_cmp(&b.interval.onset()).then(a.interval.offset().total_cmp(&b.interval.offset()))
    });
    out
}

fn c1_consensus_oracle() -> Check {
    let t = Instant::now();
    let mut rng = seed::rng(1001);
    let mut conflicted = 0;
    for case in 0..1000 {
        let anns = random_case(&mut rng);
        let mut sorted: Vec<&CoderAnnotation> = anns.iter().collect();
        sorted.sort_by(|a, b| canonical(a, b));
        let blocks: Vec<Vec<&CoderAnnotation>> =
            oracle_partition(&sorted).into_iter().map(|b| b.into_iter().map(|i| sorted[i]).collect()).collect();
        let clusters = cluster_annotations(&anns).map_err(|e| e.to_string())?;
        let ids = |bs: Vec<Vec<usize>>| {
            bs.into_iter().map(|b| b.into_iter().collect::<BTreeSet<_>>()).collect::<BTreeSet<_>>()
        };
        let want = ids(blocks.iter().map(|b| b.iter().map(|a| a.id).collect()).collect());
        let got = ids(clusters.iter().map(|c| c.iter().map(|a| a.id).collect()).collect());
        ensure!(want == got, "case {case}: clusters {got:?}, oracle {want:?}");
        if blocks.iter().any(|b| b.len() < 3) && anns.len() > blocks.len() {
            conflicted += 1;
        }
        let merged = consensus(&clusters).instances;
        let expected = oracle_consensus(&blocks);
        ensure!(merged == expected, "case {case}: consensus {merged:?}, oracle {expected:?}");
    }
    let secs = t.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.1} s");
    Ok(format!("1000 cases ({conflicted} with merged clusters) match exactly in {secs:.2} s"))
}

// ------------------------------------------------------------------ 2

fn c2_fleiss() -> Check {
    let perfect = AgreementTable::new(vec![vec![3, 0], vec![0, 3], vec![3, 0]]).map_err(|e| e.to_string())?;
    ensure!(fleiss_kappa(&perfect) == Kappa::Defined(1.0), "perfect agreement gave {:?}", fleiss_kappa(&perfect));
    let hand = AgreementTable::new(vec![vec![3, 0], vec![2, 1]]).map_err(|e| e.to_string())?;
    let k = fleiss_kappa(&hand).value().ok_or("undefined kappa")?;
    ensure!((k - (-0.2)).abs() < 1e-9, "hand case gave {k}");
    Ok(format!("perfect = 1.0, hand case = {k}"))
}

// ------------------------------------------------------------------ 3

fn c3_negative_sampler() -> Check {
    let mut rng = seed::rng(3003);
    let mut total = 0usize;
    let mut scenario = 0u64;
    while total < 10_000 {
        scenario += 1;
        let end = rng.gen_range(60.0..300.0);
        let span = TimeInterval::new(0.0, end).unwrap();
        let mut speech = Vec::new();
        let mut t = rng.gen_range(0.0..10.0);
        while t < end {
            let d = rng.gen_range(0.5..20.0);
            speech.push(TimeInterval::new(t, (t + d).min(end + 5.0)).unwrap());
            t += d + rng.gen_range(1.0..30.0);
        }
        let vad = VoiceActivity::new("c".into(), "s".into(), speech.clone());
        let positives: Vec<ConsensusInstance> = (0..rng.gen_range(0..20))
            .map(|_| {
                let on = rng.gen_range(0.0..end - 3.0);
                ConsensusInstance {
                    conversation_id: "c".into(),
                    subject_id: "s".into(),
                    interval: TimeInterval::new(on, on + rng.gen_range(0.3..3.0)).unwrap(),
                    signals: [SignalKind::Nod].into_iter().collect(),
                    support: 2,
                    member_ids: vec![],
                }
            })
            .collect();
        let regions = eligible_regions(span, &vad, &positives);
        let negs = sample_negatives("c", "s", &regions, seed::derive(3003, &[scenario]), None);
        for (i, n) in negs.iter().enumerate() {
            let iv = n.interval;
            let len = iv.duration();
            ensure!((1.06..=5.43).contains(&len), "scenario {scenario}: length {len}");
            ensure!(iv.onset() >= 0.0 && iv.offset() <= end, "scenario {scenario}: {iv:?} outside span");
            if i > 0 {
                ensure!(negs[i - 1].interval.offset() <= iv.onset(), "scenario {scenario}: overlapping negatives");
            }
            for s in &speech {
                ensure!(!(iv.onset() < s.offset() && iv.offset() > s.onset()), "scenario {scenario}: overlaps speech");
            }
            for p in &positives {
                let q = p.interval;
                ensure!(
                    !(iv.onset() < q.offset() && iv.offset() > q.onset()),
                    "scenario {scenario}: overlaps positive"
                );
            }
        }
        total += negs.len();
    }
    Ok(format!("{total} negatives over {scenario} scenarios, no violations"))
}

// ------------------------------------------------------------------ 4

fn reduced_spec(kind: ClassifierKind) -> ClassifierSpec {
    let hyper = match Hyperparameters::default_for(kind) {
        Hyperparameters::Mlp(p) => Hyperparameters::Mlp(MlpParams { hidden: vec![32], epochs: 20, ..p }),
        Hyperparameters::ResNetTs(_) => Hyperparameters::ResNetTs(ResNetParams {
            blocks: 1,
            filters: 8,
            kernel_sizes: vec![5, 3, 3],
            epochs: 2,
            batch_size: 32,
            learning_rate: 1e-3,
        }),
        Hyperparameters::RandomForest(p) => Hyperparameters::RandomForest(ForestParams { n_trees: 50, ..p }),
        h => h,
    };
    ClassifierSpec::new(hyper, 4).unwrap()
}

fn c4_degenerate_equivalence() -> Check {
    let c = default_corpus();
    let t = Instant::now();
    let view = c.task(Task::IdentifyOpportunity);
    let kinds = [
        ClassifierKind::Knn,
        ClassifierKind::RandomForest,
        ClassifierKind::AdaBoost,
        ClassifierKind::Mlp,
        ClassifierKind::ResNetTs,
        ClassifierKind::LabelSpreading,
    ];
    let specs: Vec<ClassifierSpec> = kinds.iter().map(|&k| reduced_spec(k)).collect();
    let plan = SweepPlan::new(specs, vec![1.0], 1, CORPUS_SEED);
    let mut notes = Vec::new();
    for (i, kind) in kinds.iter().enumerate() {
        let key = RunKey { spec: i, x: 0, simulation: 0, fold: 0 };
        let run = plan.run(&view.data, key).map_err(|e| e.to_string())?;
        let base = plan.supervised_baseline(&view.data, key).map_err(|e| e.to_string())?;
        let bits = |o: &backchannel_core::evaluation::RunOutcome| {
            [o.accuracy, o.precision_w, o.recall_w, o.f1_w].map(f64::to_bits)
        };
        ensure!(bits(&run) == bits(&base), "{}: self-train {:?} vs baseline {:?}", kind.as_str(), run, base);
        notes.push(format!("{}={:.3}", kind.as_str(), run.accuracy));
    }
    let secs = t.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("identical metrics for all kinds in {secs:.1} s ({})", notes.join(" ")))
}

// ------------------------------------------------------------------ 5

fn c5_elbow() -> Check {
    let c = default_corpus();
    let t = Instant::now();
    let view = c.task(Task::IdentifyOpportunity);
    let positives = c.instances.iter().filter(|i| i.opportunity).count();
    let specs = vec![
        ClassifierSpec::default_for(ClassifierKind::Knn, 5),
        ClassifierSpec::default_for(ClassifierKind::RandomForest, 5),
    ];
    let plan = SweepPlan::new(specs, vec![0.25, 1.0], 1, CORPUS_SEED);
    let outcomes = plan
        .keys()
        .into_iter()
        .map(|k| plan.run(&view.data, k))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let result = plan.assemble(outcomes);
    let best = result.best_spec().ok_or("no cells")?;
    let lo = result.cell(best, 0.25).ok_or("missing cell")?.mean_accuracy;
    let hi = result.cell(best, 1.0).ok_or("missing cell")?.mean_accuracy;
    let secs = t.elapsed().as_secs_f64();
    let name = ["knn", "random_forest"][best];
    ensure!(lo >= 0.95 * hi, "{name}: acc(0.25) = {lo:.4} < 0.95 x acc(1.0) = {:.4}", 0.95 * hi);
    ensure!(secs < 300.0, "took {secs:.1} s");
    Ok(format!(
        "{positives} positives; best {name}: acc(0.25) {lo:.4} vs acc(1.0) {hi:.4} (ratio {:.4}) in {secs:.1} s",
        lo / hi
    ))
}

// ------------------------------------------------------------------ 6

fn c6_paradigm_ratio() -> Check {
    let c = default_corpus();
    let t = Instant::now();
    let mut pseudo_by_id: BTreeMap<&str, usize> = BTreeMap::new();
    let mut ledger: BTreeMap<Task, BTreeMap<usize, usize>> = BTreeMap::new();
    for task in [Task::IdentifyOpportunity, Task::IdentifySignal] {
        let view = c.task(task);
        let cfg = SelfTrainConfig::new(ClassifierSpec::default_for(ClassifierKind::RandomForest, 6), 0.25);
        let id = identify(&view.data, &cfg, seed::derive(CORPUS_SEED, &[6, task as u64])).map_err(|e| e.to_string())?;
        let labels = id.labels(view.data.len());
        ledger.insert(task, view.instances.iter().copied().zip(labels).collect());
    }
    let counts = c.subject_counts();
    let mut parts = Vec::new();
    for task in [Task::PredictOpportunity, Task::PredictSignal] {
        let view = c.task(task);
        let source = &ledger[&task.identification()];
        let pseudo: Vec<usize> = view.instances.iter().map(|i| source[i]).collect();
        for (&i, &l) in view.instances.iter().zip(&pseudo) {
            pseudo_by_id.insert(&c.instances[i].id, l);
        }
        let subjects = c.subjects_of(&view);
        let cfg = ParadigmConfig {
            spec: ClassifierSpec::default_for(ClassifierKind::AdaBoost, 6),
            smote: task.is_signal().then(SmoteOptions::default),
            assignment: GroupAssignment::balanced(&counts, 6).map_err(|e| e.to_string())?,
            seed: seed::derive(CORPUS_SEED, &[7, task as u64]),
        };
        let data = ParadigmData {
            vectors: &view.data.vectors,
            true_labels: &view.data.labels,
            pseudo_labels: &pseudo,
            subjects: &subjects,
            n_classes: view.data.n_classes,
            occupancy: &view.data.occupancy,
            positive_class: view.data.positive_class,
        };
        let r = compare_paradigms(&cfg, &data).map_err(|e| e.to_string())?;
        let ratio = r.ratios.f1_w.ok_or("human F1 is zero")?;
        parts.push((task, r.human.weighted.f1, r.pseudo.weighted.f1, ratio));
    }
    let secs = t.elapsed().as_secs_f64();
    let summary = parts
        .iter()
        .map(|(t, h, p, r)| format!("{}: human {h:.4} pseudo {p:.4} ratio {r:.4}", t.as_str()))
        .collect::<Vec<_>>()
        .join("; ");
    for (task, _, _, r) in &parts {
        ensure!((0.85..=1.05).contains(r), "{}: ratio {r:.4} outside [0.85, 1.05] ({summary})", task.as_str());
        ensure!(*r >= 0.90, "{}: ratio {r:.4} below 0.90 ({summary})", task.as_str());
    }
    ensure!(secs < 300.0, "took {secs:.1} s");
    Ok(format!("{summary}; {secs:.1} s"))
}

// ------------------------------------------------------------------ 7

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

fn c7_gradients() -> Check {
    let t = Instant::now();
    let mut rng = seed::rng(7007);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let d = rng.gen_range(2..6);
        let k = rng.gen_range(2..5);
        let mut sizes = vec![d];
        for _ in 0..rng.gen_range(1..3) {
            sizes.push(rng.gen_range(2..7));
        }
        sizes.push(k);
        let mut net = Mlp::init(sizes, case);
        for w in net.params_mut() {
            *w += rng.gen_range(-0.1..0.1);
        }
        let xs: Vec<Vec<f64>> = (0..4).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let ys: Vec<usize> = (0..4).map(|_| rng.gen_range(0..k)).collect();
        let (_, g) = net.loss_and_grad(&refs, &ys);
        for p in 0..net.params().len() {
            let mut a = net.clone();
            a.params_mut()[p] += h;
            let mut b = net.clone();
            b.params_mut()[p] -= h;
            let fd = (a.loss_and_grad(&refs, &ys).0 - b.loss_and_grad(&refs, &ys).0) / (2.0 * h);
            let e = rel_err(g[p], fd);
            ensure!(e < 1e-3, "mlp case {case} param {p}: {} vs {fd}", g[p]);
            worst = worst.max(e);
        }

        let c_in = rng.gen_range(1..4);
        let classes = rng.gen_range(2..4);
        let p = ResNetParams {
            blocks: rng.gen_range(1..3),
            filters: rng.gen_range(2..4),
            kernel_sizes: vec![3, rng.gen_range(1..4), 3],
            epochs: 1,
            batch_size: 4,
            learning_rate: 1e-3,
        };
        let mut res = ResNet::init(c_in, &p, classes, case);
        for w in res.params_mut() {
            *w += rng.gen_range(-0.1..0.1);
        }
        let series: Vec<Series> = (0..3)
            .map(|_| {
                let len = rng.gen_range(3..9);
                Series::new(c_in, (0..len * c_in).map(|_| rng.gen_range(-1.0..1.0)).collect())
            })
            .collect();
        let srefs: Vec<&Series> = series.iter().collect();
        let sys: Vec<usize> = (0..3).map(|_| rng.gen_range(0..classes)).collect();
        let (_, g) = res.loss_and_grad(&srefs, &sys);
        for q in 0..res.params().len() {
            let mut a = res.clone();
            a.params_mut()[q] += h;
            let mut b = res.clone();
            b.params_mut()[q] -= h;
            let fd = (a.loss_and_grad(&srefs, &sys).0 - b.loss_and_grad(&srefs, &sys).0) / (2.0 * h);
            let e = rel_err(g[q], fd);
            ensure!(e < 1e-3, "resnet case {case} param {q}: {} vs {fd}", g[q]);
            worst = worst.max(e);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "took {secs:.1} s");
    Ok(format!("20 mlp + 20 resnet_ts instances, max relative error {worst:.2e}, {secs:.1} s"))
}

// ------------------------------------------------------------------ 8

fn c8_smote() -> Check {
    let mut rng = seed::rng(8008);
    let sizes = [1593usize, 326, 835];
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (c, &n) in sizes.iter().enumerate() {
        for _ in 0..n {
            x.push((0..4).map(|d| c as f64 * (d as f64 + 1.0) + rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
            y.push(c);
        }
    }
    let opts = SmoteOptions::default();
    let (ox, oy) = smote(&x, &y, 3, &opts, 88).map_err(|e| e.to_string())?;
    let counts: Vec<usize> = (0..3).map(|c| oy.iter().filter(|&&l| l == c).count()).collect();
    ensure!(counts == vec![1593; 3], "counts {counts:?}");
    ensure!(ox[..x.len()] == x[..] && oy[..y.len()] == y[..], "original rows changed");
    // k nearest same-class neighbours of every original point
    let members: Vec<Vec<usize>> = (0..3).map(|c| (0..x.len()).filter(|&i| y[i] == c).collect()).collect();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    let mut neighbours: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for m in &members {
        for &i in m {
            let mut others: Vec<usize> = m.iter().copied().filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| dist(&x[i], &x[a]).total_cmp(&dist(&x[i], &x[b])));
            others.truncate(opts.k.min(m.len() - 1));
            neighbours.insert(i, others);
        }
    }
    for (s, (row, &c)) in ox.iter().zip(&oy).enumerate().skip(x.len()) {
        let found = members[c].iter().any(|&i| {
            neighbours[&i].iter().any(|&j| {
                let (a, b) = (&x[i], &x[j]);
                let den: f64 = a.iter().zip(b).map(|(p, q)| (q - p) * (q - p)).sum();
                let lambda = row.iter().zip(a).zip(b).map(|((r, p), q)| (r - p) * (q - p)).sum::<f64>() / den;
                (-1e-9..=1.0 + 1e-9).contains(&lambda)
                    && row.iter().zip(a).zip(b).all(|((r, p), q)| (p + lambda * (q - p) - r).abs() <= 1e-9)
            })
        });
        ensure!(found, "synthetic row {s} of class {c} is not a neighbour interpolation");
    }
    Ok(format!("1593/326/835 -> {counts:?}; {} synthetic rows verified", ox.len() - x.len()))
}

// ------------------------------------------------------------------ 9

fn brute_ks(a: &[f64], b: &[f64]) -> u64 {
    let (na, nb) = (a.len() as u64, b.len() as u64);
    a.iter()
        .chain(b)
        .map(|&t| {
            let fa = a.iter().filter(|&&v| v <= t).count() as u64;
            let fb = b.iter().filter(|&&v| v <= t).count() as u64;
            (fa * nb).abs_diff(fb * na)
        })
        .max()
        .unwrap()
}

/// `(doubled W, p)` by enumerating every sign assignment.
fn brute_wilcoxon(a: &[f64], b: &[f64]) -> (u64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    let n = d.len();
    let rank2: Vec<u64> = d
        .iter()
        .map(|v| {
            let below = d.iter().filter(|w| w.abs() < v.abs()).count() as u64;
            let tied = d.iter().filter(|w| w.abs() == v.abs()).count() as u64;
            2 * below + tied + 1
        })
        .collect();
    let total: u64 = rank2.iter().sum();
    let plus: u64 = rank2.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
    let w2 = plus.min(total - plus);
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let s: u64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| rank2[i]).sum();
        if s.min(total - s) <= w2 {
            hits += 1;
        }
    }
    (w2, hits as f64 / (1u64 << n) as f64)
}

fn c9_statistics() -> Check {
    let mut rng = seed::rng(9009);
    let mut cases = 0;
    for na in 1..=8 {
        for nb in 1..=8 {
            for _ in 0..10 {
                let a: Vec<f64> = (0..na).map(|_| rng.gen_range(0..6) as f64).collect();
                let b: Vec<f64> = (0..nb).map(|_| rng.gen_range(0..6) as f64).collect();
                let r = ks_two_sample(&a, &b).map_err(|e| e.to_string())?;
                let num = brute_ks(&a, &b);
                ensure!(
                    r.d_numerator == num && r.d_denominator == (na * nb) as u64 && r.d == num as f64 / (na * nb) as f64,
                    "ks {a:?} {b:?}: {r:?} vs {num}"
                );
                cases += 1;
            }
        }
    }
    for n in 1..=8 {
        for _ in 0..40 {
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64).collect();
            let r = wilcoxon_signed_rank(&a, &b).map_err(|e| e.to_string())?;
            if r.degenerate {
                continue;
            }
            let (w2, p) = brute_wilcoxon(&a, &b);
            ensure!(
                r.w == w2 as f64 / 2.0 && r.p_value == p && r.exact,
                "wilcoxon {a:?} {b:?}: {r:?} vs W {} p {p}",
                w2 as f64 / 2.0
            );
            cases += 1;
        }
    }
    let ks = ks_two_sample(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5]).map_err(|e| e.to_string())?;
    ensure!(ks.d == 1.0 / 3.0 && (ks.d_numerator, ks.d_denominator) == (3, 9), "D example gave {ks:?}");
    let w = wilcoxon_signed_rank(&[1.0, 0.0, 3.0], &[0.0, 2.0, 0.0]).map_err(|e| e.to_string())?;
    ensure!(w.w == 2.0 && w.p_value == 0.75, "W example gave {w:?}");
    Ok(format!("{cases} enumeration cases exact; D = 1/3; W = 2, p = 0.75"))
}

// ----------------------------------------------------------------- 10

fn c10_persona() -> Check {
    use SignalKind::*;
    let t = Instant::now();
    let set = |s: &[SignalKind]| s.iter().copied().collect::<BTreeSet<_>>();
    let visual_uni = [(set(&[Nod]), 0.83), (set(&[HeadShake]), 0.08), (set(&[MouthSmile]), 0.09)];
    let visual_multi = [(set(&[Nod, MouthSmile]), 0.60), (set(&[HeadShake, MouthSmile]), 0.40)];
    let verbal_multi = [
        (set(&[Nod, Utterance]), 0.80),
        (set(&[MouthSmile, Utterance]), 0.13),
        (set(&[HeadShake, Utterance]), 0.05),
        (set(&[HeadShake, Utterance, MouthSmile]), 0.01),
        (set(&[Nod, Utterance, MouthSmile]), 0.01),
    ];
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (profile, p_multi) in [(PersonaProfile::extrovert(), 0.51), (PersonaProfile::introvert(), 0.35)] {
        let mut rng = seed::rng(10_010 + (p_multi * 100.0) as u64);
        for category in SignalCategory::ALL {
            let mut branch = [0usize; 2];
            let mut tallies: [BTreeMap<BTreeSet<SignalKind>, usize>; 2] = Default::default();
            let mut tokens: BTreeMap<String, usize> = BTreeMap::new();
            let n = 100_000;
            for _ in 0..n {
                let r = sample_response(&profile, category, &mut rng);
                let m = r.multimodal.unwrap_or(true) as usize;
                branch[m] += 1;
                *tallies[m].entry(r.signals.clone()).or_default() += 1;
                if let Some(tok) = r.utterance_token {
                    *tokens.entry(tok).or_default() += 1;
                }
            }
            let mut check = |what: String, got: f64, want: f64| -> Check {
                worst = worst.max((got - want).abs());
                ensure!(
                    (got - want).abs() <= 0.01,
                    "{}/{}: {what} {got:.4} vs {want}",
                    profile.label.as_str(),
                    category.as_str()
                );
                Ok(String::new())
            };
            if category != SignalCategory::Both {
                check("multimodal branch".into(), branch[1] as f64 / n as f64, p_multi)?;
                check("unimodal branch".into(), branch[0] as f64 / n as f64, 1.0 - p_multi)?;
            }
            let tables: Vec<(usize, &[(BTreeSet<SignalKind>, f64)])> = match category {
                SignalCategory::Visual => vec![(0, &visual_uni[..]), (1, &visual_multi[..])],
                SignalCategory::Verbal => vec![(1, &verbal_multi[..])],
                SignalCategory::Both => vec![(1, &verbal_multi[..])],
            };
            for (b, table) in tables {
                for (combo, p) in table {
                    let got = *tallies[b].get(combo).unwrap_or(&0) as f64 / branch[b] as f64;
                    check(format!("{combo:?}"), got, *p)?;
                }
            }
            if category == SignalCategory::Verbal {
                let uni = *tallies[0].get(&set(&[Utterance])).unwrap_or(&0);
                ensure!(uni == branch[0], "verbal unimodal responses must be a bare utterance");
            }
            let n_tok: usize = tokens.values().sum();
            if category == SignalCategory::Visual {
                ensure!(n_tok == 0, "visual responses carry no utterance");
                continue;
            }
            for tok in ["okay", "hmm", "haan"] {
                check(format!("token {tok}"), *tokens.get(tok).unwrap_or(&0) as f64 / n_tok as f64, 1.0 / 3.0)?;
            }
        }
        lines.push(format!("{} ok", profile.label.as_str()));
    }
    let secs = t.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.1} s");
    Ok(format!("{}; max deviation {worst:.4}; {secs:.1} s", lines.join(", ")))
}

// ----------------------------------------------------------------- 11

fn c11_metrics() -> Check {
    let mut rng = seed::rng(11_011);
    for case in 0..1000 {
        let k = rng.gen_range(2..6);
        let n = rng.gen_range(1..80);
        let t: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let pos = if k == 2 { Some(rng.gen_range(0..2)) } else { None };
        let r = compute_metrics(&t, &p, k, pos).map_err(|e| e.to_string())?;
        let mut total_p = 0.0;
        let mut total_r = 0.0;
        let mut total_f = 0.0;
        for c in 0..k {
            let mut row = vec![0u64; k];
            for i in 0..n {
                if t[i] == c {
                    row[p[i]] += 1;
                }
            }
            ensure!(r.confusion[c] == row, "case {case}: confusion row {c}");
            let tp = (0..n).filter(|&i| t[i] == c && p[i] == c).count() as u64;
            let support = (0..n).filter(|&i| t[i] == c).count() as u64;
            let predicted = (0..n).filter(|&i| p[i] == c).count() as u64;
            let prec = if support == 0 || predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
            let rec = if support == 0 { 0.0 } else { tp as f64 / support as f64 };
            let f1 = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
            let m = r.per_class[c];
            ensure!((m.precision, m.recall, m.f1, m.support) == (prec, rec, f1, support), "case {case}: class {c}");
            total_p += support as f64 * prec;
            total_r += support as f64 * rec;
            total_f += support as f64 * f1;
        }
        let w = r.weighted;
        ensure!(
            (w.precision, w.recall, w.f1) == (total_p / n as f64, total_r / n as f64, total_f / n as f64),
            "case {case}: weighted"
        );
        let acc = (0..n).filter(|&i| t[i] == p[i]).count() as f64 / n as f64;
        ensure!(r.accuracy == acc, "case {case}: accuracy");
    }
    let folds = vec![vec![vec![0.8, 0.2], vec![0.1, 0.9]], vec![vec![0.6, 0.4], vec![0.3, 0.7]]];
    let w = worst_case_confusion(&folds).map_err(|e| e.to_string())?;
    let want = [[0.6, 0.4], [0.3, 0.7]];
    for i in 0..2 {
        for j in 0..2 {
            ensure!((w[i][j] - want[i][j]).abs() < 1e-12, "worst case {w:?}");
        }
    }
    let mixed = worst_case_confusion(&[vec![vec![0.9, 0.1], vec![0.5, 0.5]], vec![vec![0.7, 0.3], vec![0.2, 0.8]]])
        .map_err(|e| e.to_string())?;
    // diag min 0.7, off max 0.3 -> [0.7, 0.3]; row 2: off 0.5, diag 0.5 -> [0.5, 0.5]
    ensure!((mixed[0][0] - 0.7).abs() < 1e-12 && (mixed[1][1] - 0.5).abs() < 1e-12, "worst case {mixed:?}");
    Ok("1000 random cases match the tally oracle; worst-case examples hold".into())
}

// ----------------------------------------------------------------- 12

fn run_chain(bin: &Path, dir: &Path, workers: usize) -> Result<(), String> {
    for cmd in ["synth-gen", "merge", "sample-neg", "featurize", "identify", "evaluate"] {
        let out = Command::new(bin)
            .args(["--config", "pipeline.toml", "--workers", &workers.to_string(), cmd])
            .current_dir(dir)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(out.status.success(), "{cmd} with {workers} workers: {}", String::from_utf8_lossy(&out.stderr));
    }
    Ok(())
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c12_determinism() -> Check {
    let bin = Path::new(env!("CARGO_BIN_EXE_backchannel"));
    let config = "seed = 12\n[synth]\nn_conversations = 6\nduration_s = 150.0\n[classifiers.random_forest]\nn_trees = 25\n[classifiers.adaboost]\nrounds = 40\n";
    let mut snaps = Vec::new();
    for workers in [1usize, 8, 1] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        std::fs::write(dir.path().join("pipeline.toml"), config).map_err(|e| e.to_string())?;
        run_chain(bin, dir.path(), workers)?;
        let mut s = snapshot(&dir.path().join("out"));
        s.extend(snapshot(&dir.path().join("corpus")).into_iter().map(|(k, v)| (format!("corpus/{k}"), v)));
        snaps.push(s);
    }
    ensure!(snaps[0].contains_key("evaluation.txt"), "no evaluation report");
    for (i, s) in snaps.iter().enumerate().skip(1) {
        ensure!(s.keys().eq(snaps[0].keys()), "run {i}: different file sets");
        for (k, v) in s {
            ensure!(*v == snaps[0][k], "run {i}: {k} differs");
        }
    }
    Ok(format!("{} files byte-identical across 1, 8 and 1 workers", snaps[0].len()))
}

// ---------------------------------------------------------------------

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("consensus oracle", c1_consensus_oracle),
        ("fleiss kappa", c2_fleiss),
        ("negative sampler", c3_negative_sampler),
        ("self-train degenerate equivalence", c4_degenerate_equivalence),
        ("synthetic elbow", c5_elbow),
        ("paradigm ratio", c6_paradigm_ratio),
        ("gradient checks", c7_gradients),
        ("smote", c8_smote),
        ("statistics oracles", c9_statistics),
        ("persona sampler", c10_persona),
        ("metrics", c11_metrics),
        ("determinism", c12_determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    panic::set_hook(Box::new(|_| {}));
    println!();
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let t = Instant::now();
        let r = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(msg) => println!("PASS {:>2} {name} [{secs:.1} s]: {msg}", i + 1),
            Err(msg) => {
                println!("FAIL {:>2} {name} [{secs:.1} s]: {msg}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    let _ = panic::take_hook();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
