//! Pipeline stages. Each reads its inputs from the corpus or output
//! directory and writes headed artifacts back to the output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use backchannel_core::annotations::{
    build_agreement_table, cluster_agreement_table, cluster_annotations, consensus, fleiss_kappa, AgreementTable,
    CoderAnnotation, ConsensusInstance, Kappa, SignalKind, TimeInterval,
};
use backchannel_core::corpus::{self, Corpus, Task};
use backchannel_core::evaluation::{
    elbow_select, wilcoxon_signed_rank, GroupAssignment, MetricsReport, Paradigm, ParadigmConfig, ParadigmData,
    ParadigmReport, SweepPlan,
};
use backchannel_core::features::{FeatureSchema, FeatureStream, Scaler};
use backchannel_core::learners::{self, describe, smote, Inputs, SmoteOptions};
use backchannel_core::persona::{
    extraversion_ks, sample_response, tau_per_subject, Combo, Extraversion, PersonaProfile, SignalCategory,
};
use backchannel_core::sampling::{NegativeInstance, VoiceActivity};
use backchannel_core::seed;
use backchannel_core::selftrain::SelfTrainConfig;
use backchannel_core::synth::{generate_conversation, SynthConfig, SynthCorpus};

use crate::artifact::{self, Header};
use crate::config::{parse_task, PipelineConfig};
use crate::error::{CliError, Result};
use crate::formats::{self, IndexRow, LedgerRow, LogRow, RatingRow, ResponseRow, SubjectRow, TruthRow};

const TAG_IDENTIFY_MODEL: u64 = 11;
const TAG_IDENTIFY_SPLIT: u64 = 12;
const TAG_SWEEP_MODEL: u64 = 13;
const TAG_PREDICT_MODEL: u64 = 14;
const TAG_SMOTE: u64 = 15;
const TAG_PERSONA: u64 = 16;

pub const MODEL_FORMAT: &str = "backchannel-model";
pub const MODEL_VERSION: u32 = 1;

/// Shared state of one invocation.
pub struct Ctx {
    pub cfg: PipelineConfig,
    pub hash: String,
    pub force: bool,
    pub pool: rayon::ThreadPool,
}

impl Ctx {
    pub fn new(cfg: PipelineConfig, workers: usize, force: bool) -> Result<Self> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Internal(e.to_string()))?;
        Ok(Self { hash: cfg.hash(), cfg, force, pool })
    }

    fn corpus_path(&self, name: &str) -> PathBuf {
        self.cfg.paths.corpus.join(name)
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.cfg.paths.out.join(name)
    }

    fn header(&self, kind: &str) -> Header {
        Header::new(kind, &self.hash, self.cfg.seed)
    }

    fn write(&self, path: &Path, kind: &str, body: &str) -> Result<()> {
        artifact::write(path, &self.header(kind), body)
    }

    fn write_json(&self, path: &Path, kind: &str, v: &Value) -> Result<()> {
        let mut body = serde_json::to_string_pretty(v)?;
        body.push('\n');
        self.write(path, kind, &body)
    }

    fn task_seed(&self, tag: u64, task: Task) -> u64 {
        seed::derive(self.cfg.seed, &[tag, task as u64])
    }
}

fn kappa_json(k: Kappa) -> Value {
    k.value().map_or(Value::Null, Value::from)
}

fn fmt_kappa(k: Kappa) -> String {
    k.value().map_or("undefined".into(), |v| format!("{v:.4}"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("undefined".into(), |v| format!("{v:.4}"))
}

// ---------------------------------------------------------------- synth-gen

pub fn synth_gen(ctx: &Ctx) -> Result<String> {
    let sc: SynthConfig = ctx.cfg.synth_config();
    sc.validate()?;
    let conversations = ctx.pool.install(|| {
        (0..sc.n_conversations)
            .into_par_iter()
            .map(|i| generate_conversation(&sc, i))
            .collect::<std::result::Result<Vec<_>, _>>()
    })?;
    let synth = SynthCorpus { conversations };
    let schema = FeatureSchema::standard();

    ctx.write(&ctx.corpus_path("annotations.csv"), "annotations", &formats::write_annotations(&synth.annotations())?)?;
    let vad: Vec<VoiceActivity> = synth.vad().cloned().collect();
    ctx.write(&ctx.corpus_path("vad.csv"), "vad", &formats::write_vad(&vad)?)?;
    let subjects =
        synth.subjects().map(|s| SubjectRow { subject_id: s.subject_id.clone(), extraversion: s.extraversion });
    ctx.write(&ctx.corpus_path("subjects.csv"), "subjects", &formats::write_rows(subjects)?)?;
    let truth = synth.events().map(|e| TruthRow {
        conversation_id: e.conversation_id.clone(),
        subject_id: e.subject_id.clone(),
        onset_s: e.interval.onset(),
        offset_s: e.interval.offset(),
        category: e.category.as_str().into(),
        signals: formats::join_signals(&e.signals),
    });
    let truth = formats::write_rows(truth)?;
    ctx.write(
        &ctx.corpus_path("truth.csv"),
        "truth",
        if truth.is_empty() { "conversation_id,subject_id,onset_s,offset_s,category,signals\n" } else { &truth },
    )?;

    let streams: Vec<&FeatureStream> = synth.streams().collect();
    let index: Vec<IndexRow> = streams
        .iter()
        .map(|s| IndexRow {
            conversation_id: s.conversation_id.clone(),
            subject_id: s.subject_id.clone(),
            file: format!("{}_{}.csv", s.conversation_id, s.subject_id),
        })
        .collect();
    let dir = ctx.corpus_path("features");
    ctx.pool.install(|| {
        streams
            .par_iter()
            .zip(&index)
            .try_for_each(|(s, row)| ctx.write(&dir.join(&row.file), "features", &formats::write_features(s, &schema)))
    })?;
    ctx.write(&dir.join("index.csv"), "feature_index", &formats::write_rows(&index)?)?;
    let n_ann = synth.conversations.iter().map(|c| c.annotations.len()).sum::<usize>();
    let n_events = synth.events().count();
    Ok(format!(
        "synth-gen: {} conversations, {} true events, {} coder annotations -> {}",
        synth.conversations.len(),
        n_events,
        n_ann,
        ctx.cfg.paths.corpus.display()
    ))
}

// -------------------------------------------------------------------- merge

pub struct MergeSummary {
    pub consensus: Vec<ConsensusInstance>,
    pub clusters: usize,
    pub dropped_low_support: usize,
    pub dropped_empty_signals: usize,
    pub grid_kappa: Kappa,
    pub signal_kappa: Vec<(SignalKind, Kappa)>,
    pub cluster_kappa: Kappa,
}

fn pooled(tables: Vec<AgreementTable>) -> Result<Kappa> {
    let rows: Vec<Vec<u64>> = tables.iter().flat_map(|t| t.rows().to_vec()).collect();
    if rows.is_empty() {
        return Ok(Kappa::Undefined);
    }
    Ok(fleiss_kappa(&AgreementTable::new(rows)?))
}

/// Clusters and merges per listener, with agreement on a time grid (span
/// `[0, last offset]` of each conversation) and over clusters.
pub fn merge_annotations(anns: &[CoderAnnotation], grid_s: f64) -> Result<MergeSummary> {
    let coders: Vec<String> = anns.iter().map(|a| a.coder_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    if coders.len() < 2 {
        return Err(CliError::data(format!("agreement needs at least two coders, found {}", coders.len())));
    }
    let mut groups: BTreeMap<(&str, &str), Vec<CoderAnnotation>> = BTreeMap::new();
    let mut ends: BTreeMap<&str, f64> = BTreeMap::new();
    for a in anns {
        groups.entry((&a.conversation_id, &a.subject_id)).or_default().push(a.clone());
        let e = ends.entry(&a.conversation_id).or_insert(0.0);
        *e = e.max(a.interval.offset());
    }
    let mut out = Vec::new();
    let (mut low, mut empty, mut n_clusters) = (0, 0, 0);
    let mut all_clusters = Vec::new();
    let mut grid: Vec<AgreementTable> = Vec::new();
    let mut per_signal: Vec<Vec<AgreementTable>> = vec![Vec::new(); SignalKind::ALL.len()];
    for ((conv, _), group) in &groups {
        let clusters = cluster_annotations(group)?;
        let merged = consensus(&clusters);
        out.extend(merged.instances);
        low += merged.dropped_low_support;
        empty += merged.dropped_empty_signals;
        n_clusters += clusters.len();
        all_clusters.extend(clusters);
        let span = TimeInterval::new(0.0, ends[conv])?;
        grid.push(build_agreement_table(group, &coders, span, grid_s, None)?);
        for (i, s) in SignalKind::ALL.iter().enumerate() {
            per_signal[i].push(build_agreement_table(group, &coders, span, grid_s, Some(*s))?);
        }
    }
    let signal_kappa =
        SignalKind::ALL.iter().zip(per_signal).map(|(s, t)| pooled(t).map(|k| (*s, k))).collect::<Result<Vec<_>>>()?;
    let cluster_kappa = if all_clusters.is_empty() {
        Kappa::Undefined
    } else {
        fleiss_kappa(&cluster_agreement_table(&all_clusters, &coders)?)
    };
    Ok(MergeSummary {
        consensus: out,
        clusters: n_clusters,
        dropped_low_support: low,
        dropped_empty_signals: empty,
        grid_kappa: pooled(grid)?,
        signal_kappa,
        cluster_kappa,
    })
}

pub fn merge(ctx: &Ctx) -> Result<String> {
    let anns = formats::read_annotations(&artifact::read(&ctx.corpus_path("annotations.csv"))?.body)?;
    let m = merge_annotations(&anns, ctx.cfg.merge.kappa_grid_s)?;
    ctx.write(&ctx.out_path("consensus.csv"), "consensus", &formats::write_consensus(&m.consensus)?)?;
    let signals: serde_json::Map<String, Value> =
        m.signal_kappa.iter().map(|(s, k)| (s.as_str().to_string(), kappa_json(*k))).collect();
    let j = json!({
        "annotations": anns.len(),
        "clusters": m.clusters,
        "consensus_instances": m.consensus.len(),
        "dropped_low_support": m.dropped_low_support,
        "dropped_empty_signals": m.dropped_empty_signals,
        "grid_step_s": ctx.cfg.merge.kappa_grid_s,
        "kappa_grid": kappa_json(m.grid_kappa),
        "kappa_grid_per_signal": signals,
        "kappa_clusters": kappa_json(m.cluster_kappa),
    });
    ctx.write_json(&ctx.out_path("kappa.json"), "kappa", &j)?;
    let mut t = String::new();
    writeln!(t, "annotations {}", anns.len()).ok();
    writeln!(t, "clusters {}", m.clusters).ok();
    writeln!(t, "consensus_instances {}", m.consensus.len()).ok();
    writeln!(t, "dropped_low_support {}", m.dropped_low_support).ok();
    writeln!(t, "dropped_empty_signals {}", m.dropped_empty_signals).ok();
    writeln!(t, "kappa_grid {}", fmt_kappa(m.grid_kappa)).ok();
    for (s, k) in &m.signal_kappa {
        writeln!(t, "kappa_grid_{} {}", s.as_str(), fmt_kappa(*k)).ok();
    }
    writeln!(t, "kappa_clusters {}", fmt_kappa(m.cluster_kappa)).ok();
    ctx.write(&ctx.out_path("kappa.txt"), "kappa", &t)?;
    Ok(format!(
        "merge: {} annotations -> {} consensus instances, kappa grid {} clusters {}",
        anns.len(),
        m.consensus.len(),
        fmt_kappa(m.grid_kappa),
        fmt_kappa(m.cluster_kappa)
    ))
}

// --------------------------------------------------------------- corpus io

fn load_streams(ctx: &Ctx, schema: &FeatureSchema) -> Result<Vec<FeatureStream>> {
    let dir = ctx.corpus_path("features");
    let index: Vec<IndexRow> = formats::read_rows(&artifact::read(&dir.join("index.csv"))?.body, "feature index")?;
    let rate = ctx.cfg.features.frame_rate_hz;
    ctx.pool.install(|| {
        index
            .par_iter()
            .map(|r| {
                let path = dir.join(&r.file);
                let body = artifact::read(&path)?.body;
                formats::read_features(
                    &body,
                    &r.conversation_id,
                    &r.subject_id,
                    schema,
                    rate,
                    &path.display().to_string(),
                )
            })
            .collect()
    })
}

fn load_vad(ctx: &Ctx, streams: &[FeatureStream]) -> Result<Vec<VoiceActivity>> {
    let keys: Vec<(String, String)> =
        streams.iter().map(|s| (s.conversation_id.clone(), s.subject_id.clone())).collect();
    formats::read_vad(&artifact::read(&ctx.corpus_path("vad.csv"))?.body, &keys)
}

fn load_consensus(ctx: &Ctx) -> Result<Vec<ConsensusInstance>> {
    formats::read_consensus(&artifact::read(&ctx.out_path("consensus.csv"))?.body)
}

// --------------------------------------------------------------- sample-neg

pub fn sample_neg(ctx: &Ctx) -> Result<String> {
    let schema = FeatureSchema::standard();
    let streams = load_streams(ctx, &schema)?;
    let vad = load_vad(ctx, &streams)?;
    let positives = load_consensus(ctx)?;
    let negatives = corpus::sample_corpus_negatives(&streams, &vad, &positives, &ctx.cfg.corpus_options())?;
    ctx.write(&ctx.out_path("negatives.csv"), "negatives", &formats::write_negatives(&negatives)?)?;
    Ok(format!("sample-neg: {} negatives for {} positives", negatives.len(), positives.len()))
}

// ---------------------------------------------------------------- featurize

pub fn featurize(ctx: &Ctx) -> Result<String> {
    let schema = FeatureSchema::standard();
    let streams = load_streams(ctx, &schema)?;
    let positives = load_consensus(ctx)?;
    let negatives: Vec<NegativeInstance> =
        formats::read_negatives(&artifact::read(&ctx.out_path("negatives.csv"))?.body)?;
    let c = corpus::build_instances(&streams, &positives, &negatives, &schema, &ctx.cfg.corpus_options())?;
    let mut body = serde_json::to_string(&c)?;
    body.push('\n');
    ctx.write(&ctx.out_path("instances.json"), "instances", &body)?;
    let header = "id,conversation_id,subject_id,speaker_id,onset_s,offset_s,opportunity,category,signals,has_context\n";
    let mut csv = String::from(header);
    for i in &c.instances {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            i.id,
            i.conversation_id,
            i.subject_id,
            i.speaker_id,
            i.interval.onset(),
            i.interval.offset(),
            i.opportunity as u8,
            i.category.map_or("", |k| k.as_str()),
            formats::join_signals(&i.signals),
            i.context.is_some() as u8
        )
        .ok();
    }
    ctx.write(&ctx.out_path("instances.csv"), "instances_summary", &csv)?;
    let with_context = c.instances.iter().filter(|i| i.context.is_some()).count();
    Ok(format!(
        "featurize: {} instances ({} with speaker context), {} aggregate features",
        c.instances.len(),
        with_context,
        c.occupancy.len()
    ))
}

struct LoadedCorpus {
    corpus: Corpus,
    header: Option<Header>,
    path: PathBuf,
}

fn load_corpus(ctx: &Ctx) -> Result<LoadedCorpus> {
    let path = ctx.out_path("instances.json");
    let a = artifact::read(&path)?;
    let corpus: Corpus = serde_json::from_str(&a.body).map_err(|e| CliError::io(&path, e))?;
    Ok(LoadedCorpus { corpus, header: a.header, path })
}

fn model_json(task: Task, c: &Corpus, scaler: &Scaler, model: &learners::FittedModel, extra: Value) -> Value {
    json!({
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "task": task.as_str(),
        "feature_set": c.set.as_str(),
        "classifier": describe(&model.spec),
        "details": extra,
        "scaler": scaler,
        "model": model,
    })
}

// ----------------------------------------------------------------- identify

pub fn identify(ctx: &Ctx, tasks: &[Task]) -> Result<String> {
    let lc = load_corpus(ctx)?;
    let c = &lc.corpus;
    let mut lines = Vec::new();
    for &task in tasks {
        if task.is_prediction() {
            return Err(CliError::config(format!("identify runs identification tasks, not `{}`", task.as_str())));
        }
        let view = c.task(task);
        let st = &ctx.cfg.selftrain;
        let spec = ctx.cfg.spec(&st.classifier, ctx.task_seed(TAG_IDENTIFY_MODEL, task))?;
        let cfg = SelfTrainConfig {
            base: spec,
            threshold: st.threshold,
            max_iterations: st.max_iterations,
            seed_fraction: st.x,
        };
        let id = ctx.pool.install(|| corpus::identify(&view.data, &cfg, ctx.task_seed(TAG_IDENTIFY_SPLIT, task)))?;
        let ledger = &id.outcome.ledger;
        let rows = ledger.entries().iter().map(|e| LedgerRow {
            instance_id: c.instances[view.instances[e.row]].id.clone(),
            label: formats::class_name(task, e.label).into(),
            provenance: e.provenance.to_string(),
            confidence: e.confidence,
        });
        ctx.write(&ctx.out_path(&format!("ledger_{}.csv", task.as_str())), "ledger", &formats::write_rows(rows)?)?;
        let (n_seed, n_pseudo, n_fallback) = ledger.counts();
        let unl = &id.split.unlabeled;
        let agree = unl.iter().filter(|&&r| ledger.get(r).is_some_and(|e| e.label == view.data.labels[r])).count();
        let agreement = (!unl.is_empty()).then(|| agree as f64 / unl.len() as f64);
        let details = json!({
            "seed_fraction": st.x,
            "rows": view.data.len(),
            "seed_rows": n_seed,
            "pseudo_rows": n_pseudo,
            "fallback_rows": n_fallback,
            "rounds": id.outcome.rounds,
            "ledger_agreement": agreement,
        });
        let m = model_json(task, c, &id.scaler, &id.outcome.model, details.clone());
        ctx.write_json(&ctx.out_path(&format!("model_{}.json", task.as_str())), "model", &m)?;
        let mut t = String::new();
        writeln!(t, "task {}", task.as_str()).ok();
        writeln!(t, "classifier {}", describe(&cfg.base)).ok();
        writeln!(t, "seed_fraction {}", st.x).ok();
        writeln!(t, "rows {}", view.data.len()).ok();
        writeln!(t, "seed_rows {n_seed}").ok();
        writeln!(t, "pseudo_rows {n_pseudo}").ok();
        writeln!(t, "fallback_rows {n_fallback}").ok();
        writeln!(t, "rounds {}", id.outcome.rounds).ok();
        writeln!(t, "ledger_agreement {}", fmt_opt(agreement)).ok();
        ctx.write(&ctx.out_path(&format!("identify_{}.txt", task.as_str())), "identify_report", &t)?;
        lines.push(format!(
            "identify {}: {} rows, {} seed, {} pseudo, {} fallback, ledger agreement {}",
            task.as_str(),
            view.data.len(),
            n_seed,
            n_pseudo,
            n_fallback,
            fmt_opt(agreement)
        ));
    }
    Ok(lines.join("\n"))
}

// -------------------------------------------------------------------- sweep

pub fn sweep(ctx: &Ctx) -> Result<String> {
    let sw = &ctx.cfg.sweep;
    let task = parse_task(&sw.task)?;
    let lc = load_corpus(ctx)?;
    let view = lc.corpus.task(task);
    let specs = sw
        .classifiers
        .iter()
        .enumerate()
        .map(|(i, name)| ctx.cfg.spec(name, seed::derive(ctx.cfg.seed, &[TAG_SWEEP_MODEL, i as u64])))
        .collect::<Result<Vec<_>>>()?;
    let plan = SweepPlan {
        specs,
        grid: sw.grid.clone(),
        simulations: sw.simulations,
        folds: sw.folds,
        threshold: ctx.cfg.selftrain.threshold,
        max_iterations: ctx.cfg.selftrain.max_iterations,
        master_seed: ctx.cfg.seed,
    };
    plan.validate()?;
    view.data.validate()?;
    let keys = plan.keys();
    let outcomes = ctx
        .pool
        .install(|| keys.par_iter().map(|&k| plan.run(&view.data, k)).collect::<std::result::Result<Vec<_>, _>>())?;
    let result = plan.assemble(outcomes);

    let mut csv = String::from(
        "classifier,x,runs,mean_acc,std_acc,mean_precision_w,mean_recall_w,mean_f1_w,mean_ledger_agreement,mean_fallback_fraction\n",
    );
    for c in &result.cells {
        writeln!(
            csv,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6}",
            sw.classifiers[c.spec],
            c.x,
            c.runs,
            c.mean_accuracy,
            c.std_accuracy,
            c.mean_precision_w,
            c.mean_recall_w,
            c.mean_f1_w,
            c.mean_ledger_agreement.map_or(String::new(), |v| format!("{v:.6}")),
            c.mean_fallback_fraction
        )
        .ok();
    }
    ctx.write(&ctx.out_path(&format!("sweep_{}.csv", task.as_str())), "sweep", &csv)?;

    let best = result.best_spec();
    let mut t = String::new();
    let mut per = Vec::new();
    writeln!(t, "task {}", task.as_str()).ok();
    writeln!(t, "simulations {} folds {}", sw.simulations, sw.folds).ok();
    for (i, name) in sw.classifiers.iter().enumerate() {
        let curve = result.curve(i);
        let elbow = elbow_select(&curve, sw.elbow_tol);
        writeln!(t, "elbow {} {}", name, elbow.map_or("none".into(), |x| x.to_string())).ok();
        per.push(json!({
            "classifier": name,
            "spec": describe(&plan.specs[i]),
            "curve": curve.iter().map(|(x, a)| json!({"x": x, "mean_accuracy": a})).collect::<Vec<_>>(),
            "elbow": elbow,
        }));
    }
    let best_name = best.map(|b| sw.classifiers[b].clone());
    writeln!(t, "best {}", best_name.as_deref().unwrap_or("none")).ok();
    ctx.write(&ctx.out_path(&format!("sweep_{}.txt", task.as_str())), "sweep_report", &t)?;
    let j = json!({ "task": task.as_str(), "elbow_tol": sw.elbow_tol, "classifiers": per, "best": best_name });
    ctx.write_json(&ctx.out_path(&format!("sweep_{}.json", task.as_str())), "sweep_report", &j)?;
    Ok(format!(
        "sweep {}: {} runs over {} cells, best {}",
        task.as_str(),
        keys.len(),
        result.cells.len(),
        best_name.as_deref().unwrap_or("none")
    ))
}

// ------------------------------------------------------------ predict-train

struct PseudoLabels {
    labels: Vec<usize>,
    header: Option<Header>,
    path: PathBuf,
}

/// Ledger labels of the prediction rows, looked up by instance id in the
/// ledger of the matching identification task.
fn pseudo_labels(ctx: &Ctx, c: &Corpus, task: Task, instances: &[usize]) -> Result<PseudoLabels> {
    let ident = task.identification();
    let path = ctx.out_path(&format!("ledger_{}.csv", ident.as_str()));
    let a = artifact::read(&path)?;
    let rows: Vec<LedgerRow> = formats::read_rows(&a.body, &path.display().to_string())?;
    let mut m: BTreeMap<String, usize> = BTreeMap::new();
    for r in rows {
        let l = formats::parse_class(ident, &r.label)
            .ok_or_else(|| CliError::data(format!("{}: unknown label `{}`", path.display(), r.label)))?;
        m.insert(r.instance_id, l);
    }
    let labels = instances
        .iter()
        .map(|&i| {
            let id = &c.instances[i].id;
            m.get(id).copied().ok_or_else(|| CliError::data(format!("{}: no entry for instance {id}", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PseudoLabels { labels, header: a.header, path })
}

fn smote_for(ctx: &Ctx, task: Task, requested: Option<bool>) -> Option<SmoteOptions> {
    let p = &ctx.cfg.predict;
    let on = requested.unwrap_or(if task.is_signal() { p.smote_signal } else { p.smote_opportunity });
    on.then_some(SmoteOptions { k: p.smote_k, duplicate_singletons: p.smote_duplicate_singletons })
}

pub fn predict_train(ctx: &Ctx, task: Task, paradigm: Paradigm, use_smote: Option<bool>) -> Result<String> {
    if !task.is_prediction() {
        return Err(CliError::config(format!("predict-train needs a prediction task, got `{}`", task.as_str())));
    }
    let lc = load_corpus(ctx)?;
    let c = &lc.corpus;
    let view = c.task(task);
    let labels = match paradigm {
        Paradigm::Human => view.data.labels.clone(),
        Paradigm::Pseudo => {
            let p = pseudo_labels(ctx, c, task, &view.instances)?;
            artifact::check_consistent(&[(&lc.path, &lc.header), (&p.path, &p.header)], ctx.force)?;
            p.labels
        }
    };
    view.data.validate()?;
    let scaler = Scaler::fit(&view.data.vectors, &view.data.occupancy);
    let mut x: Vec<Vec<f64>> = view.data.vectors.iter().map(|v| scaler.apply(v)).collect();
    let mut y = labels.clone();
    let opts = smote_for(ctx, task, use_smote);
    if let Some(o) = &opts {
        (x, y) = smote(&x, &y, view.data.n_classes, o, ctx.task_seed(TAG_SMOTE, task))?;
    }
    let spec = ctx.cfg.spec(&ctx.cfg.predict.classifier, ctx.task_seed(TAG_PREDICT_MODEL, task))?;
    if spec.kind().uses_series() {
        return Err(CliError::config("prediction models take aggregate vectors; choose a vector classifier"));
    }
    let rows: Vec<usize> = (0..x.len()).collect();
    let model =
        ctx.pool.install(|| learners::fit_supervised(&spec, Inputs::Vectors(&x), &rows, &y, view.data.n_classes))?;
    let details =
        json!({ "paradigm": paradigm.as_str(), "rows": view.data.len(), "training_rows": x.len(), "smote": opts });
    let name = format!("model_{}_{}.json", task.as_str(), paradigm.as_str());
    ctx.write_json(&ctx.out_path(&name), "model", &model_json(task, c, &scaler, &model, details))?;
    let rows = view.instances.iter().zip(&labels).map(|(&i, &l)| LedgerRow {
        instance_id: c.instances[i].id.clone(),
        label: formats::class_name(task, l).into(),
        provenance: paradigm.as_str().into(),
        confidence: 1.0,
    });
    ctx.write(
        &ctx.out_path(&format!("labels_{}_{}.csv", task.as_str(), paradigm.as_str())),
        "training_labels",
        &formats::write_rows(rows)?,
    )?;
    Ok(format!(
        "predict-train {} ({}): {} rows, {} after oversampling, {}",
        task.as_str(),
        paradigm.as_str(),
        view.data.len(),
        x.len(),
        describe(&spec)
    ))
}

// ----------------------------------------------------------------- evaluate

fn metrics_json(m: &MetricsReport, task: Task) -> Value {
    let per_class: serde_json::Map<String, Value> = m
        .per_class
        .iter()
        .enumerate()
        .map(|(c, k)| (formats::class_name(task, c).to_string(), serde_json::to_value(k).expect("serializable")))
        .collect();
    json!({
        "accuracy": m.accuracy,
        "weighted": m.weighted,
        "per_class": per_class,
        "confusion": m.confusion,
        "absent_classes": m.absent_classes,
    })
}

fn write_matrix(t: &mut String, name: &str, task: Task, rows: &[Vec<String>]) {
    writeln!(t, "{name}").ok();
    for (c, r) in rows.iter().enumerate() {
        writeln!(t, "  {:<15} {}", formats::class_name(task, c), r.join(" ")).ok();
    }
}

fn write_metrics(t: &mut String, prefix: &str, m: &MetricsReport, task: Task) {
    writeln!(t, "{prefix}.accuracy {:.4}", m.accuracy).ok();
    writeln!(t, "{prefix}.precision_w {:.4}", m.weighted.precision).ok();
    writeln!(t, "{prefix}.recall_w {:.4}", m.weighted.recall).ok();
    writeln!(t, "{prefix}.f1_w {:.4}", m.weighted.f1).ok();
    for (c, k) in m.per_class.iter().enumerate() {
        writeln!(
            t,
            "{prefix}.{}.precision {:.4} recall {:.4} f1 {:.4} support {}",
            formats::class_name(task, c),
            k.precision,
            k.recall,
            k.f1,
            k.support
        )
        .ok();
    }
    let counts: Vec<Vec<String>> = m.confusion.iter().map(|r| r.iter().map(|v| format!("{v:>6}")).collect()).collect();
    write_matrix(t, &format!("{prefix}.confusion"), task, &counts);
}

pub struct TaskEvaluation {
    pub task: Task,
    pub rows: usize,
    pub pseudo_agreement: f64,
    pub report: ParadigmReport,
}

pub fn evaluate_task(ctx: &Ctx, c: &Corpus, task: Task, pseudo: &[usize]) -> Result<TaskEvaluation> {
    let view = c.task(task);
    view.data.validate()?;
    let subjects = c.subjects_of(&view);
    let assignment = GroupAssignment::balanced(&c.subject_counts(), ctx.cfg.predict.groups)?;
    let spec = ctx.cfg.spec(&ctx.cfg.predict.classifier, ctx.task_seed(TAG_PREDICT_MODEL, task))?;
    if spec.kind().uses_series() {
        return Err(CliError::config("prediction models take aggregate vectors; choose a vector classifier"));
    }
    let pcfg =
        ParadigmConfig { spec, smote: smote_for(ctx, task, None), assignment, seed: ctx.task_seed(TAG_SMOTE, task) };
    let data = ParadigmData {
        vectors: &view.data.vectors,
        true_labels: &view.data.labels,
        pseudo_labels: pseudo,
        subjects: &subjects,
        n_classes: view.data.n_classes,
        occupancy: &view.data.occupancy,
        positive_class: view.data.positive_class,
    };
    let folds = pcfg.folds(&data)?;
    let jobs: Vec<(Paradigm, usize)> = [Paradigm::Human, Paradigm::Pseudo]
        .into_iter()
        .flat_map(|p| (0..folds.len()).filter(|&f| !folds[f].is_empty()).map(move |f| (p, f)))
        .collect();
    let results = ctx.pool.install(|| {
        jobs.par_iter().map(|&(p, f)| pcfg.run_fold(&data, &folds, f, p)).collect::<std::result::Result<Vec<_>, _>>()
    })?;
    let report = pcfg.combine(&data, results)?;
    let agree = pseudo.iter().zip(&view.data.labels).filter(|(a, b)| a == b).count();
    Ok(TaskEvaluation {
        task,
        rows: view.data.len(),
        pseudo_agreement: if pseudo.is_empty() { 0.0 } else { agree as f64 / pseudo.len() as f64 },
        report,
    })
}

pub fn evaluate(ctx: &Ctx) -> Result<String> {
    let lc = load_corpus(ctx)?;
    let c = &lc.corpus;
    let tasks = [Task::PredictOpportunity, Task::PredictSignal];
    let mut pseudo = Vec::new();
    let mut inputs: Vec<(PathBuf, Option<Header>)> = vec![(lc.path.clone(), lc.header.clone())];
    for &task in &tasks {
        let view = c.task(task);
        let p = pseudo_labels(ctx, c, task, &view.instances)?;
        inputs.push((p.path, p.header));
        pseudo.push(p.labels);
    }
    let refs: Vec<(&Path, &Option<Header>)> = inputs.iter().map(|(p, h)| (p.as_path(), h)).collect();
    artifact::check_consistent(&refs, ctx.force)?;

    let mut t = String::new();
    let mut j = serde_json::Map::new();
    let mut lines = Vec::new();
    writeln!(t, "classifier {}", describe(&ctx.cfg.spec(&ctx.cfg.predict.classifier, 0)?)).ok();
    writeln!(t, "groups {}", ctx.cfg.predict.groups).ok();
    for (task, p) in tasks.iter().zip(&pseudo) {
        let e = evaluate_task(ctx, c, *task, p)?;
        let r = &e.report;
        let name = task.as_str();
        writeln!(t).ok();
        writeln!(t, "[{name}]").ok();
        writeln!(t, "rows {}", e.rows).ok();
        writeln!(t, "smote {}", smote_for(ctx, *task, None).is_some()).ok();
        writeln!(t, "pseudo_label_agreement {:.4}", e.pseudo_agreement).ok();
        write_metrics(&mut t, "human", &r.human, *task);
        write_metrics(&mut t, "pseudo", &r.pseudo, *task);
        for (label, w) in [("human.worst_case", &r.human_worst_case), ("pseudo.worst_case", &r.pseudo_worst_case)] {
            let rows: Vec<Vec<String>> = w.iter().map(|row| row.iter().map(|v| format!("{v:.4}")).collect()).collect();
            write_matrix(&mut t, label, *task, &rows);
        }
        let q = &r.ratios;
        writeln!(t, "ratio.accuracy {}", fmt_opt(q.accuracy)).ok();
        writeln!(t, "ratio.precision_w {}", fmt_opt(q.precision_w)).ok();
        writeln!(t, "ratio.recall_w {}", fmt_opt(q.recall_w)).ok();
        writeln!(t, "ratio.f1_w {}", fmt_opt(q.f1_w)).ok();
        writeln!(t, "ratio.positive_f1 {}", fmt_opt(q.positive_f1)).ok();
        j.insert(
            name.into(),
            json!({
                "rows": e.rows,
                "smote": smote_for(ctx, *task, None).is_some(),
                "pseudo_label_agreement": e.pseudo_agreement,
                "human": metrics_json(&r.human, *task),
                "pseudo": metrics_json(&r.pseudo, *task),
                "human_worst_case": r.human_worst_case,
                "pseudo_worst_case": r.pseudo_worst_case,
                "ratios": {
                    "accuracy": q.accuracy,
                    "precision_w": q.precision_w,
                    "recall_w": q.recall_w,
                    "f1_w": q.f1_w,
                    "positive_f1": q.positive_f1,
                },
            }),
        );
        lines.push(format!(
            "evaluate {name}: human f1_w {:.4}, pseudo f1_w {:.4}, ratio {}",
            r.human.weighted.f1,
            r.pseudo.weighted.f1,
            fmt_opt(q.f1_w)
        ));
    }
    ctx.write(&ctx.out_path("evaluation.txt"), "evaluation", &t)?;
    ctx.write_json(&ctx.out_path("evaluation.json"), "evaluation", &Value::Object(j))?;
    Ok(lines.join("\n"))
}

// -------------------------------------------------------------------- stats

fn read_ratings(path: &Path) -> Result<BTreeMap<String, f64>> {
    let rows: Vec<RatingRow> = formats::read_rows(&artifact::read(path)?.body, &path.display().to_string())?;
    let mut m = BTreeMap::new();
    for r in rows {
        if m.insert(r.item.clone(), r.rating).is_some() {
            return Err(CliError::data(format!("{}: duplicate item `{}`", path.display(), r.item)));
        }
    }
    Ok(m)
}

pub fn stats(ctx: &Ctx, ratings: Option<(PathBuf, PathBuf)>) -> Result<String> {
    let positives = load_consensus(ctx)?;
    let subjects: Vec<SubjectRow> =
        formats::read_rows(&artifact::read(&ctx.corpus_path("subjects.csv"))?.body, "subjects")?;
    let scores: BTreeMap<String, f64> = subjects.into_iter().map(|s| (s.subject_id, s.extraversion)).collect();
    let taus = tau_per_subject(&positives);
    let test = extraversion_ks(&taus, &scores, ctx.cfg.split_rule())?;
    let mut t = String::new();
    writeln!(t, "subject multimodal unimodal tau").ok();
    for s in &taus {
        writeln!(t, "{} {} {} {}", s.subject_id, s.multimodal, s.unimodal, fmt_opt(s.tau)).ok();
    }
    let rule = ctx.cfg.persona.threshold.map_or("median".to_string(), |v| format!("threshold {v}"));
    writeln!(t, "split {rule}").ok();
    writeln!(t, "introverts {}", test.introverts.len()).ok();
    writeln!(t, "extroverts {}", test.extroverts.len()).ok();
    writeln!(t, "ks_d {:.6} ({}/{})", test.ks.d, test.ks.d_numerator, test.ks.d_denominator).ok();
    writeln!(t, "ks_p {:.6}", test.ks.p_value).ok();
    let mut j = json!({
        "taus": taus.iter().map(|s| json!({"subject_id": s.subject_id, "multimodal": s.multimodal, "unimodal": s.unimodal, "tau": s.tau})).collect::<Vec<_>>(),
        "split": rule,
        "introverts": test.introverts,
        "extroverts": test.extroverts,
        "ks": { "d": test.ks.d, "d_numerator": test.ks.d_numerator, "d_denominator": test.ks.d_denominator, "p_value": test.ks.p_value },
    });
    let mut summary = format!("stats: K-S D {:.4}, p {:.4}", test.ks.d, test.ks.p_value);
    if let Some((pa, pb)) = ratings {
        let (a, b) = (read_ratings(&pa)?, read_ratings(&pb)?);
        if a.keys().ne(b.keys()) {
            return Err(CliError::data(format!("{} and {} rate different items", pa.display(), pb.display())));
        }
        let w =
            wilcoxon_signed_rank(&a.values().copied().collect::<Vec<_>>(), &b.values().copied().collect::<Vec<_>>())?;
        writeln!(t, "wilcoxon_w {}", w.w).ok();
        writeln!(t, "wilcoxon_n {}", w.n).ok();
        writeln!(t, "wilcoxon_p {:.6}{}", w.p_value, if w.exact { " (exact)" } else { " (normal approximation)" }).ok();
        j["wilcoxon"] = json!({
            "w": w.w, "w_plus": w.w_plus, "w_minus": w.w_minus, "n": w.n,
            "p_value": w.p_value, "exact": w.exact, "degenerate": w.degenerate,
        });
        summary.push_str(&format!(", Wilcoxon W {}, p {:.4}", w.w, w.p_value));
    }
    ctx.write(&ctx.out_path("persona_stats.txt"), "persona_stats", &t)?;
    ctx.write_json(&ctx.out_path("persona_stats.json"), "persona_stats", &j)?;
    Ok(summary)
}

// ----------------------------------------------------------- persona-sample

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ComboFile {
    signals: Vec<String>,
    p: f64,
}

/// Persona profile TOML. Tables left out keep the built-in values.
#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    label: String,
    p_multimodal: Option<f64>,
    visual_unimodal: Option<Vec<ComboFile>>,
    visual_multimodal: Option<Vec<ComboFile>>,
    verbal_multimodal: Option<Vec<ComboFile>>,
    tokens: Option<BTreeMap<String, f64>>,
}

fn combos(v: Vec<ComboFile>) -> Result<Vec<Combo>> {
    v.into_iter()
        .map(|c| {
            let s = c
                .signals
                .iter()
                .map(|s| s.parse::<SignalKind>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(CliError::config)?;
            Ok(Combo::new(&s, c.p))
        })
        .collect()
}

pub fn load_profile(path: &Path) -> Result<PersonaProfile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let f: ProfileFile = toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let label = Extraversion::parse(&f.label)
        .ok_or_else(|| CliError::config(format!("{}: unknown label `{}`", path.display(), f.label)))?;
    let mut p = PersonaProfile::for_label(label);
    if let Some(m) = f.p_multimodal {
        p.p_multimodal = m;
        p.p_unimodal = 1.0 - m;
    }
    if let Some(v) = f.visual_unimodal {
        p.visual_unimodal = combos(v)?;
    }
    if let Some(v) = f.visual_multimodal {
        p.visual_multimodal = combos(v)?;
    }
    if let Some(v) = f.verbal_multimodal {
        p.verbal_multimodal = combos(v)?;
    }
    if let Some(t) = f.tokens {
        p.utterance_tokens = t.into_iter().collect();
    }
    p.validate().map_err(CliError::config)?;
    Ok(p)
}

pub fn resolve_profile(ctx: &Ctx, persona: Extraversion, file: Option<&Path>) -> Result<PersonaProfile> {
    let configured = match persona {
        Extraversion::Introvert => ctx.cfg.persona.introvert_profile.as_deref(),
        Extraversion::Extrovert => ctx.cfg.persona.extrovert_profile.as_deref(),
    };
    let mut p = match file.or(configured) {
        Some(path) => load_profile(path)?,
        None => PersonaProfile::for_label(persona),
    };
    if let Some(t) = &ctx.cfg.persona.tokens {
        let total: f64 = t.values().sum();
        p.utterance_tokens = t.iter().map(|(k, v)| (k.clone(), v / total)).collect();
    }
    p.validate().map_err(CliError::config)?;
    Ok(p)
}

pub fn persona_sample(ctx: &Ctx, log: &Path, persona: Extraversion, profile: Option<&Path>) -> Result<String> {
    let p = resolve_profile(ctx, persona, profile)?;
    let rows: Vec<LogRow> = formats::read_rows(&artifact::read(log)?.body, &log.display().to_string())?;
    let mut rng = seed::rng(seed::derive(ctx.cfg.seed, &[TAG_PERSONA, persona as u64]));
    let mut out = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let cat = SignalCategory::parse(&r.category).ok_or_else(|| {
            CliError::data(format!("{} row {}: unknown category `{}`", log.display(), i + 1, r.category))
        })?;
        let resp = sample_response(&p, cat, &mut rng);
        out.push(ResponseRow {
            t_s: r.t_s,
            category: cat.as_str().into(),
            signals: formats::join_signals(&resp.signals),
            utterance_token: resp.utterance_token.unwrap_or_default(),
        });
    }
    let n = out.len();
    let body = formats::write_rows(out)?;
    let body = if body.is_empty() { "t_s,category,signals,utterance_token\n".to_string() } else { body };
    ctx.write(&ctx.out_path(&format!("responses_{}.csv", persona.as_str())), "persona_responses", &body)?;
    Ok(format!("persona-sample: {n} responses as {}", persona.as_str()))
}
