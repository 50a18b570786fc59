//! CSV layouts of the corpus directory and of derived artifacts.

use std::collections::{BTreeMap, BTreeSet};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use backchannel_core::annotations::{CoderAnnotation, ConsensusInstance, SignalKind, TimeInterval};
use backchannel_core::corpus::Task;
use backchannel_core::features::{ChannelKind, FeatureSchema, FeatureStream};
use backchannel_core::persona::SignalCategory;
use backchannel_core::sampling::{NegativeInstance, VoiceActivity};

use crate::error::{CliError, Result};

pub fn read_rows<T: DeserializeOwned>(body: &str, what: &str) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(body.as_bytes());
    rdr.deserialize().map(|r| r.map_err(|e| CliError::data(format!("{what}: {e}")))).collect()
}

pub fn write_rows<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Internal(e.to_string()))
}

/// Header-only CSV for an empty table.
fn with_header(body: String, header: &str) -> String {
    if body.is_empty() {
        format!("{header}\n")
    } else {
        body
    }
}

fn interval(onset: f64, offset: f64, what: &str) -> Result<TimeInterval> {
    TimeInterval::new(onset, offset).map_err(|e| CliError::data(format!("{what}: {e}")))
}

fn signal(s: &str) -> Result<SignalKind> {
    s.parse().map_err(CliError::data)
}

pub fn join_signals(s: &BTreeSet<SignalKind>) -> String {
    s.iter().map(|k| k.as_str()).collect::<Vec<_>>().join("+")
}

pub fn split_signals(s: &str) -> Result<BTreeSet<SignalKind>> {
    s.split('+').filter(|t| !t.is_empty()).map(signal).collect()
}

#[derive(Serialize, Deserialize)]
struct AnnotationRow {
    conversation_id: String,
    subject_id: String,
    coder_id: String,
    onset_s: f64,
    offset_s: f64,
    signal: String,
}

const ANNOTATION_HEADER: &str = "conversation_id,subject_id,coder_id,onset_s,offset_s,signal";

/// One row per (annotation, signal).
pub fn write_annotations(anns: &[CoderAnnotation]) -> Result<String> {
    let rows = anns.iter().flat_map(|a| {
        a.signals.iter().map(move |s| AnnotationRow {
            conversation_id: a.conversation_id.clone(),
            subject_id: a.subject_id.clone(),
            coder_id: a.coder_id.clone(),
            onset_s: a.interval.onset(),
            offset_s: a.interval.offset(),
            signal: s.as_str().into(),
        })
    });
    Ok(with_header(write_rows(rows)?, ANNOTATION_HEADER))
}

/// Rows sharing conversation, subject, coder and endpoints form one
/// annotation; ids follow first appearance.
pub fn read_annotations(body: &str) -> Result<Vec<CoderAnnotation>> {
    let rows: Vec<AnnotationRow> = read_rows(body, "annotations")?;
    let mut index: BTreeMap<(String, String, String, u64, u64), usize> = BTreeMap::new();
    let mut out: Vec<CoderAnnotation> = Vec::new();
    for (i, r) in rows.into_iter().enumerate() {
        let kind = signal(&r.signal).map_err(|e| CliError::data(format!("annotations row {}: {e}", i + 1)))?;
        let key = (
            r.conversation_id.clone(),
            r.subject_id.clone(),
            r.coder_id.clone(),
            r.onset_s.to_bits(),
            r.offset_s.to_bits(),
        );
        match index.get(&key) {
            Some(&j) => {
                out[j].signals.insert(kind);
            }
            None => {
                let iv = interval(r.onset_s, r.offset_s, &format!("annotations row {}", i + 1))?;
                index.insert(key, out.len());
                out.push(CoderAnnotation {
                    id: out.len(),
                    coder_id: r.coder_id,
                    conversation_id: r.conversation_id,
                    subject_id: r.subject_id,
                    interval: iv,
                    signals: [kind].into_iter().collect(),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ConsensusRow {
    conversation_id: String,
    subject_id: String,
    onset_s: f64,
    offset_s: f64,
    signals: String,
    support: usize,
}

pub fn write_consensus(items: &[ConsensusInstance]) -> Result<String> {
    let rows = items.iter().map(|c| ConsensusRow {
        conversation_id: c.conversation_id.clone(),
        subject_id: c.subject_id.clone(),
        onset_s: c.interval.onset(),
        offset_s: c.interval.offset(),
        signals: join_signals(&c.signals),
        support: c.support,
    });
    Ok(with_header(write_rows(rows)?, "conversation_id,subject_id,onset_s,offset_s,signals,support"))
}

pub fn read_consensus(body: &str) -> Result<Vec<ConsensusInstance>> {
    let rows: Vec<ConsensusRow> = read_rows(body, "consensus")?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let what = format!("consensus row {}", i + 1);
            let signals = split_signals(&r.signals).map_err(|e| CliError::data(format!("{what}: {e}")))?;
            if signals.is_empty() {
                return Err(CliError::data(format!("{what}: no signals")));
            }
            Ok(ConsensusInstance {
                interval: interval(r.onset_s, r.offset_s, &what)?,
                conversation_id: r.conversation_id,
                subject_id: r.subject_id,
                signals,
                support: r.support,
                member_ids: Vec::new(),
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct VadRow {
    conversation_id: String,
    subject_id: String,
    onset_s: f64,
    offset_s: f64,
}

pub fn write_vad(vad: &[VoiceActivity]) -> Result<String> {
    let rows = vad.iter().flat_map(|v| {
        v.intervals().iter().map(move |iv| VadRow {
            conversation_id: v.conversation_id.clone(),
            subject_id: v.subject_id.clone(),
            onset_s: iv.onset(),
            offset_s: iv.offset(),
        })
    });
    Ok(with_header(write_rows(rows)?, "conversation_id,subject_id,onset_s,offset_s"))
}

/// Speech intervals grouped per subject. Subjects listed in `subjects`
/// without any row get an empty activity record.
pub fn read_vad(body: &str, subjects: &[(String, String)]) -> Result<Vec<VoiceActivity>> {
    let rows: Vec<VadRow> = read_rows(body, "voice activity")?;
    let mut m: BTreeMap<(String, String), Vec<TimeInterval>> =
        subjects.iter().map(|k| (k.clone(), Vec::new())).collect();
    for (i, r) in rows.into_iter().enumerate() {
        let iv = interval(r.onset_s, r.offset_s, &format!("voice activity row {}", i + 1))?;
        m.entry((r.conversation_id, r.subject_id)).or_default().push(iv);
    }
    Ok(m.into_iter().map(|((c, s), ivs)| VoiceActivity::new(c, s, ivs)).collect())
}

#[derive(Serialize, Deserialize)]
pub struct IndexRow {
    pub conversation_id: String,
    pub subject_id: String,
    pub file: String,
}

/// `time_s` followed by one column per schema channel.
pub fn write_features(stream: &FeatureStream, schema: &FeatureSchema) -> String {
    let mut out = String::with_capacity(stream.n_frames() * schema.width() * 8);
    out.push_str("time_s");
    for c in schema.channels() {
        out.push(',');
        out.push_str(&c.name);
    }
    out.push('\n');
    for i in 0..stream.n_frames() {
        out.push_str(&format!("{}", stream.time_of(i)));
        for (c, v) in schema.channels().iter().zip(stream.frame(i)) {
            out.push(',');
            match &c.kind {
                ChannelKind::Continuous => out.push_str(&format!("{v:.4}")),
                ChannelKind::Binary => out.push_str(if *v >= 0.5 { "1" } else { "0" }),
                ChannelKind::Categorical(cats) => out.push_str(&cats[*v as usize]),
            }
        }
        out.push('\n');
    }
    out
}

/// Parses a feature table and resamples it onto the frame grid. Columns may
/// come in any order; every schema channel must be present.
pub fn read_features(
    body: &str,
    conversation_id: &str,
    subject_id: &str,
    schema: &FeatureSchema,
    rate: f64,
    what: &str,
) -> Result<FeatureStream> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(body.as_bytes());
    let headers = rdr.headers().map_err(|e| CliError::data(format!("{what}: {e}")))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CliError::data(format!("{what}: missing column `{name}`")))
    };
    let time_col = col("time_s")?;
    let cols: Vec<usize> = schema.channels().iter().map(|c| col(&c.name)).collect::<Result<_>>()?;
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::data(format!("{what}: {e}")))?;
        let bad = |m: String| CliError::data(format!("{what} row {}: {m}", i + 1));
        let field = |j: usize| rec.get(j).ok_or_else(|| bad("short row".into()));
        let t: f64 =
            field(time_col)?.parse().map_err(|_| bad(format!("bad time `{}`", field(time_col).unwrap_or(""))))?;
        let mut row = Vec::with_capacity(cols.len());
        for (c, &j) in schema.channels().iter().zip(&cols) {
            let s = field(j)?;
            let v = match &c.kind {
                ChannelKind::Categorical(cats) => match cats.iter().position(|k| k == s) {
                    Some(k) => k as f64,
                    None => s.parse().map_err(|_| bad(format!("bad value `{s}` for `{}`", c.name)))?,
                },
                _ => s.parse().map_err(|_| bad(format!("bad value `{s}` for `{}`", c.name)))?,
            };
            row.push(v);
        }
        times.push(t);
        rows.push(row);
    }
    FeatureStream::resample(conversation_id.into(), subject_id.into(), schema, &times, &rows, rate)
        .map_err(|e| CliError::data(format!("{what}: {e}")))
}

#[derive(Serialize, Deserialize)]
struct NegativeRow {
    conversation_id: String,
    subject_id: String,
    onset_s: f64,
    offset_s: f64,
    label: String,
}

pub fn write_negatives(items: &[NegativeInstance]) -> Result<String> {
    let rows = items.iter().map(|n| NegativeRow {
        conversation_id: n.conversation_id.clone(),
        subject_id: n.subject_id.clone(),
        onset_s: n.interval.onset(),
        offset_s: n.interval.offset(),
        label: "negative".into(),
    });
    Ok(with_header(write_rows(rows)?, "conversation_id,subject_id,onset_s,offset_s,label"))
}

pub fn read_negatives(body: &str) -> Result<Vec<NegativeInstance>> {
    let rows: Vec<NegativeRow> = read_rows(body, "negatives")?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let what = format!("negatives row {}", i + 1);
            if r.label != "negative" {
                return Err(CliError::data(format!("{what}: label `{}`", r.label)));
            }
            Ok(NegativeInstance {
                interval: interval(r.onset_s, r.offset_s, &what)?,
                conversation_id: r.conversation_id,
                subject_id: r.subject_id,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
pub struct SubjectRow {
    pub subject_id: String,
    pub extraversion: f64,
}

#[derive(Serialize, Deserialize)]
pub struct TruthRow {
    pub conversation_id: String,
    pub subject_id: String,
    pub onset_s: f64,
    pub offset_s: f64,
    pub category: String,
    pub signals: String,
}

pub fn class_name(task: Task, c: usize) -> &'static str {
    if task.is_signal() {
        SignalCategory::from_index(c).map_or("?", |k| k.as_str())
    } else if c == 1 {
        "opportunity"
    } else {
        "no_opportunity"
    }
}

pub fn parse_class(task: Task, s: &str) -> Option<usize> {
    (0..task.n_classes()).find(|&c| class_name(task, c) == s)
}

#[derive(Serialize, Deserialize)]
pub struct LedgerRow {
    pub instance_id: String,
    pub label: String,
    pub provenance: String,
    pub confidence: f64,
}

#[derive(Serialize, Deserialize)]
pub struct RatingRow {
    pub item: String,
    pub rating: f64,
}

#[derive(Serialize, Deserialize)]
pub struct LogRow {
    pub t_s: f64,
    pub category: String,
}

#[derive(Serialize, Deserialize)]
pub struct ResponseRow {
    pub t_s: f64,
    pub category: String,
    pub signals: String,
    pub utterance_token: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use backchannel_core::synth::{generate_conversation, SynthConfig};

    #[test]
    fn annotations_round_trip() {
        let cfg = SynthConfig { n_conversations: 1, duration_s: 60.0, ..SynthConfig::default() };
        let conv = generate_conversation(&cfg, 0).unwrap();
        let text = write_annotations(&conv.annotations).unwrap();
        let back = read_annotations(&text).unwrap();
        assert_eq!(back.len(), conv.annotations.len());
        for (a, b) in conv.annotations.iter().zip(&back) {
            assert_eq!((&a.coder_id, a.interval, &a.signals), (&b.coder_id, b.interval, &b.signals));
        }
    }

    #[test]
    fn features_round_trip_within_print_precision() {
        let cfg = SynthConfig { n_conversations: 1, duration_s: 20.0, ..SynthConfig::default() };
        let conv = generate_conversation(&cfg, 0).unwrap();
        let schema = FeatureSchema::standard();
        let s = &conv.streams[0];
        let text = write_features(s, &schema);
        let back = read_features(&text, &s.conversation_id, &s.subject_id, &schema, 25.0, "t").unwrap();
        assert_eq!((back.first_frame(), back.n_frames()), (s.first_frame(), s.n_frames()));
        for (a, b) in s.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 5e-5 + 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn bad_rows_are_data_errors() {
        let body = "conversation_id,subject_id,coder_id,onset_s,offset_s,signal\nc,s,k,2.0,1.0,Nod\n";
        assert!(matches!(read_annotations(body), Err(CliError::Data(_))));
        let body = "conversation_id,subject_id,coder_id,onset_s,offset_s,signal\nc,s,k,1.0,2.0,Wink\n";
        assert!(matches!(read_annotations(body), Err(CliError::Data(_))));
    }

    #[test]
    fn class_names_round_trip() {
        for t in Task::ALL {
            for c in 0..t.n_classes() {
                assert_eq!(parse_class(t, class_name(t, c)), Some(c));
            }
        }
    }
}
