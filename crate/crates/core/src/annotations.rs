//! Multi-coder backchannel annotations: matching near-identical intervals
//! across coders, merging them into consensus instances and measuring
//! inter-annotator agreement with Fleiss' kappa.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two annotations from different coders point at the same instance when
/// both their onsets and their offsets differ by strictly less than this.
pub const MATCH_TOLERANCE_S: f64 = 1.0;

/// Conflicting components up to this size are resolved by exhaustive search.
pub const EXACT_COMPONENT_LIMIT: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotationError {
    #[error("invalid interval [{onset}, {offset}]: need finite onset >= 0 and onset < offset")]
    InvalidInterval { onset: f64, offset: f64 },
    #[error("unknown signal token `{0}`")]
    UnknownSignal(String),
    #[error("annotation {id} has an empty signal set")]
    EmptySignals { id: usize },
    #[error("duplicate annotation from coder `{coder}` at [{onset}, {offset}]")]
    DuplicateAnnotation { coder: String, onset: f64, offset: f64 },
    #[error("annotations span several (conversation, subject) pairs: ({0}, {1}) vs ({2}, {3})")]
    MixedKeys(String, String, String, String),
    #[error("agreement table: {0}")]
    Table(String),
    #[error("grid step must be positive, got {0}")]
    GridStep(f64),
}

/// Half-open time interval `[onset_s, offset_s)` in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInterval")]
pub struct TimeInterval {
    onset_s: f64,
    offset_s: f64,
}

#[derive(Deserialize)]
struct RawInterval {
    onset_s: f64,
    offset_s: f64,
}

impl TryFrom<RawInterval> for TimeInterval {
    type Error = AnnotationError;

    fn try_from(r: RawInterval) -> Result<Self, Self::Error> {
        TimeInterval::new(r.onset_s, r.offset_s)
    }
}

impl TimeInterval {
    pub fn new(onset_s: f64, offset_s: f64) -> Result<Self, AnnotationError> {
        if onset_s.is_finite() && offset_s.is_finite() && onset_s >= 0.0 && onset_s < offset_s {
            Ok(Self { onset_s, offset_s })
        } else {
            Err(AnnotationError::InvalidInterval { onset: onset_s, offset: offset_s })
        }
    }

    pub fn onset(&self) -> f64 {
        self.onset_s
    }

    pub fn offset(&self) -> f64 {
        self.offset_s
    }

    pub fn duration(&self) -> f64 {
        self.offset_s - self.onset_s
    }

    /// True when the two half-open intervals share a positive-length stretch.
    pub fn overlaps(&self, other: &TimeInterval) -> bool {
        self.onset_s < other.offset_s && other.onset_s < self.offset_s
    }

    pub fn contains_interval(&self, other: &TimeInterval) -> bool {
        self.onset_s <= other.onset_s && other.offset_s <= self.offset_s
    }
}

/// Listener backchannel signals an annotator can mark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SignalKind {
    Nod,
    HeadShake,
    MouthSmile,
    MouthFrown,
    EyebrowRaise,
    EyebrowFrown,
    Utterance,
}

impl SignalKind {
    pub const ALL: [SignalKind; 7] = [
        SignalKind::Nod,
        SignalKind::HeadShake,
        SignalKind::MouthSmile,
        SignalKind::MouthFrown,
        SignalKind::EyebrowRaise,
        SignalKind::EyebrowFrown,
        SignalKind::Utterance,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SignalKind::Nod => "Nod",
            SignalKind::HeadShake => "HeadShake",
            SignalKind::MouthSmile => "MouthSmile",
            SignalKind::MouthFrown => "MouthFrown",
            SignalKind::EyebrowRaise => "EyebrowRaise",
            SignalKind::EyebrowFrown => "EyebrowFrown",
            SignalKind::Utterance => "Utterance",
        }
    }

    pub fn is_visual(&self) -> bool {
        matches!(self, SignalKind::Nod | SignalKind::HeadShake | SignalKind::MouthSmile | SignalKind::MouthFrown)
    }

    pub fn is_eyebrow(&self) -> bool {
        matches!(self, SignalKind::EyebrowRaise | SignalKind::EyebrowFrown)
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SignalKind {
    type Err = AnnotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SignalKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| AnnotationError::UnknownSignal(s.into()))
    }
}

/// One coder's mark of a backchannel interval for one listener.
#[derive(Clone, Debug, PartialEq)]
pub struct CoderAnnotation {
    pub id: usize,
    pub coder_id: String,
    pub conversation_id: String,
    pub subject_id: String,
    pub interval: TimeInterval,
    pub signals: BTreeSet<SignalKind>,
}

impl CoderAnnotation {
    fn key(&self) -> (&str, &str) {
        (&self.conversation_id, &self.subject_id)
    }

    /// The matching relation: different coders, onsets and offsets both
    /// closer than [`MATCH_TOLERANCE_S`].
    pub fn matches(&self, other: &CoderAnnotation) -> bool {
        self.coder_id != other.coder_id
            && (self.interval.onset() - other.interval.onset()).abs() < MATCH_TOLERANCE_S
            && (self.interval.offset() - other.interval.offset()).abs() < MATCH_TOLERANCE_S
    }
}

/// A merged instance that at least two coders agreed on.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusInstance {
    pub conversation_id: String,
    pub subject_id: String,
    pub interval: TimeInterval,
    pub signals: BTreeSet<SignalKind>,
    pub support: usize,
    pub member_ids: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConsensusOutput {
    pub instances: Vec<ConsensusInstance>,
    /// Clusters with support below two.
    pub dropped_low_support: usize,
    /// Clusters whose coders agreed on presence but on no single signal.
    pub dropped_empty_signals: usize,
}

fn canonical_cmp(a: &CoderAnnotation, b: &CoderAnnotation) -> Ordering {
    a.interval
        .onset()
        .total_cmp(&b.interval.onset())
        .then(a.interval.offset().total_cmp(&b.interval.offset()))
        .then_with(|| a.coder_id.cmp(&b.coder_id))
        .then_with(|| a.signals.cmp(&b.signals))
        .then(a.id.cmp(&b.id))
}

fn validate(annotations: &[CoderAnnotation]) -> Result<(), AnnotationError> {
    if let Some(first) = annotations.first() {
        for a in annotations {
            if a.key() != first.key() {
                return Err(AnnotationError::MixedKeys(
                    first.conversation_id.clone(),
                    first.subject_id.clone(),
                    a.conversation_id.clone(),
                    a.subject_id.clone(),
                ));
            }
            if a.signals.is_empty() {
                return Err(AnnotationError::EmptySignals { id: a.id });
            }
        }
    }
    let mut sorted: Vec<&CoderAnnotation> = annotations.iter().collect();
    sorted.sort_by(|a, b| canonical_cmp(a, b));
    for w in sorted.windows(2) {
        if w[0].coder_id == w[1].coder_id && w[0].interval == w[1].interval {
            return Err(AnnotationError::DuplicateAnnotation {
                coder: w[0].coder_id.clone(),
                onset: w[0].interval.onset(),
                offset: w[0].interval.offset(),
            });
        }
    }
    Ok(())
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Sum over members of the L1 distance of their endpoints to the block mean.
pub fn block_cost(members: &[&CoderAnnotation]) -> f64 {
    let n = members.len() as f64;
    let mean_on = members.iter().map(|a| a.interval.onset()).sum::<f64>() / n;
    let mean_off = members.iter().map(|a| a.interval.offset()).sum::<f64>() / n;
    members.iter().map(|a| (a.interval.onset() - mean_on).abs() + (a.interval.offset() - mean_off).abs()).sum()
}

/// True when the block's members form one connected piece under the matching
/// relation.
pub fn block_connected(members: &[&CoderAnnotation]) -> bool {
    if members.len() <= 1 {
        return true;
    }
    let mut seen = vec![false; members.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..members.len() {
            if !seen[j] && members[i].matches(members[j]) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Ranking of candidate partitions: fewer clusters first, then lower total
/// endpoint spread, then the lexicographically smallest vector of block
/// leaders (the first canonical member of each element's block).
#[derive(Clone, Debug)]
pub struct PartitionScore {
    pub blocks: usize,
    pub cost: f64,
    pub leaders: Vec<usize>,
}

const COST_TIE: f64 = 1e-9;

impl PartitionScore {
    pub fn better_than(&self, other: &PartitionScore) -> bool {
        if self.blocks != other.blocks {
            return self.blocks < other.blocks;
        }
        if (self.cost - other.cost).abs() > COST_TIE {
            return self.cost < other.cost;
        }
        self.leaders < other.leaders
    }
}

struct ExactSearch<'a> {
    items: &'a [&'a CoderAnnotation],
    assign: Vec<usize>,
    best: Option<(PartitionScore, Vec<usize>)>,
}

impl<'a> ExactSearch<'a> {
    fn run(items: &'a [&'a CoderAnnotation]) -> Vec<Vec<usize>> {
        let mut s = ExactSearch { items, assign: vec![0; items.len()], best: None };
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        s.recurse(0, &mut blocks);
        let (_, assign) = s.best.expect("singleton partition is always valid");
        let n_blocks = assign.iter().copied().max().map_or(0, |m| m + 1);
        let mut out = vec![Vec::new(); n_blocks];
        for (i, b) in assign.into_iter().enumerate() {
            out[b].push(i);
        }
        out
    }

    fn recurse(&mut self, i: usize, blocks: &mut Vec<Vec<usize>>) {
        if let Some((best, _)) = &self.best {
            if blocks.len() > best.blocks {
                return;
            }
        }
        if i == self.items.len() {
            self.evaluate(blocks);
            return;
        }
        for b in 0..blocks.len() {
            let coder = &self.items[i].coder_id;
            if blocks[b].iter().any(|&m| &self.items[m].coder_id == coder) {
                continue;
            }
            blocks[b].push(i);
            self.assign[i] = b;
            self.recurse(i + 1, blocks);
            blocks[b].pop();
        }
        blocks.push(vec![i]);
        self.assign[i] = blocks.len() - 1;
        self.recurse(i + 1, blocks);
        blocks.pop();
    }

    fn evaluate(&mut self, blocks: &[Vec<usize>]) {
        let mut cost = 0.0;
        for block in blocks {
            let members: Vec<&CoderAnnotation> = block.iter().map(|&m| self.items[m]).collect();
            if !block_connected(&members) {
                return;
            }
            cost += block_cost(&members);
        }
        let leaders = self.assign.iter().map(|&b| blocks[b][0]).collect();
        let score = PartitionScore { blocks: blocks.len(), cost, leaders };
        let replace = match &self.best {
            None => true,
            Some((best, _)) => score.better_than(best),
        };
        if replace {
            self.best = Some((score, self.assign.clone()));
        }
    }
}

/// Greedy nearest-member clustering in onset order, used for conflicting
/// components too large to search exhaustively.
fn greedy_component(items: &[&CoderAnnotation]) -> Vec<Vec<usize>> {
    let mut taken = vec![false; items.len()];
    let mut out = Vec::new();
    for seed in 0..items.len() {
        if taken[seed] {
            continue;
        }
        taken[seed] = true;
        let mut block = vec![seed];
        let (mut sum_on, mut sum_off) = (items[seed].interval.onset(), items[seed].interval.offset());
        loop {
            let n = block.len() as f64;
            let (mean_on, mean_off) = (sum_on / n, sum_off / n);
            let mut pick: Option<(f64, usize)> = None;
            for c in 0..items.len() {
                if taken[c]
                    || block.iter().any(|&m| items[m].coder_id == items[c].coder_id)
                    || !block.iter().any(|&m| items[m].matches(items[c]))
                {
                    continue;
                }
                let d = (items[c].interval.onset() - mean_on).abs() + (items[c].interval.offset() - mean_off).abs();
                if pick.is_none_or(|(bd, _)| d < bd) {
                    pick = Some((d, c));
                }
            }
            let Some((_, c)) = pick else { break };
            taken[c] = true;
            sum_on += items[c].interval.onset();
            sum_off += items[c].interval.offset();
            block.push(c);
        }
        block.sort_unstable();
        out.push(block);
    }
    out
}

/// Groups the annotations of one (conversation, subject) into clusters that
/// refer to the same backchannel instance.
///
/// Clusters are connected under the matching relation and hold at most one
/// annotation per coder. Connected components without coder conflicts become
/// one cluster each; a conflicting component is split into the fewest
/// clusters possible, ties broken by the smallest endpoint spread around the
/// cluster means. Components larger than [`EXACT_COMPONENT_LIMIT`] fall back
/// to greedy nearest-member assignment in onset order.
pub fn cluster_annotations(annotations: &[CoderAnnotation]) -> Result<Vec<Vec<CoderAnnotation>>, AnnotationError> {
    validate(annotations)?;
    let mut sorted: Vec<&CoderAnnotation> = annotations.iter().collect();
    sorted.sort_by(|a, b| canonical_cmp(a, b));
    let n = sorted.len();

    let mut ds = DisjointSet((0..n).collect());
    for i in 0..n {
        for j in i + 1..n {
            if sorted[j].interval.onset() - sorted[i].interval.onset() >= MATCH_TOLERANCE_S {
                break;
            }
            if sorted[i].matches(sorted[j]) {
                ds.union(i, j);
            }
        }
    }
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = ds.find(i);
        if slot[r] == usize::MAX {
            slot[r] = components.len();
            components.push(Vec::new());
        }
        components[slot[r]].push(i);
    }

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for comp in components {
        let items: Vec<&CoderAnnotation> = comp.iter().map(|&i| sorted[i]).collect();
        let coders: BTreeSet<&str> = items.iter().map(|a| a.coder_id.as_str()).collect();
        let local = if coders.len() == items.len() {
            vec![(0..items.len()).collect()]
        } else if items.len() <= EXACT_COMPONENT_LIMIT {
            ExactSearch::run(&items)
        } else {
            greedy_component(&items)
        };
        clusters.extend(local.into_iter().map(|b| b.into_iter().map(|k| comp[k]).collect()));
    }
    clusters.sort_by_key(|b: &Vec<usize>| b[0]);
    Ok(clusters.into_iter().map(|b| b.into_iter().map(|i| sorted[i].clone()).collect()).collect())
}

/// Merges clusters into consensus instances: at least two supporting coders,
/// signals kept when marked by at least two members, endpoints averaged.
pub fn consensus(clusters: &[Vec<CoderAnnotation>]) -> ConsensusOutput {
    let mut out = ConsensusOutput::default();
    for cluster in clusters {
        if cluster.len() < 2 {
            out.dropped_low_support += 1;
            continue;
        }
        let signals: BTreeSet<SignalKind> = SignalKind::ALL
            .iter()
            .copied()
            .filter(|s| cluster.iter().filter(|a| a.signals.contains(s)).count() >= 2)
            .collect();
        if signals.is_empty() {
            out.dropped_empty_signals += 1;
            continue;
        }
        let n = cluster.len() as f64;
        let onset = cluster.iter().map(|a| a.interval.onset()).sum::<f64>() / n;
        let offset = cluster.iter().map(|a| a.interval.offset()).sum::<f64>() / n;
        let mut member_ids: Vec<usize> = cluster.iter().map(|a| a.id).collect();
        member_ids.sort_unstable();
        out.instances.push(ConsensusInstance {
            conversation_id: cluster[0].conversation_id.clone(),
            subject_id: cluster[0].subject_id.clone(),
            interval: TimeInterval::new(onset, offset).expect("mean of valid intervals"),
            signals,
            support: cluster.len(),
            member_ids,
        });
    }
    out.instances.sort_by(|a, b| {
        a.interval.onset().total_cmp(&b.interval.onset()).then(a.interval.offset().total_cmp(&b.interval.offset()))
    });
    out
}

/// Clusters and merges annotations spanning any number of (conversation,
/// subject) pairs. Output is ordered by (conversation, subject, onset).
pub fn consensus_all(annotations: &[CoderAnnotation]) -> Result<ConsensusOutput, AnnotationError> {
    let mut keys: Vec<(&str, &str)> = annotations.iter().map(|a| a.key()).collect();
    keys.sort_unstable();
    keys.dedup();
    let mut out = ConsensusOutput::default();
    for key in keys {
        let group: Vec<CoderAnnotation> = annotations.iter().filter(|a| a.key() == key).cloned().collect();
        let merged = consensus(&cluster_annotations(&group)?);
        out.instances.extend(merged.instances);
        out.dropped_low_support += merged.dropped_low_support;
        out.dropped_empty_signals += merged.dropped_empty_signals;
    }
    Ok(out)
}

/// Item-by-category rating counts with a constant number of raters per item.
#[derive(Clone, Debug, PartialEq)]
pub struct AgreementTable {
    counts: Vec<Vec<u64>>,
    raters: u64,
    categories: usize,
}

impl AgreementTable {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self, AnnotationError> {
        let categories = counts.first().map_or(0, |r| r.len());
        if counts.is_empty() {
            return Err(AnnotationError::Table("need at least one item".into()));
        }
        if categories < 2 {
            return Err(AnnotationError::Table("need at least two categories".into()));
        }
        let raters: u64 = counts[0].iter().sum();
        for (i, row) in counts.iter().enumerate() {
            if row.len() != categories {
                return Err(AnnotationError::Table(alloc::format!(
                    "row {i} has {} categories, expected {categories}",
                    row.len()
                )));
            }
            let s: u64 = row.iter().sum();
            if s != raters {
                return Err(AnnotationError::Table(alloc::format!("row {i} sums to {s}, expected {raters}")));
            }
        }
        if raters < 2 {
            return Err(AnnotationError::Table("need at least two raters per item".into()));
        }
        Ok(Self { counts, raters, categories })
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn raters(&self) -> u64 {
        self.raters
    }

    pub fn categories(&self) -> usize {
        self.categories
    }
}

/// Fleiss' kappa, or [`Kappa::Undefined`] when expected chance agreement is
/// perfect (every rating falls in a single category).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kappa {
    Defined(f64),
    Undefined,
}

impl Kappa {
    pub fn value(&self) -> Option<f64> {
        match self {
            Kappa::Defined(v) => Some(*v),
            Kappa::Undefined => None,
        }
    }
}

impl fmt::Display for Kappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kappa::Defined(v) => write!(f, "{v}"),
            Kappa::Undefined => f.write_str("undefined"),
        }
    }
}

pub fn fleiss_kappa(table: &AgreementTable) -> Kappa {
    // With A = sum n_ij^2 - N n, C = sum_j (column total)^2 and M = (N n)^2:
    //   P_bar = A / (N n (n - 1)),  P_e = C / M
    //   kappa = (A N n - C (n - 1)) / ((M - C)(n - 1))
    // Integer numerator and denominator give a single rounding step.
    let n = table.raters as i128;
    let items = table.counts.len() as i128;
    let mut a: i128 = -(items * n);
    let mut cols = vec![0i128; table.categories];
    for row in &table.counts {
        for (j, &c) in row.iter().enumerate() {
            a += (c as i128) * (c as i128);
            cols[j] += c as i128;
        }
    }
    let c: i128 = cols.iter().map(|x| x * x).sum();
    let m = (items * n) * (items * n);
    if m == c {
        return Kappa::Undefined;
    }
    let num = a * items * n - c * (n - 1);
    let den = (m - c) * (n - 1);
    Kappa::Defined(num as f64 / den as f64)
}

/// Discretizes the span into `grid_step_s` bins and, per bin and coder,
/// records "present" when any of that coder's annotations overlaps the bin.
/// Categories are `[present, absent]`. With `signal` set, only annotations
/// carrying that signal count.
pub fn build_agreement_table(
    annotations: &[CoderAnnotation],
    coders: &[String],
    span: TimeInterval,
    grid_step_s: f64,
    signal: Option<SignalKind>,
) -> Result<AgreementTable, AnnotationError> {
    if !(grid_step_s > 0.0 && grid_step_s.is_finite()) {
        return Err(AnnotationError::GridStep(grid_step_s));
    }
    let bins = libm::ceil(span.duration() / grid_step_s - 1e-9).max(1.0) as usize;
    let mut rows = Vec::with_capacity(bins);
    for b in 0..bins {
        let lo = span.onset() + b as f64 * grid_step_s;
        let hi = (lo + grid_step_s).min(span.offset());
        let present = coders
            .iter()
            .filter(|coder| {
                annotations.iter().any(|a| {
                    &a.coder_id == *coder
                        && signal.is_none_or(|s| a.signals.contains(&s))
                        && a.interval.onset() < hi
                        && a.interval.offset() > lo
                })
            })
            .count() as u64;
        rows.push(vec![present, coders.len() as u64 - present]);
    }
    AgreementTable::new(rows)
}

/// Per-cluster table: one item per cluster, each coder rates "present" when
/// it contributed a member to the cluster.
pub fn cluster_agreement_table(
    clusters: &[Vec<CoderAnnotation>],
    coders: &[String],
) -> Result<AgreementTable, AnnotationError> {
    let rows = clusters
        .iter()
        .map(|c| {
            let present = coders.iter().filter(|k| c.iter().any(|a| &&a.coder_id == k)).count() as u64;
            vec![present, coders.len() as u64 - present]
        })
        .collect();
    AgreementTable::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn ann(id: usize, coder: &str, on: f64, off: f64, sig: &[SignalKind]) -> CoderAnnotation {
        CoderAnnotation {
            id,
            coder_id: coder.to_string(),
            conversation_id: "c".into(),
            subject_id: "s".into(),
            interval: TimeInterval::new(on, off).unwrap(),
            signals: sig.iter().copied().collect(),
        }
    }

    fn ids(clusters: &[Vec<CoderAnnotation>]) -> Vec<Vec<usize>> {
        clusters.iter().map(|c| c.iter().map(|a| a.id).collect()).collect()
    }

    use SignalKind::*;

    #[test]
    fn clusters_near_pairs_only() {
        let a = [ann(0, "A", 10.0, 12.0, &[Nod]), ann(1, "B", 10.5, 12.4, &[Nod]), ann(2, "C", 20.0, 21.0, &[Nod])];
        assert_eq!(ids(&cluster_annotations(&a).unwrap()), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn single_coder_never_merges() {
        let a = [ann(0, "A", 1.0, 2.0, &[Nod]), ann(1, "A", 1.5, 2.5, &[Nod])];
        assert_eq!(ids(&cluster_annotations(&a).unwrap()), vec![vec![0], vec![1]]);
    }

    #[test]
    fn identical_intervals_from_three_coders() {
        let a = [ann(0, "A", 5.0, 6.0, &[Nod]), ann(1, "B", 5.0, 6.0, &[Nod]), ann(2, "C", 5.0, 6.0, &[Nod])];
        assert_eq!(ids(&cluster_annotations(&a).unwrap()), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn tolerance_is_strict() {
        let a = [ann(0, "A", 1.0, 3.0, &[Nod]), ann(1, "B", 2.0, 3.0, &[Nod])];
        assert_eq!(cluster_annotations(&a).unwrap().len(), 2);
    }

    #[test]
    fn duplicate_from_one_coder_is_rejected() {
        let a = [ann(0, "A", 1.0, 2.0, &[Nod]), ann(1, "A", 1.0, 2.0, &[Utterance])];
        let err = cluster_annotations(&a).unwrap_err();
        assert!(matches!(err, AnnotationError::DuplicateAnnotation { ref coder, .. } if coder == "A"));
    }

    #[test]
    fn mixed_subjects_are_rejected() {
        let mut b = ann(1, "B", 1.0, 2.0, &[Nod]);
        b.subject_id = "other".into();
        assert!(matches!(
            cluster_annotations(&[ann(0, "A", 1.0, 2.0, &[Nod]), b]),
            Err(AnnotationError::MixedKeys(..))
        ));
    }

    #[test]
    fn conflict_keeps_nearest_member() {
        // A1 and A1' both match B; B goes with the closer one.
        let a = [ann(0, "A", 10.0, 12.0, &[Nod]), ann(1, "B", 10.7, 12.7, &[Nod]), ann(2, "A", 10.8, 12.8, &[Nod])];
        assert_eq!(ids(&cluster_annotations(&a).unwrap()), vec![vec![0], vec![1, 2]]);
    }

    #[test]
    fn greedy_fallback_respects_coder_uniqueness() {
        // A long chain of alternating coders 0.5 s apart forms one component
        // larger than the exhaustive limit.
        let a: Vec<CoderAnnotation> = (0..14)
            .map(|i| {
                let coder = ["A", "B", "C"][i % 3];
                let on = i as f64 * 0.5;
                ann(i, coder, on, on + 2.0, &[Nod])
            })
            .collect();
        let clusters = cluster_annotations(&a).unwrap();
        for c in &clusters {
            let coders: BTreeSet<&str> = c.iter().map(|a| a.coder_id.as_str()).collect();
            assert_eq!(coders.len(), c.len());
            let refs: Vec<&CoderAnnotation> = c.iter().collect();
            assert!(block_connected(&refs));
        }
        assert_eq!(clusters.iter().map(Vec::len).sum::<usize>(), 14);
    }

    #[test]
    fn consensus_votes_signals() {
        // A1 saw nothing; A2 marked nod, smile, utterance; A3 nod and utterance.
        let c = vec![vec![
            ann(0, "A2", 3.0, 6.0, &[Nod, MouthSmile, Utterance]),
            ann(1, "A3", 3.2, 6.1, &[Nod, Utterance]),
        ]];
        let out = consensus(&c);
        assert_eq!(out.instances.len(), 1);
        assert_eq!(out.instances[0].signals, [Nod, Utterance].into_iter().collect());
    }

    #[test]
    fn consensus_averages_endpoints() {
        let c = cluster_annotations(&[ann(0, "A", 10.0, 12.0, &[Nod]), ann(1, "B", 10.5, 12.4, &[Nod])]).unwrap();
        let out = consensus(&c);
        let inst = &out.instances[0];
        assert!((inst.interval.onset() - 10.25).abs() < 1e-12);
        assert!((inst.interval.offset() - 12.2).abs() < 1e-12);
        assert_eq!(inst.support, 2);
        assert_eq!(inst.member_ids, vec![0, 1]);
    }

    #[test]
    fn consensus_drops_singletons_and_empty_votes() {
        let c = vec![
            vec![ann(0, "A", 1.0, 2.0, &[Nod])],
            vec![ann(1, "A", 5.0, 6.0, &[Nod]), ann(2, "B", 5.1, 6.0, &[MouthSmile])],
        ];
        let out = consensus(&c);
        assert!(out.instances.is_empty());
        assert_eq!(out.dropped_low_support, 1);
        assert_eq!(out.dropped_empty_signals, 1);
    }

    #[test]
    fn kappa_hand_cases() {
        let t = AgreementTable::new(vec![vec![3, 0], vec![2, 1]]).unwrap();
        let k = fleiss_kappa(&t).value().unwrap();
        assert!((k + 0.2).abs() < 1e-12);

        let t = AgreementTable::new(vec![vec![3, 0], vec![0, 3], vec![3, 0]]).unwrap();
        assert_eq!(fleiss_kappa(&t), Kappa::Defined(1.0));

        // One item, two raters split: P_bar = 0, P_e = 1/2, kappa = -1.
        let t = AgreementTable::new(vec![vec![1, 1]]).unwrap();
        assert_eq!(fleiss_kappa(&t), Kappa::Defined(-1.0));

        let t = AgreementTable::new(vec![vec![0, 2], vec![0, 2]]).unwrap();
        assert_eq!(fleiss_kappa(&t), Kappa::Undefined);
    }

    #[test]
    fn kappa_table_validation() {
        assert!(AgreementTable::new(vec![vec![3, 0], vec![1, 1]]).is_err());
        assert!(AgreementTable::new(vec![vec![3]]).is_err());
        assert!(AgreementTable::new(vec![]).is_err());
        assert!(AgreementTable::new(vec![vec![1, 0]]).is_err());
    }

    #[test]
    fn grid_table_cases() {
        let span = TimeInterval::new(0.0, 2.0).unwrap();
        let coders = ["A".to_string(), "B".to_string()];
        let t = build_agreement_table(&[ann(0, "A", 0.0, 1.0, &[Nod])], &coders, span, 1.0, None).unwrap();
        assert_eq!(t.rows(), &[vec![1, 1], vec![0, 2]]);
        // P_bar = 1/2, P_e = (1/4)^2 + (3/4)^2 = 5/8, kappa = -1/3.
        assert!((fleiss_kappa(&t).value().unwrap() + 1.0 / 3.0).abs() < 1e-12);

        let t = build_agreement_table(&[], &coders, span, 1.0, None).unwrap();
        assert_eq!(fleiss_kappa(&t), Kappa::Undefined);

        let coders3 = ["A".to_string(), "B".to_string(), "C".to_string()];
        let same = [ann(0, "A", 0.5, 1.2, &[Nod]), ann(1, "B", 0.5, 1.2, &[Nod]), ann(2, "C", 0.5, 1.2, &[Nod])];
        let span = TimeInterval::new(0.0, 4.0).unwrap();
        let t = build_agreement_table(&same, &coders3, span, 1.0, None).unwrap();
        assert_eq!(fleiss_kappa(&t), Kappa::Defined(1.0));
        assert!(build_agreement_table(&same, &coders3, span, 0.0, None).is_err());
    }

    #[test]
    fn signal_tokens_round_trip() {
        for k in SignalKind::ALL {
            assert_eq!(k.as_str().parse::<SignalKind>().unwrap(), k);
        }
        assert!("nod".parse::<SignalKind>().is_err());
    }

    #[test]
    fn interval_validation() {
        assert!(TimeInterval::new(1.0, 1.0).is_err());
        assert!(TimeInterval::new(-0.1, 1.0).is_err());
        assert!(TimeInterval::new(0.0, f64::NAN).is_err());
    }
}
