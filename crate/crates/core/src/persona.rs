//! Personality analysis (the multimodal/unimodal ratio per subject and its
//! dependence on extraversion) and the personality-contingent response
//! sampler for a virtual listener.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng as _, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{ConsensusInstance, SignalKind};
use crate::evaluation::{ks_two_sample, EvalError, KsResult};

const TABLE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PersonaError {
    #[error("empty signal set")]
    EmptySignals,
    #[error("invalid profile `{profile}`: {message}")]
    Profile { profile: String, message: String },
    #[error("subject {0} has no extraversion score")]
    MissingScore(String),
    #[error("extraversion split leaves {introverts} introverts and {extroverts} extroverts")]
    DegenerateSplit { introverts: usize, extroverts: usize },
    #[error(transparent)]
    Stats(#[from] EvalError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalCategory {
    Visual,
    Verbal,
    Both,
}

impl SignalCategory {
    pub const ALL: [SignalCategory; 3] = [SignalCategory::Visual, SignalCategory::Verbal, SignalCategory::Both];

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SignalCategory::Visual => "visual",
            SignalCategory::Verbal => "verbal",
            SignalCategory::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.as_str() == s)
    }
}

/// Category of a signal set. Eyebrow signals carry no category and are
/// ignored, so an eyebrow-only set maps to `None`.
pub fn categorize(signals: &BTreeSet<SignalKind>) -> Result<Option<SignalCategory>, PersonaError> {
    if signals.is_empty() {
        return Err(PersonaError::EmptySignals);
    }
    let visual = signals.iter().any(|s| s.is_visual());
    let verbal = signals.contains(&SignalKind::Utterance);
    Ok(match (visual, verbal) {
        (true, false) => Some(SignalCategory::Visual),
        (false, true) => Some(SignalCategory::Verbal),
        (true, true) => Some(SignalCategory::Both),
        (false, false) => None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TauStatistic {
    pub subject_id: String,
    pub multimodal: usize,
    pub unimodal: usize,
    /// `multimodal / unimodal`; `None` when the subject has no unimodal
    /// instance, which excludes it from tests.
    pub tau: Option<f64>,
}

/// Ratio of multimodal (two or more signals) to unimodal instances per
/// subject, over categorized instances. Eyebrow signals are not counted.
/// Sorted by subject id.
pub fn tau_per_subject(instances: &[ConsensusInstance]) -> Vec<TauStatistic> {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for inst in instances {
        if !matches!(categorize(&inst.signals), Ok(Some(_))) {
            continue;
        }
        let e = counts.entry(&inst.subject_id).or_default();
        if inst.signals.iter().filter(|s| !s.is_eyebrow()).count() >= 2 {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(s, (m, u))| TauStatistic {
            subject_id: s.to_string(),
            multimodal: m,
            unimodal: u,
            tau: (u > 0).then(|| m as f64 / u as f64),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitRule {
    /// Lower half by score (ties broken by subject id) are introverts; with
    /// an odd count the middle subject joins the extroverts.
    Median,
    /// Extrovert iff score > threshold.
    Threshold(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtraversionTest {
    pub introverts: Vec<String>,
    pub extroverts: Vec<String>,
    pub ks: KsResult,
}

/// Two-sample K-S test of tau between introverts and extroverts. Subjects
/// with undefined tau are skipped.
pub fn extraversion_ks(
    taus: &[TauStatistic],
    scores: &BTreeMap<String, f64>,
    rule: SplitRule,
) -> Result<ExtraversionTest, PersonaError> {
    let mut subjects: Vec<(&str, f64, f64)> = Vec::new();
    for t in taus {
        let Some(tau) = t.tau else { continue };
        let score = *scores.get(&t.subject_id).ok_or_else(|| PersonaError::MissingScore(t.subject_id.clone()))?;
        subjects.push((&t.subject_id, score, tau));
    }
    subjects.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let cut = match rule {
        SplitRule::Median => subjects.len() / 2,
        SplitRule::Threshold(th) => subjects.iter().take_while(|s| s.1 <= th).count(),
    };
    let (lo, hi) = subjects.split_at(cut);
    if lo.is_empty() || hi.is_empty() {
        return Err(PersonaError::DegenerateSplit { introverts: lo.len(), extroverts: hi.len() });
    }
    let a: Vec<f64> = lo.iter().map(|s| s.2).collect();
    let b: Vec<f64> = hi.iter().map(|s| s.2).collect();
    Ok(ExtraversionTest {
        introverts: lo.iter().map(|s| s.0.to_string()).collect(),
        extroverts: hi.iter().map(|s| s.0.to_string()).collect(),
        ks: ks_two_sample(&a, &b)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Extraversion {
    Introvert,
    Extrovert,
}

impl Extraversion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Extraversion::Introvert => "introvert",
            Extraversion::Extrovert => "extrovert",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "introvert" => Some(Extraversion::Introvert),
            "extrovert" => Some(Extraversion::Extrovert),
            _ => None,
        }
    }
}

/// A signal combination with its probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Combo {
    pub signals: Vec<SignalKind>,
    pub p: f64,
}

impl Combo {
    pub fn new(signals: &[SignalKind], p: f64) -> Self {
        Self { signals: signals.to_vec(), p }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PersonaProfile {
    pub label: Extraversion,
    pub p_multimodal: f64,
    pub p_unimodal: f64,
    pub visual_unimodal: Vec<Combo>,
    pub visual_multimodal: Vec<Combo>,
    /// Used for the Both category and the multimodal Verbal branch.
    pub verbal_multimodal: Vec<Combo>,
    pub utterance_tokens: Vec<(String, f64)>,
}

impl PersonaProfile {
    pub fn with_multimodal(label: Extraversion, p_multimodal: f64) -> Self {
        use SignalKind::*;
        Self {
            label,
            p_multimodal,
            p_unimodal: 1.0 - p_multimodal,
            visual_unimodal: vec![
                Combo::new(&[Nod], 0.83),
                Combo::new(&[HeadShake], 0.08),
                Combo::new(&[MouthSmile], 0.09),
            ],
            visual_multimodal: vec![Combo::new(&[Nod, MouthSmile], 0.60), Combo::new(&[HeadShake, MouthSmile], 0.40)],
            verbal_multimodal: vec![
                Combo::new(&[Nod, Utterance], 0.80),
                Combo::new(&[MouthSmile, Utterance], 0.13),
                Combo::new(&[HeadShake, Utterance], 0.05),
                Combo::new(&[HeadShake, Utterance, MouthSmile], 0.01),
                Combo::new(&[Nod, Utterance, MouthSmile], 0.01),
            ],
            utterance_tokens: ["okay", "hmm", "haan"].iter().map(|t| (t.to_string(), 1.0 / 3.0)).collect(),
        }
    }

    pub fn extrovert() -> Self {
        Self::with_multimodal(Extraversion::Extrovert, 0.51)
    }

    pub fn introvert() -> Self {
        Self::with_multimodal(Extraversion::Introvert, 0.35)
    }

    pub fn for_label(label: Extraversion) -> Self {
        match label {
            Extraversion::Introvert => Self::introvert(),
            Extraversion::Extrovert => Self::extrovert(),
        }
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        let bad = |m: String| Err(PersonaError::Profile { profile: self.label.as_str().into(), message: m });
        let ok_p = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        if !ok_p(self.p_multimodal) || !ok_p(self.p_unimodal) {
            return bad("branch probabilities must lie in [0, 1]".into());
        }
        if (self.p_multimodal + self.p_unimodal - 1.0).abs() > TABLE_TOL {
            return bad("p_multimodal + p_unimodal must equal 1".into());
        }
        let tables = [
            ("visual_unimodal", &self.visual_unimodal),
            ("visual_multimodal", &self.visual_multimodal),
            ("verbal_multimodal", &self.verbal_multimodal),
        ];
        for (name, table) in tables {
            if table.is_empty() {
                return bad(alloc::format!("{name} is empty"));
            }
            if table.iter().any(|c| !ok_p(c.p) || c.signals.is_empty()) {
                return bad(alloc::format!("{name} has an invalid entry"));
            }
            let sum: f64 = table.iter().map(|c| c.p).sum();
            if (sum - 1.0).abs() > TABLE_TOL {
                return bad(alloc::format!("{name} sums to {sum}"));
            }
        }
        let set = |c: &Combo| c.signals.iter().copied().collect::<BTreeSet<_>>();
        if self
            .visual_unimodal
            .iter()
            .chain(&self.visual_multimodal)
            .any(|c| !matches!(categorize(&set(c)), Ok(Some(SignalCategory::Visual))))
        {
            return bad("visual tables may only hold visual signals".into());
        }
        if self.verbal_multimodal.iter().any(|c| !matches!(categorize(&set(c)), Ok(Some(SignalCategory::Both)))) {
            return bad("verbal_multimodal entries need an utterance and a visual signal".into());
        }
        if self.utterance_tokens.is_empty() || self.utterance_tokens.iter().any(|t| !ok_p(t.1)) {
            return bad("utterance_tokens must be a non-empty distribution".into());
        }
        let sum: f64 = self.utterance_tokens.iter().map(|t| t.1).sum();
        if (sum - 1.0).abs() > TABLE_TOL {
            return bad(alloc::format!("utterance_tokens sums to {sum}"));
        }
        Ok(())
    }
}

/// Index of the first cumulative probability exceeding `u`; rounding slack
/// at the top falls to the last entry.
pub fn inverse_transform(probs: impl IntoIterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.into_iter().enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

#[derive(Clone, Debug, PartialEq)]
pub struct Response {
    pub category: SignalCategory,
    pub signals: BTreeSet<SignalKind>,
    pub utterance_token: Option<String>,
    /// Outcome of the unimodal/multimodal draw; `None` for Both, which has
    /// no such stage.
    pub multimodal: Option<bool>,
}

/// Two-stage draw with one uniform per stage, taken from `uniform`: Visual
/// and Verbal first choose the multimodal branch with probability
/// `p_multimodal`, then draw a combination; Both draws from the verbal
/// multimodal table directly. Any response containing an utterance draws a
/// token in a final stage.
pub fn sample_response_with(
    profile: &PersonaProfile,
    category: SignalCategory,
    mut uniform: impl FnMut() -> f64,
) -> Response {
    let pick = |table: &[Combo], u: f64| -> BTreeSet<SignalKind> {
        table[inverse_transform(table.iter().map(|c| c.p), u)].signals.iter().copied().collect()
    };
    let (signals, multimodal) = match category {
        SignalCategory::Both => (pick(&profile.verbal_multimodal, uniform()), None),
        SignalCategory::Visual => {
            let multi = uniform() < profile.p_multimodal;
            let table = if multi { &profile.visual_multimodal } else { &profile.visual_unimodal };
            (pick(table, uniform()), Some(multi))
        }
        SignalCategory::Verbal => {
            let multi = uniform() < profile.p_multimodal;
            if multi {
                (pick(&profile.verbal_multimodal, uniform()), Some(true))
            } else {
                ([SignalKind::Utterance].into_iter().collect(), Some(false))
            }
        }
    };
    let utterance_token = signals.contains(&SignalKind::Utterance).then(|| {
        let i = inverse_transform(profile.utterance_tokens.iter().map(|t| t.1), uniform());
        profile.utterance_tokens[i].0.clone()
    });
    Response { category, signals, utterance_token, multimodal }
}

pub fn sample_response(profile: &PersonaProfile, category: SignalCategory, rng: &mut impl RngCore) -> Response {
    sample_response_with(profile, category, || rng.gen::<f64>())
}
