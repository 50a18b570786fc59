use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use super::FeatureError;

pub const GAZE_STATES: [&str; 3] = ["left", "right", "blinking"];

pub const FAU_CHANNELS: [&str; 18] = [
    "AU01_r", "AU02_r", "AU04_r", "AU05_r", "AU06_r", "AU07_r", "AU09_r", "AU10_r", "AU12_r", "AU14_r", "AU15_r",
    "AU17_r", "AU20_r", "AU23_r", "AU25_r", "AU26_r", "AU28_r", "AU45_r",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    Visual,
    Prosodic,
}

/// Which modalities feed a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    Visual,
    Prosodic,
    #[default]
    Multimodal,
}

impl FeatureSet {
    pub fn includes(&self, m: Modality) -> bool {
        match self {
            FeatureSet::Visual => m == Modality::Visual,
            FeatureSet::Prosodic => m == Modality::Prosodic,
            FeatureSet::Multimodal => true,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureSet::Visual => "visual",
            FeatureSet::Prosodic => "prosodic",
            FeatureSet::Multimodal => "multimodal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "visual" => Some(FeatureSet::Visual),
            "prosodic" | "audio" => Some(FeatureSet::Prosodic),
            "multimodal" => Some(FeatureSet::Multimodal),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChannelKind {
    Continuous,
    /// 0/1 indicator, aggregated like a continuous channel.
    Binary,
    /// Closed value set; frames store the category index.
    Categorical(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub name: String,
    pub kind: ChannelKind,
    pub modality: Modality,
}

/// Ordered channel layout of a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSchema {
    channels: Vec<Channel>,
}

impl FeatureSchema {
    pub fn new(channels: Vec<Channel>) -> Result<Self, FeatureError> {
        for (i, c) in channels.iter().enumerate() {
            if channels[..i].iter().any(|o| o.name == c.name) {
                return Err(FeatureError::UnknownChannel(format!("{} (duplicate)", c.name)));
            }
            if let ChannelKind::Categorical(values) = &c.kind {
                if values.is_empty() {
                    return Err(FeatureError::UnknownChannel(format!("{} (no categories)", c.name)));
                }
            }
        }
        Ok(Self { channels })
    }

    /// The 45-column layout: 18 facial action units, gaze, head motion,
    /// blink rate, pupil position, smile ratio, pitch, energy, 13 MFCCs and
    /// voice activity.
    pub fn standard() -> Self {
        let cont = |name: &str, modality| Channel { name: name.to_string(), kind: ChannelKind::Continuous, modality };
        let mut ch: Vec<Channel> = FAU_CHANNELS.iter().map(|n| cont(n, Modality::Visual)).collect();
        ch.push(cont("gaze_vel", Modality::Visual));
        ch.push(cont("gaze_acc", Modality::Visual));
        ch.push(Channel {
            name: "gaze_state".into(),
            kind: ChannelKind::Categorical(GAZE_STATES.iter().map(|s| s.to_string()).collect()),
            modality: Modality::Visual,
        });
        for n in
            ["head_vel_T", "head_acc_T", "head_vel_R", "head_acc_R", "blink_rate", "pupil_x", "pupil_y", "smile_ratio"]
        {
            ch.push(cont(n, Modality::Visual));
        }
        ch.push(cont("f0", Modality::Prosodic));
        ch.push(cont("energy", Modality::Prosodic));
        for i in 1..=13 {
            ch.push(cont(&format!("mfcc_{i}"), Modality::Prosodic));
        }
        ch.push(Channel { name: "voice_activity".into(), kind: ChannelKind::Binary, modality: Modality::Prosodic });
        Self::new(ch).expect("standard schema is valid")
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// Columns per frame.
    pub fn width(&self) -> usize {
        self.channels.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, FeatureError> {
        self.channels.iter().position(|c| c.name == name).ok_or_else(|| FeatureError::UnknownChannel(name.into()))
    }

    /// Names of the aggregate dimensions for the given feature set, in order.
    pub fn aggregate_names(&self, set: FeatureSet) -> Vec<String> {
        let mut out = Vec::new();
        for c in self.channels.iter().filter(|c| set.includes(c.modality)) {
            match &c.kind {
                ChannelKind::Continuous | ChannelKind::Binary => {
                    out.push(format!("{}.mean", c.name));
                    out.push(format!("{}.std", c.name));
                }
                ChannelKind::Categorical(values) => {
                    out.extend(values.iter().map(|v| format!("{}.{}", c.name, v)));
                }
            }
        }
        out
    }

    /// For each aggregate dimension, whether it is an occupancy fraction.
    pub fn occupancy_mask(&self, set: FeatureSet) -> Vec<bool> {
        let mut out = Vec::new();
        for c in self.channels.iter().filter(|c| set.includes(c.modality)) {
            match &c.kind {
                ChannelKind::Continuous | ChannelKind::Binary => out.extend([false, false]),
                ChannelKind::Categorical(values) => out.extend(vec![true; values.len()]),
            }
        }
        out
    }

    pub fn aggregate_dim(&self, set: FeatureSet) -> usize {
        self.occupancy_mask(set).len()
    }

    /// Input channels of a series model: categorical channels one-hot encoded.
    pub fn series_width(&self, set: FeatureSet) -> usize {
        self.channels
            .iter()
            .filter(|c| set.includes(c.modality))
            .map(|c| match &c.kind {
                ChannelKind::Categorical(v) => v.len(),
                _ => 1,
            })
            .sum()
    }
}
