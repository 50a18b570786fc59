use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ChannelKind, FeatureError, FeatureSchema, FeatureSet, FeatureWindow};

/// Fixed-length summary of a window: mean and population standard deviation
/// per continuous or binary channel, occupancy fraction per category of each
/// categorical channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateVector(pub Vec<f64>);

/// Summarizes `window` over the channels of `set`.
///
/// Values are sorted before summation, so the result is bitwise independent
/// of frame order.
pub fn aggregate(
    window: &FeatureWindow,
    schema: &FeatureSchema,
    set: FeatureSet,
) -> Result<AggregateVector, FeatureError> {
    if window.width() != schema.width() {
        return Err(FeatureError::Width { got: window.width(), expected: schema.width() });
    }
    let t = window.n_frames();
    if t == 0 {
        return Err(FeatureError::EmptyWindow(window.instance_id.clone()));
    }
    let mut out = Vec::with_capacity(schema.aggregate_dim(set));
    let mut column = Vec::with_capacity(t);
    for (ci, c) in schema.channels().iter().enumerate() {
        if !set.includes(c.modality) {
            continue;
        }
        column.clear();
        column.extend((0..t).map(|i| window.frame(i)[ci]));
        match &c.kind {
            ChannelKind::Continuous | ChannelKind::Binary => {
                column.sort_by(f64::total_cmp);
                let mean = column.iter().sum::<f64>() / t as f64;
                let mut dev: Vec<f64> = column.iter().map(|v| (v - mean) * (v - mean)).collect();
                dev.sort_by(f64::total_cmp);
                let var = dev.iter().sum::<f64>() / t as f64;
                out.push(mean);
                out.push(libm::sqrt(var));
            }
            ChannelKind::Categorical(values) => {
                let mut counts = alloc::vec![0usize; values.len()];
                for v in &column {
                    counts[*v as usize] += 1;
                }
                out.extend(counts.into_iter().map(|n| n as f64 / t as f64));
            }
        }
    }
    Ok(AggregateVector(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::TimeInterval;
    use crate::features::{Channel, Modality, Role};
    use alloc::vec;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            Channel { name: "x".into(), kind: ChannelKind::Continuous, modality: Modality::Visual },
            Channel {
                name: "g".into(),
                kind: ChannelKind::Categorical(vec!["left".into(), "right".into(), "blinking".into()]),
                modality: Modality::Visual,
            },
            Channel { name: "va".into(), kind: ChannelKind::Binary, modality: Modality::Prosodic },
        ])
        .unwrap()
    }

    fn window(frames: Vec<f64>) -> FeatureWindow {
        FeatureWindow::new("i".into(), Role::Listener, TimeInterval::new(0.0, 1.0).unwrap(), 3, frames)
    }

    #[test]
    fn hand_cases() {
        let s = schema();
        let a = aggregate(&window(vec![2.0, 0.0, 0.0, 2.0, 0.0, 0.0]), &s, FeatureSet::Multimodal).unwrap();
        assert_eq!(a.0, vec![2.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let a = aggregate(&window(vec![0.0, 0.0, 1.0, 1.0, 1.0, 0.0]), &s, FeatureSet::Multimodal).unwrap();
        assert_eq!(a.0, vec![0.5, 0.5, 0.5, 0.5, 0.0, 0.5, 0.5]);
        let a = aggregate(&window(vec![0.0, 0.0, 1.0, 1.0, 1.0, 0.0]), &s, FeatureSet::Prosodic).unwrap();
        assert_eq!(a.0, vec![0.5, 0.5]);
    }

    #[test]
    fn empty_window_is_an_error() {
        assert!(aggregate(&window(vec![]), &schema(), FeatureSet::Multimodal).is_err());
    }
}
