//! Listener backchannel modelling: annotation consensus, negative sampling,
//! multimodal windowing, a small classifier zoo, self-training, evaluation
//! protocols, personality-contingent signal sampling and a synthetic corpus
//! generator.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs and an explicit seed; file formats, the CLI and
//! thread pools live in the companion `backchannel` crate.
#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod annotations;
pub mod corpus;
pub mod evaluation;
pub mod features;
pub mod learners;
pub mod persona;
pub mod sampling;
pub mod seed;
pub mod selftrain;
pub mod synth;

pub use annotations::{CoderAnnotation, ConsensusInstance, SignalKind, TimeInterval};
pub use features::{AggregateVector, FeatureSchema, FeatureStream, FeatureWindow, Role};
pub use learners::{ClassifierKind, ClassifierSpec, FittedModel, Inputs, ProbPrediction, Series};
pub use persona::{PersonaProfile, SignalCategory};
pub use selftrain::{PseudoLabelLedger, SelfTrainConfig};
