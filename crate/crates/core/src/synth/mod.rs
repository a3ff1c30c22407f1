//! Synthetic corridor channels with known ground truth.
//!
//! [`geometry`] places a line-of-sight tap and a corridor-end reflection,
//! [`sounder`] turns tap sets into PN-probed baseband records, and
//! [`campaign`] writes complete capture trees with a `truth.json` sidecar.

pub mod campaign;
pub mod geometry;
pub mod rng;
pub mod sounder;

pub use campaign::{generate_campaign, pl_samples, BandTruth, PlTruth, ScenarioTruth, TruthModel, TruthSidecar};
pub use geometry::{corridor_taps, reflection_excess_delay_s, CorridorGeometry, Tap, TapSet};
pub use sounder::{generate_snapshots, ReferenceWaveform, SounderConfig};
