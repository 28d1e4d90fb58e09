//! Streaming low-latency noise reduction.
//!
//! The signal path runs once per 1 ms hop (24 samples at 24 kHz):
//!
//! ```text
//! samples -> fbank::Analyzer -> |X|^2 -> features (dB, running mean, 48->16 bands)
//!         -> model (two GRU layers + sigmoid) -> 16-band mask -> 49 bin gains
//!         -> buffered spectrum * gains -> fbank::Synthesizer -> samples
//! ```
//!
//! The network emits the mask for hop `t` after it has consumed hop `t + 1`,
//! so the end-to-end delay is the filter-bank delay plus one hop of lookahead.
//! See [`engine::latency_report`] for the full budget.
//!
//! Besides the engine, the crate carries the tooling used to check the
//! efficiency claims: parameter and FLOP accounting ([`complexity`]), an
//! instrumented model path that counts the arithmetic it actually executes,
//! and objective metrics ([`metrics`]).
//!
//! With the default `parallel` feature, batch operations (many independent
//! streams, many evaluation files) are spread over a rayon pool. Without it
//! the same functions run sequentially and produce identical results.

pub mod complexity;
pub mod engine;
mod error;
pub mod fbank;
pub mod features;
pub mod metrics;
pub mod mix;
pub mod model;
pub mod oracle;
pub mod par;
pub mod synth;
pub mod wav;

pub use engine::{Engine, EngineConfig, LatencyReport};
pub use error::{Error, Result};
pub use model::{ArchConfig, ModelWeights, Variant};

/// Sample rate the whole pipeline runs at.
pub const SAMPLE_RATE: u32 = 24_000;
/// Samples per hop (1 ms).
pub const HOP: usize = 24;
