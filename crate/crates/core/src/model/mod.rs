//! Two-layer GRU mask predictor in hierarchical-context (HC) or
//! early-fusion context (C) arrangement.
//!
//! Both variants see one frame of past and one frame of future context. HC
//! feeds the concatenated layer-1 outputs for hops `t-1, t, t+1` to layer 2;
//! C feeds the concatenated input features for those hops to layer 1.

mod gru;
mod network;
mod weights;

pub use gru::{gru_step, GruLayer, GruScratch, GruWeights};
pub use network::{Mask, ModelState, Network, StageOps};
pub use weights::{MAGIC, VERSION};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::NUM_BANDS;

/// Frames of context on each side.
pub const CONTEXT: usize = 1;
const CONTEXT_FRAMES: usize = 2 * CONTEXT + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Context enters at layer 2.
    Hierarchical,
    /// Context enters at layer 1.
    EarlyFusion,
}

impl Variant {
    pub fn code(self) -> u8 {
        match self {
            Variant::Hierarchical => 0,
            Variant::EarlyFusion => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Variant::Hierarchical),
            1 => Some(Variant::EarlyFusion),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Hierarchical => "HC",
            Variant::EarlyFusion => "C",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hc" | "hc-rnn" | "hierarchical" => Ok(Variant::Hierarchical),
            "c" | "c-rnn" | "early" => Ok(Variant::EarlyFusion),
            other => Err(Error::InvalidArgument(format!(
                "unknown variant {other:?}, expected hc or c"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArchConfig {
    pub variant: Variant,
    pub hidden1: usize,
    pub hidden2: usize,
    pub feature_dim: usize,
    pub mask_dim: usize,
    pub context: usize,
}

impl ArchConfig {
    pub fn new(variant: Variant, hidden1: usize, hidden2: usize) -> Result<Self> {
        let arch = Self {
            variant,
            hidden1,
            hidden2,
            feature_dim: NUM_BANDS,
            mask_dim: NUM_BANDS,
            context: CONTEXT,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// HC arrangement with equal hidden sizes.
    pub fn hc(hidden: usize) -> Self {
        Self::new(Variant::Hierarchical, hidden, hidden).expect("hidden size must be nonzero")
    }

    /// C arrangement with equal hidden sizes.
    pub fn c(hidden: usize) -> Self {
        Self::new(Variant::EarlyFusion, hidden, hidden).expect("hidden size must be nonzero")
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::Validation(format!(
                "hidden sizes must be nonzero, got {} and {}",
                self.hidden1, self.hidden2
            )));
        }
        if self.feature_dim != NUM_BANDS || self.mask_dim != NUM_BANDS {
            return Err(Error::Validation(format!(
                "feature and mask dims must be {NUM_BANDS}, got {} and {}",
                self.feature_dim, self.mask_dim
            )));
        }
        if self.context != CONTEXT {
            return Err(Error::Validation(format!(
                "context must be {CONTEXT} frame, got {}",
                self.context
            )));
        }
        // keeps every tensor size comfortably inside u32 for the file format
        if self.hidden1 > 4096 || self.hidden2 > 4096 {
            return Err(Error::Validation(
                "hidden sizes above 4096 are not supported".into(),
            ));
        }
        Ok(())
    }

    pub fn layer1_input(&self) -> usize {
        match self.variant {
            Variant::Hierarchical => self.feature_dim,
            Variant::EarlyFusion => CONTEXT_FRAMES * self.feature_dim,
        }
    }

    pub fn layer2_input(&self) -> usize {
        match self.variant {
            Variant::Hierarchical => CONTEXT_FRAMES * self.hidden1,
            Variant::EarlyFusion => self.hidden1,
        }
    }
}

impl fmt::Display for ArchConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.hidden1 == self.hidden2 {
            write!(f, "{}({})", self.variant, self.hidden1)
        } else {
            write!(f, "{}({},{})", self.variant, self.hidden1, self.hidden2)
        }
    }
}

/// All trainable tensors plus the architecture they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub arch: ArchConfig,
    pub gru1: GruWeights,
    pub gru2: GruWeights,
    /// `mask_dim x hidden2`, row-major.
    pub out_kernel: Vec<f32>,
    pub out_bias: Vec<f32>,
}

impl ModelWeights {
    pub fn zeros(arch: ArchConfig) -> Self {
        Self {
            arch,
            gru1: GruWeights::zeros(arch.layer1_input(), arch.hidden1),
            gru2: GruWeights::zeros(arch.layer2_input(), arch.hidden2),
            out_kernel: vec![0.0; arch.mask_dim * arch.hidden2],
            out_bias: vec![0.0; arch.mask_dim],
        }
    }

    /// Uniform Glorot-style initialization from a fixed seed.
    pub fn random(arch: ArchConfig, seed: u64) -> Self {
        let mut w = Self::zeros(arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |v: &mut [f32], fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f32).sqrt();
            for x in v {
                *x = rng.random_range(-limit..limit);
            }
        };
        let (m1, n1) = (arch.layer1_input(), arch.hidden1);
        let (m2, n2) = (arch.layer2_input(), arch.hidden2);
        fill(&mut w.gru1.input_kernel, m1, n1);
        fill(&mut w.gru1.recurrent_kernel, n1, n1);
        fill(&mut w.gru2.input_kernel, m2, n2);
        fill(&mut w.gru2.recurrent_kernel, n2, n2);
        fill(&mut w.out_kernel, n2, arch.mask_dim);
        w
    }

    /// Weights whose output saturates to a constant mask: only the output
    /// bias is nonzero. `+100` gives a mask of exactly 1 in single precision.
    pub fn constant_mask(arch: ArchConfig, out_bias: f32) -> Self {
        let mut w = Self::zeros(arch);
        w.out_bias.fill(out_bias);
        w
    }

    pub fn param_count(&self) -> usize {
        self.gru1.len() + self.gru2.len() + self.out_kernel.len() + self.out_bias.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.gru1.validate()?;
        self.gru2.validate()?;
        let a = &self.arch;
        if self.gru1.input_size != a.layer1_input() || self.gru1.hidden_size != a.hidden1 {
            return Err(Error::Validation(format!(
                "layer 1 is {}x{}, {} needs {}x{}",
                self.gru1.input_size,
                self.gru1.hidden_size,
                a,
                a.layer1_input(),
                a.hidden1
            )));
        }
        if self.gru2.input_size != a.layer2_input() || self.gru2.hidden_size != a.hidden2 {
            return Err(Error::Validation(format!(
                "layer 2 is {}x{}, {} needs {}x{}",
                self.gru2.input_size,
                self.gru2.hidden_size,
                a,
                a.layer2_input(),
                a.hidden2
            )));
        }
        if self.out_kernel.len() != a.mask_dim * a.hidden2 {
            return Err(Error::Validation(format!(
                "out_kernel: expected {} values, found {}",
                a.mask_dim * a.hidden2,
                self.out_kernel.len()
            )));
        }
        if self.out_bias.len() != a.mask_dim {
            return Err(Error::Validation(format!(
                "out_bias: expected {} values, found {}",
                a.mask_dim,
                self.out_bias.len()
            )));
        }
        if let Some(bad) = self.values().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite weight {bad}")));
        }
        let expected = crate::complexity::param_count(a).total;
        if self.param_count() != expected {
            return Err(Error::Validation(format!(
                "{} values stored, {} requires {}",
                self.param_count(),
                a,
                expected
            )));
        }
        Ok(())
    }

    /// Every value in file order.
    pub(crate) fn values(&self) -> impl Iterator<Item = &f32> {
        self.gru1
            .values()
            .chain(self.gru2.values())
            .chain(&self.out_kernel)
            .chain(&self.out_bias)
    }
}
