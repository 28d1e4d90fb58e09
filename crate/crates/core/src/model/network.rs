use std::sync::Arc;

use super::gru::{sigmoid, GruLayer, GruScratch};
use super::{ModelWeights, Variant, CONTEXT_FRAMES};
use crate::complexity::{NoOps, Ops};
use crate::error::Result;
use crate::features::{FeatureFrame, NUM_BANDS};

/// Per-band gains in `[0, 1]` for one hop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mask {
    pub gains: [f32; NUM_BANDS],
    pub hop_index: u64,
}

/// Separate op sinks for the three network stages.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct StageOps<O> {
    pub gru1: O,
    pub gru2: O,
    pub output: O,
}

/// Recurrent and context state of one stream.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub h1: Vec<f32>,
    pub h2: Vec<f32>,
    /// Last three context vectors, oldest first, concatenated: layer-1
    /// outputs (HC) or raw features (C). Slots before stream start are zero.
    pub context: Vec<f32>,
    pub frames_seen: u64,
}

/// Layers shared across streams; immutable after construction.
#[derive(Debug)]
struct Layers {
    weights: Arc<ModelWeights>,
    gru1: GruLayer,
    gru2: GruLayer,
}

/// Streaming mask predictor for one stream.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Arc<Layers>,
    state: ModelState,
    h_next1: Vec<f32>,
    h_next2: Vec<f32>,
    scratch1: GruScratch,
    scratch2: GruScratch,
}

impl Network {
    pub fn new(weights: Arc<ModelWeights>) -> Result<Self> {
        weights.validate()?;
        let gru1 = GruLayer::new(weights.gru1.clone())?;
        let gru2 = GruLayer::new(weights.gru2.clone())?;
        let a = weights.arch;
        let slot = match a.variant {
            Variant::Hierarchical => a.hidden1,
            Variant::EarlyFusion => a.feature_dim,
        };
        Ok(Self {
            state: ModelState {
                h1: vec![0.0; a.hidden1],
                h2: vec![0.0; a.hidden2],
                context: vec![0.0; CONTEXT_FRAMES * slot],
                frames_seen: 0,
            },
            h_next1: vec![0.0; a.hidden1],
            h_next2: vec![0.0; a.hidden2],
            scratch1: GruScratch::new(a.hidden1),
            scratch2: GruScratch::new(a.hidden2),
            layers: Arc::new(Layers {
                weights,
                gru1,
                gru2,
            }),
        })
    }

    pub fn weights(&self) -> &Arc<ModelWeights> {
        &self.layers.weights
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    /// Back to stream start; weights are kept.
    pub fn reset(&mut self) {
        self.state.h1.fill(0.0);
        self.state.h2.fill(0.0);
        self.state.context.fill(0.0);
        self.state.frames_seen = 0;
    }

    /// Consumes the features of hop `t` and returns the mask of hop `t - 1`,
    /// or `None` for the first frame after a reset.
    pub fn push_frame(&mut self, feat: &FeatureFrame) -> Option<Mask> {
        self.push_frame_counted(feat, &mut StageOps::<NoOps>::default())
    }

    /// [`Network::push_frame`] that records every arithmetic operation it
    /// executes into `ops`.
    pub fn push_frame_counted<O: Ops>(
        &mut self,
        feat: &FeatureFrame,
        ops: &mut StageOps<O>,
    ) -> Option<Mask> {
        let layers = &*self.layers;
        let st = &mut self.state;
        st.frames_seen += 1;
        let slot = st.context.len() / CONTEXT_FRAMES;
        st.context.copy_within(slot.., 0);
        let newest = st.context.len() - slot;

        match layers.weights.arch.variant {
            Variant::Hierarchical => {
                layers.gru1.step(
                    &feat.values,
                    &st.h1,
                    &mut self.h_next1,
                    &mut self.scratch1,
                    &mut ops.gru1,
                );
                std::mem::swap(&mut st.h1, &mut self.h_next1);
                st.context[newest..].copy_from_slice(&st.h1);
                if st.frames_seen < 2 {
                    return None;
                }
                layers.gru2.step(
                    &st.context,
                    &st.h2,
                    &mut self.h_next2,
                    &mut self.scratch2,
                    &mut ops.gru2,
                );
            }
            Variant::EarlyFusion => {
                st.context[newest..].copy_from_slice(&feat.values);
                if st.frames_seen < 2 {
                    return None;
                }
                layers.gru1.step(
                    &st.context,
                    &st.h1,
                    &mut self.h_next1,
                    &mut self.scratch1,
                    &mut ops.gru1,
                );
                std::mem::swap(&mut st.h1, &mut self.h_next1);
                layers.gru2.step(
                    &st.h1,
                    &st.h2,
                    &mut self.h_next2,
                    &mut self.scratch2,
                    &mut ops.gru2,
                );
            }
        }
        std::mem::swap(&mut st.h2, &mut self.h_next2);

        let w = &layers.weights;
        let n2 = w.arch.hidden2;
        let mut gains = [0.0f32; NUM_BANDS];
        for (k, g) in gains.iter_mut().enumerate() {
            let mut acc = w.out_bias[k];
            for (wk, hv) in w.out_kernel[k * n2..(k + 1) * n2].iter().zip(&st.h2) {
                acc += wk * hv;
                ops.output.mul(1);
                ops.output.add(1);
            }
            *g = sigmoid(acc);
            ops.output.lookup(1);
        }
        Some(Mask {
            gains,
            hop_index: feat.hop_index.saturating_sub(1),
        })
    }

    /// Runs a whole feature sequence. Equivalent to calling
    /// [`Network::push_frame`] per frame.
    pub fn run_sequence(&mut self, frames: &[FeatureFrame]) -> Vec<Mask> {
        frames.iter().filter_map(|f| self.push_frame(f)).collect()
    }
}
