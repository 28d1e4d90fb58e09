//! Ideal Wiener-filter band masks computed from separate speech and noise.
//!
//! Used as an upper-bound mask source: the mask for hop `t` is the
//! noisy-power-weighted average over each band of the per-bin ratio
//! `|S|^2 / (|S|^2 + |N|^2)`.

use crate::engine::{Engine, EngineConfig, PrecomputedMasks};
use crate::error::{invalid, Result};
use crate::fbank::{Analyzer, HOP_SAMPLES, USABLE_BINS};
use crate::features::{bark_layout, NUM_BANDS};

const DENOM_FLOOR: f64 = 1e-10;

/// Band masks for every complete hop of `clean + noise`.
pub fn wiener_band_masks(clean: &[f32], noise: &[f32]) -> Result<Vec<[f32; NUM_BANDS]>> {
    if clean.len() != noise.len() {
        return Err(invalid(format!(
            "clean and noise lengths differ: {} vs {}",
            clean.len(),
            noise.len()
        )));
    }
    let layout = bark_layout();
    let mut sa = Analyzer::<f32>::new();
    let mut na = Analyzer::<f32>::new();
    let mut ya = Analyzer::<f32>::new();
    let mut noisy = [0.0f32; HOP_SAMPLES];
    let mut masks = Vec::with_capacity(clean.len() / HOP_SAMPLES);
    for (s, n) in clean
        .chunks_exact(HOP_SAMPLES)
        .zip(noise.chunks_exact(HOP_SAMPLES))
    {
        for ((y, a), b) in noisy.iter_mut().zip(s).zip(n) {
            *y = a + b;
        }
        let ps = sa.analyze(s)?.power();
        let pn = na.analyze(n)?.power();
        let py = ya.analyze(&noisy)?.power();
        let mut num = [0.0f64; NUM_BANDS];
        let mut den = [0.0f64; NUM_BANDS];
        let mut plain = [0.0f64; NUM_BANDS];
        for k in 0..USABLE_BINS {
            let (s2, n2) = (ps[k] as f64, pn[k] as f64);
            let g = s2 / (s2 + n2).max(DENOM_FLOOR);
            let w = py[k] as f64;
            let b = layout.band_of_bin[k];
            num[b] += w * g;
            den[b] += w;
            plain[b] += g;
        }
        let mut m = [0.0f32; NUM_BANDS];
        for b in 0..NUM_BANDS {
            m[b] = if den[b] > 0.0 {
                num[b] / den[b]
            } else {
                plain[b] / layout.bins_per_band[b] as f64
            } as f32;
        }
        masks.push(m);
    }
    Ok(masks)
}

/// Runs `clean + noise` through an engine driven by the oracle masks.
/// Output lags the input by the engine's stream delay.
pub fn enhance_with_oracle(clean: &[f32], noise: &[f32], config: EngineConfig) -> Result<Vec<f32>> {
    let masks = wiener_band_masks(clean, noise)?;
    let noisy: Vec<f32> = clean.iter().zip(noise).map(|(a, b)| a + b).collect();
    let mut engine = Engine::with_mask_source(PrecomputedMasks::new(masks), config)?;
    engine.enhance(&noisy)
}
