//! Speech + noise mixing at a target SNR.

use crate::error::{invalid, Result};

/// SNR levels of the standard evaluation grid, in dB.
pub const SNR_GRID_DB: [f64; 5] = [-5.0, 0.0, 5.0, 10.0, 20.0];

pub fn power(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|&v| v as f64 * v as f64).sum::<f64>() / x.len() as f64
}

/// Noise scaled so that `10·log10(P_clean / P_noise) = snr_db`, using
/// full-signal mean power. Noise shorter than `clean` is repeated from its
/// start (plain wrap, no crossfade); longer noise is cut.
pub fn scaled_noise(clean: &[f32], noise: &[f32], snr_db: f64) -> Result<Vec<f32>> {
    if !snr_db.is_finite() {
        return Err(invalid(format!("snr must be finite, got {snr_db}")));
    }
    let pc = power(clean);
    if pc == 0.0 {
        return Err(invalid("clean signal is silent; SNR is undefined"));
    }
    if noise.is_empty() {
        return Err(invalid("noise signal is empty"));
    }
    let looped: Vec<f32> = noise.iter().copied().cycle().take(clean.len()).collect();
    let pn = power(&looped);
    if pn == 0.0 {
        return Err(invalid("noise signal is silent"));
    }
    let gain = (pc / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok(looped.iter().map(|&v| (v as f64 * gain) as f32).collect())
}

/// `clean + scaled noise`.
pub fn mix(clean: &[f32], noise: &[f32], snr_db: f64) -> Result<Vec<f32>> {
    let n = scaled_noise(clean, noise, snr_db)?;
    Ok(clean.iter().zip(&n).map(|(c, v)| c + v).collect())
}
