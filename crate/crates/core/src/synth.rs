//! Deterministic synthetic test signals at 24 kHz.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::SAMPLE_RATE;

/// Gaussian white noise with standard deviation `std`.
pub fn white_noise(len: usize, std: f32, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std as f64).expect("std must be finite and >= 0");
    (0..len).map(|_| normal.sample(&mut rng) as f32).collect()
}

/// White noise through a two-pole low-pass, giving a long-term spectrum
/// that falls off above roughly 500 Hz like averaged speech.
pub fn speech_shaped_noise(len: usize, seed: u64) -> Vec<f32> {
    let white = white_noise(len, 1.0, seed);
    let a = (-2.0 * PI * 500.0 / SAMPLE_RATE as f64).exp();
    let (mut y1, mut y2) = (0.0f64, 0.0f64);
    let mut out: Vec<f64> = white
        .iter()
        .map(|&x| {
            y1 = a * y1 + (1.0 - a) * x as f64;
            y2 = a * y2 + (1.0 - a) * y1;
            y2
        })
        .collect();
    normalize_rms(&mut out, 0.1);
    out.into_iter().map(|v| v as f32).collect()
}

/// Voiced-speech stand-in: a harmonic source with a wandering pitch, three
/// formant-like resonances, syllable-rate amplitude modulation and short
/// pauses. RMS is 0.1.
pub fn speech_like(len: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = SAMPLE_RATE as f64;
    let f0_base = rng.random_range(100.0..180.0);
    let vibrato = rng.random_range(0.5..1.5);
    let formants: [(f64, f64); 3] = [
        (rng.random_range(500.0..800.0), 120.0),
        (rng.random_range(1100.0..1700.0), 160.0),
        (rng.random_range(2300.0..2900.0), 250.0),
    ];
    // syllables of 150-300 ms separated by 40-150 ms gaps
    let mut envelope = vec![0.0f64; len];
    let mut pos = 0usize;
    while pos < len {
        let syl = (rng.random_range(0.15..0.30) * fs) as usize;
        let gap = (rng.random_range(0.04..0.15) * fs) as usize;
        let peak = rng.random_range(0.5..1.0);
        for i in 0..syl.min(len - pos) {
            envelope[pos + i] = peak * (PI * i as f64 / syl as f64).sin().powi(2);
        }
        pos += syl + gap;
    }
    let max_harm = 40;
    let mut phase = 0.0f64;
    let mut out = vec![0.0f64; len];
    for (n, o) in out.iter_mut().enumerate() {
        let t = n as f64 / fs;
        let f0 = f0_base * (1.0 + 0.12 * (2.0 * PI * vibrato * t).sin());
        phase += 2.0 * PI * f0 / fs;
        if envelope[n] == 0.0 {
            continue;
        }
        let mut s = 0.0;
        for h in 1..=max_harm {
            let f = h as f64 * f0;
            if f > 5000.0 {
                break;
            }
            let gain: f64 = formants
                .iter()
                .map(|&(fc, bw)| 1.0 / (1.0 + ((f - fc) / bw).powi(2)))
                .sum::<f64>()
                + 0.02;
            s += gain * (h as f64 * phase).sin() / (h as f64).sqrt();
        }
        *o = envelope[n] * s;
    }
    normalize_rms(&mut out, 0.1);
    out.into_iter().map(|v| v as f32).collect()
}

fn normalize_rms(x: &mut [f64], target: f64) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v *= target / rms);
    }
}

/// Sine of `freq` Hz with peak amplitude `amp`.
pub fn sine(len: usize, freq: f64, amp: f32) -> Vec<f32> {
    (0..len)
        .map(|n| amp * (2.0 * PI * freq * n as f64 / SAMPLE_RATE as f64).sin() as f32)
        .collect()
}
