//! Short-time objective intelligibility.
//!
//! Standard parameterization: 10 kHz analysis rate, 256-sample Hann frames
//! with 50 % overlap, 512-point FFT, 15 one-third-octave bands from 150 Hz,
//! 30-frame (384 ms) segments, -15 dB clipping, and removal of frames more
//! than 40 dB below the loudest reference frame.

use realfft::RealFftPlanner;

use super::resample::resample;
use crate::error::{invalid, Result};

const FS: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = FRAME / 2;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
const SEGMENT: usize = 30;
const BETA_DB: f64 = -15.0;
/// Silent-frame threshold below the most energetic reference frame.
pub const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

/// Hann window of length `FRAME + 2` with the zero end points dropped.
fn window() -> Vec<f64> {
    let n = FRAME + 2;
    (1..=FRAME)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Frame start offsets, last partial frame excluded.
fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(FRAME)).step_by(HOP)
}

fn remove_silent_frames(x: &[f64], y: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let norm = x[s..s + FRAME]
                .iter()
                .zip(w)
                .map(|(v, w)| (v * w) * (v * w))
                .sum::<f64>()
                .sqrt();
            20.0 * (norm + EPS).log10()
        })
        .collect();
    let max = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, &e)| e > max - DYN_RANGE_DB)
        .map(|(&s, _)| s)
        .collect();
    if keep.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let out_len = (keep.len() - 1) * HOP + FRAME;
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (j, &s) in keep.iter().enumerate() {
        let o = j * HOP;
        for i in 0..FRAME {
            xs[o + i] += x[s + i] * w[i];
            ys[o + i] += y[s + i] * w[i];
        }
    }
    (xs, ys)
}

/// One-third-octave band edges as FFT bin ranges.
fn third_octave_bins() -> [(usize, usize); BANDS] {
    let freqs: Vec<f64> = (0..=NFFT / 2)
        .map(|k| k as f64 * FS as f64 / NFFT as f64)
        .collect();
    let nearest = |f: f64| {
        freqs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - f).powi(2).total_cmp(&(b.1 - f).powi(2)))
            .map(|(i, _)| i)
            .unwrap()
    };
    let mut bins = [(0, 0); BANDS];
    for (k, b) in bins.iter_mut().enumerate() {
        let k = k as f64;
        let lo = MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
        let hi = MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
        *b = (nearest(lo), nearest(hi));
    }
    bins
}

/// Band envelopes, `BANDS x frames`.
fn band_envelopes(x: &[f64], w: &[f64], bands: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(NFFT);
    let mut input = vec![0.0; NFFT];
    let mut spec = fft.make_output_vec();
    let mut out = vec![Vec::new(); bands.len()];
    for s in frame_starts(x.len()) {
        input.fill(0.0);
        for i in 0..FRAME {
            input[i] = x[s + i] * w[i];
        }
        fft.process(&mut input, &mut spec).expect("fixed fft size");
        for (b, &(lo, hi)) in bands.iter().enumerate() {
            let p: f64 = spec[lo..hi].iter().map(|c| c.norm_sqr()).sum();
            out[b].push(p.sqrt());
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// STOI of `estimate` against `reference`, both at `sample_rate` and of
/// equal length.
pub fn stoi(estimate: &[f32], reference: &[f32], sample_rate: u32) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(invalid(format!(
            "stoi needs equal lengths, got {} and {}",
            estimate.len(),
            reference.len()
        )));
    }
    if sample_rate == 0 {
        return Err(invalid("sample rate must be positive"));
    }
    let min_len = (sample_rate as usize * SEGMENT * HOP) / FS as usize;
    if reference.len() < min_len {
        return Err(invalid(format!(
            "stoi needs at least 384 ms of signal ({min_len} samples at {sample_rate} Hz), got {}",
            reference.len()
        )));
    }
    let x64: Vec<f64> = reference.iter().map(|&v| v as f64).collect();
    let y64: Vec<f64> = estimate.iter().map(|&v| v as f64).collect();
    let x = resample(&x64, sample_rate, FS);
    let y = resample(&y64, sample_rate, FS);

    let w = window();
    let (x, y) = remove_silent_frames(&x, &y, &w);
    let bands = third_octave_bins();
    let x_tob = band_envelopes(&x, &w, &bands);
    let y_tob = band_envelopes(&y, &w, &bands);
    let frames = x_tob[0].len();
    if frames < SEGMENT {
        return Err(invalid(format!(
            "only {frames} non-silent frames, stoi needs {SEGMENT} (384 ms)"
        )));
    }

    let clip = 10f64.powf(-BETA_DB / 20.0);
    let segments = frames - SEGMENT + 1;
    let mut total = 0.0;
    let mut xs = [0.0; SEGMENT];
    let mut ys = [0.0; SEGMENT];
    for b in 0..BANDS {
        for m in SEGMENT..=frames {
            xs.copy_from_slice(&x_tob[b][m - SEGMENT..m]);
            ys.copy_from_slice(&y_tob[b][m - SEGMENT..m]);
            let scale = norm(&xs) / (norm(&ys) + EPS);
            for (yv, xv) in ys.iter_mut().zip(&xs) {
                *yv = (*yv * scale).min(xv * (1.0 + clip));
            }
            let mx = xs.iter().sum::<f64>() / SEGMENT as f64;
            let my = ys.iter().sum::<f64>() / SEGMENT as f64;
            xs.iter_mut().for_each(|v| *v -= mx);
            ys.iter_mut().for_each(|v| *v -= my);
            let nx = norm(&xs) + EPS;
            let ny = norm(&ys) + EPS;
            total += xs.iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>() / (nx * ny);
        }
    }
    Ok((total / (BANDS * segments) as f64).clamp(0.0, 1.0))
}
