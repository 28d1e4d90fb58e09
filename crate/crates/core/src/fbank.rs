//! Uniform WOLA analysis/synthesis filter bank.
//!
//! A 96-point real DFT is taken every 24 samples over a square-root periodic
//! Hann window. Synthesis applies the same window after the inverse DFT and
//! overlap-adds; the squared window sums to 2 over the four overlapping
//! frames, so the output is scaled by 1/2 and a unity spectrum reproduces the
//! input exactly, delayed by [`FbankConfig::algorithmic_delay`] samples.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::num_traits::Float;
use realfft::{ComplexToReal, FftNum, RealFftPlanner, RealToComplex};

use crate::error::{invalid, Result};

pub use realfft::num_complex::{Complex32, Complex64};

pub const SAMPLE_RATE_HZ: u32 = 24_000;
pub const HOP_SAMPLES: usize = 24;
pub const WINDOW_SAMPLES: usize = 96;
/// DC..Nyquist.
pub const DFT_BINS: usize = WINDOW_SAMPLES / 2 + 1;
/// Bins seen by the network (Nyquist excluded).
pub const USABLE_BINS: usize = DFT_BINS - 1;

const OVERLAP: usize = WINDOW_SAMPLES - HOP_SAMPLES;
/// Sum of the squared synthesis/analysis window over all hop shifts.
const COLA_GAIN: f64 = (WINDOW_SAMPLES / HOP_SAMPLES) as f64 / 2.0;

/// Floating point type the filter bank can run in.
pub trait Sample: FftNum + Float + Debug {
    fn lossy_from(v: f64) -> Self;
}

impl Sample for f32 {
    fn lossy_from(v: f64) -> Self {
        v as f32
    }
}

impl Sample for f64 {
    fn lossy_from(v: f64) -> Self {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FbankConfig {
    pub sample_rate_hz: u32,
    pub hop_samples: usize,
    pub window_samples: usize,
    pub dft_bins: usize,
    pub usable_bins: usize,
}

impl Default for FbankConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: SAMPLE_RATE_HZ,
            hop_samples: HOP_SAMPLES,
            window_samples: WINDOW_SAMPLES,
            dft_bins: DFT_BINS,
            usable_bins: USABLE_BINS,
        }
    }
}

impl FbankConfig {
    /// Spacing between bin centers in Hz.
    pub fn bin_spacing_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / (2.0 * (self.dft_bins - 1) as f64)
    }

    /// Analysis + synthesis round-trip delay in samples.
    ///
    /// A frame covers the newest `window_samples` inputs; after overlap-add
    /// the oldest hop of that frame is complete and is emitted, so an input
    /// sample leaves `window_samples - hop_samples` samples after it entered.
    pub fn algorithmic_delay(&self) -> usize {
        self.window_samples - self.hop_samples
    }

    pub fn algorithmic_delay_ms(&self) -> f64 {
        self.algorithmic_delay() as f64 * 1000.0 / self.sample_rate_hz as f64
    }

    pub fn hop_ms(&self) -> f64 {
        self.hop_samples as f64 * 1000.0 / self.sample_rate_hz as f64
    }
}

/// Square root of the periodic Hann window.
pub fn sqrt_hann<T: Sample>(len: usize) -> Vec<T> {
    (0..len)
        .map(|n| {
            let hann = 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos();
            T::lossy_from(hann.sqrt())
        })
        .collect()
}

/// One frame of the subband representation.
#[derive(Clone, Copy, PartialEq)]
pub struct Spectrum<T: Sample = f32> {
    pub bins: [Complex<T>; DFT_BINS],
    pub hop_index: u64,
}

impl<T: Sample> Spectrum<T> {
    pub fn zeros() -> Self {
        Self {
            bins: [Complex::new(T::zero(), T::zero()); DFT_BINS],
            hop_index: 0,
        }
    }

    pub fn from_bins(bins: &[Complex<T>], hop_index: u64) -> Result<Self> {
        if bins.len() != DFT_BINS {
            return Err(invalid(format!(
                "spectrum needs {DFT_BINS} bins, got {}",
                bins.len()
            )));
        }
        let mut spec = Self::zeros();
        spec.bins.copy_from_slice(bins);
        spec.hop_index = hop_index;
        Ok(spec)
    }

    /// `|X|^2` for each bin.
    pub fn power(&self) -> [T; DFT_BINS] {
        let mut out = [T::zero(); DFT_BINS];
        for (o, b) in out.iter_mut().zip(&self.bins) {
            *o = b.norm_sqr();
        }
        out
    }

    /// Multiplies every bin by a real gain.
    pub fn apply_gains(&mut self, gains: &[T; DFT_BINS]) {
        for (b, &g) in self.bins.iter_mut().zip(gains) {
            *b = b.scale(g);
        }
    }
}

impl<T: Sample> Debug for Spectrum<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectrum")
            .field("hop_index", &self.hop_index)
            .field("bins", &&self.bins[..])
            .finish()
    }
}

/// Analysis half of the filter bank. One per stream.
pub struct Analyzer<T: Sample = f32> {
    window: Vec<T>,
    buffer: [T; WINDOW_SAMPLES],
    frame: [T; WINDOW_SAMPLES],
    scratch: Vec<Complex<T>>,
    fft: Arc<dyn RealToComplex<T>>,
    hop_counter: u64,
}

impl<T: Sample> Analyzer<T> {
    pub fn new() -> Self {
        let fft = RealFftPlanner::<T>::new().plan_fft_forward(WINDOW_SAMPLES);
        let scratch = fft.make_scratch_vec();
        Self {
            window: sqrt_hann(WINDOW_SAMPLES),
            buffer: [T::zero(); WINDOW_SAMPLES],
            frame: [T::zero(); WINDOW_SAMPLES],
            scratch,
            fft,
            hop_counter: 0,
        }
    }

    /// Number of hops analyzed so far.
    pub fn hop_counter(&self) -> u64 {
        self.hop_counter
    }

    /// Pushes one hop of samples and returns the spectrum of the newest
    /// `WINDOW_SAMPLES` samples.
    pub fn analyze(&mut self, samples: &[T]) -> Result<Spectrum<T>> {
        let mut spec = Spectrum::zeros();
        self.analyze_into(samples, &mut spec)?;
        Ok(spec)
    }

    pub fn analyze_into(&mut self, samples: &[T], spec: &mut Spectrum<T>) -> Result<()> {
        if samples.len() != HOP_SAMPLES {
            return Err(invalid(format!(
                "analysis expects {HOP_SAMPLES} samples per hop, got {}",
                samples.len()
            )));
        }
        self.buffer.copy_within(HOP_SAMPLES.., 0);
        self.buffer[OVERLAP..].copy_from_slice(samples);
        for ((f, &x), &w) in self.frame.iter_mut().zip(&self.buffer).zip(&self.window) {
            *f = x * w;
        }
        self.fft
            .process_with_scratch(&mut self.frame, &mut spec.bins, &mut self.scratch)
            .expect("fft buffer sizes are fixed");
        spec.hop_index = self.hop_counter;
        self.hop_counter += 1;
        Ok(())
    }
}

impl<T: Sample> Default for Analyzer<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Synthesis half of the filter bank. One per stream.
pub struct Synthesizer<T: Sample = f32> {
    window: Vec<T>,
    overlap: [T; OVERLAP],
    spec: [Complex<T>; DFT_BINS],
    frame: [T; WINDOW_SAMPLES],
    out: [T; HOP_SAMPLES],
    scratch: Vec<Complex<T>>,
    ifft: Arc<dyn ComplexToReal<T>>,
    hop_counter: u64,
}

impl<T: Sample> Synthesizer<T> {
    pub fn new() -> Self {
        let ifft = RealFftPlanner::<T>::new().plan_fft_inverse(WINDOW_SAMPLES);
        let scratch = ifft.make_scratch_vec();
        // inverse DFT scaling and COLA renormalization folded into the window
        let scale = 1.0 / (WINDOW_SAMPLES as f64 * COLA_GAIN);
        let window = sqrt_hann::<f64>(WINDOW_SAMPLES)
            .into_iter()
            .map(|w| T::lossy_from(w * scale))
            .collect();
        Self {
            window,
            overlap: [T::zero(); OVERLAP],
            spec: [Complex::new(T::zero(), T::zero()); DFT_BINS],
            frame: [T::zero(); WINDOW_SAMPLES],
            out: [T::zero(); HOP_SAMPLES],
            scratch,
            ifft,
            hop_counter: 0,
        }
    }

    pub fn hop_counter(&self) -> u64 {
        self.hop_counter
    }

    /// Overlap-adds one frame and returns the `HOP_SAMPLES` completed samples.
    pub fn synthesize(&mut self, spec: &Spectrum<T>) -> &[T] {
        self.spec.copy_from_slice(&spec.bins);
        // real signal: DC and Nyquist must be real
        self.spec[0].im = T::zero();
        self.spec[DFT_BINS - 1].im = T::zero();
        self.ifft
            .process_with_scratch(&mut self.spec, &mut self.frame, &mut self.scratch)
            .expect("ifft buffer sizes are fixed");
        for (f, &w) in self.frame.iter_mut().zip(&self.window) {
            *f = *f * w;
        }
        for i in 0..HOP_SAMPLES {
            self.out[i] = self.overlap[i] + self.frame[i];
        }
        for i in 0..OVERLAP {
            let carried = if i + HOP_SAMPLES < OVERLAP {
                self.overlap[i + HOP_SAMPLES]
            } else {
                T::zero()
            };
            self.overlap[i] = carried + self.frame[i + HOP_SAMPLES];
        }
        self.hop_counter += 1;
        &self.out
    }

    /// Slice-based variant of [`Synthesizer::synthesize`] that validates the bin count.
    pub fn synthesize_bins(&mut self, bins: &[Complex<T>]) -> Result<&[T]> {
        let spec = Spectrum::from_bins(bins, self.hop_counter)?;
        Ok(self.synthesize(&spec))
    }
}

impl<T: Sample> Default for Synthesizer<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Runs a whole signal through analysis and synthesis, calling `modify` on
/// every spectrum in between. The input is zero-padded to a whole number of
/// hops and the output has the padded length.
pub fn round_trip<T: Sample>(signal: &[T], mut modify: impl FnMut(&mut Spectrum<T>)) -> Vec<T> {
    let mut analyzer = Analyzer::<T>::new();
    let mut synth = Synthesizer::<T>::new();
    let hops = signal.len().div_ceil(HOP_SAMPLES);
    let mut out = Vec::with_capacity(hops * HOP_SAMPLES);
    let mut hop = [T::zero(); HOP_SAMPLES];
    let mut spec = Spectrum::zeros();
    for chunk in signal.chunks(HOP_SAMPLES) {
        hop.fill(T::zero());
        hop[..chunk.len()].copy_from_slice(chunk);
        analyzer
            .analyze_into(&hop, &mut spec)
            .expect("hop length is fixed");
        modify(&mut spec);
        out.extend_from_slice(synth.synthesize(&spec));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn white(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn snr_db(reference: &[f64], estimate: &[f64]) -> f64 {
        let sig: f64 = reference.iter().map(|x| x * x).sum();
        let err: f64 = reference
            .iter()
            .zip(estimate)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        10.0 * (sig / err).log10()
    }

    #[test]
    fn config_invariants() {
        let cfg = FbankConfig::default();
        assert_eq!(cfg.window_samples % cfg.hop_samples, 0);
        assert_eq!(cfg.usable_bins, cfg.dft_bins - 1);
        assert_eq!(cfg.bin_spacing_hz(), 250.0);
        assert_eq!(cfg.algorithmic_delay() % cfg.hop_samples, 0);
        assert_eq!(cfg.hop_ms(), 1.0);
    }

    #[test]
    fn wrong_hop_length_is_rejected() {
        let mut a = Analyzer::<f32>::new();
        assert!(a.analyze(&[0.0; 23]).is_err());
        assert!(a.analyze(&[0.0; 25]).is_err());
        let mut s = Synthesizer::<f32>::new();
        assert!(s.synthesize_bins(&[Complex32::new(0.0, 0.0); 48]).is_err());
    }

    #[test]
    fn zero_in_zero_out() {
        let mut a = Analyzer::<f32>::new();
        let mut s = Synthesizer::<f32>::new();
        for _ in 0..10 {
            let spec = a.analyze(&[0.0; HOP_SAMPLES]).unwrap();
            assert!(spec.bins.iter().all(|c| c.re == 0.0 && c.im == 0.0));
            assert!(s.synthesize(&spec).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn dc_and_nyquist_are_real() {
        let mut a = Analyzer::<f32>::new();
        let x = white(HOP_SAMPLES * 8, 3);
        for chunk in x.chunks(HOP_SAMPLES) {
            let hop: Vec<f32> = chunk.iter().map(|&v| v as f32).collect();
            let spec = a.analyze(&hop).unwrap();
            assert_eq!(spec.bins[0].im, 0.0);
            assert_eq!(spec.bins[DFT_BINS - 1].im, 0.0);
        }
    }

    #[test]
    fn impulse_reappears_after_algorithmic_delay() {
        let delay = FbankConfig::default().algorithmic_delay();
        for n in [0usize, 5, 23, 24, 100, 251] {
            let mut x = vec![0.0f64; 600];
            x[n] = 1.0;
            let y = round_trip(&x, |_| {});
            let (argmax, peak) = y
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap();
            assert_eq!(argmax, n + delay, "impulse at {n}");
            assert!((peak - 1.0).abs() < 1e-12);
            let rest: f64 = y
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != argmax)
                .map(|(_, v)| v.abs())
                .sum();
            assert!(rest < 1e-12);
        }
    }

    #[test]
    fn double_precision_reconstruction_exceeds_100_db() {
        let x = white(24_000, 11);
        let y = round_trip(&x, |_| {});
        let d = FbankConfig::default().algorithmic_delay();
        let snr = snr_db(&x[..x.len() - d], &y[d..]);
        assert!(snr >= 100.0, "snr {snr}");
    }

    #[test]
    fn single_precision_reconstruction_exceeds_60_db() {
        let x = white(24_000, 12);
        let xf: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let y: Vec<f64> = round_trip(&xf, |_| {}).iter().map(|&v| v as f64).collect();
        let d = FbankConfig::default().algorithmic_delay();
        let snr = snr_db(&x[..x.len() - d], &y[d..]);
        assert!(snr >= 60.0, "snr {snr}");
    }

    #[test]
    fn half_gain_scales_output() {
        let x = white(12_000, 13);
        let xf: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let half = [0.5f32; DFT_BINS];
        let y: Vec<f64> = round_trip(&xf, |s| s.apply_gains(&half))
            .iter()
            .map(|&v| v as f64)
            .collect();
        let d = FbankConfig::default().algorithmic_delay();
        let target: Vec<f64> = x[..x.len() - d].iter().map(|v| 0.5 * v).collect();
        assert!(snr_db(&target, &y[d..]) >= 60.0);
    }

    #[test]
    fn synthesis_is_linear() {
        let mut a = Analyzer::<f64>::new();
        let mut s1 = Synthesizer::<f64>::new();
        let mut s2 = Synthesizer::<f64>::new();
        let x = white(HOP_SAMPLES * 20, 4);
        for chunk in x.chunks(HOP_SAMPLES) {
            let spec = a.analyze(chunk).unwrap();
            let mut scaled = spec;
            scaled.apply_gains(&[3.0; DFT_BINS]);
            let y1: Vec<f64> = s1.synthesize(&spec).to_vec();
            let y2 = s2.synthesize(&scaled);
            for (u, v) in y1.iter().zip(y2) {
                assert!((3.0 * u - v).abs() <= 1e-12 * (1.0 + v.abs()));
            }
        }
    }

    #[test]
    fn hop_counters_advance() {
        let mut a = Analyzer::<f32>::new();
        for i in 0..5 {
            let s = a.analyze(&[0.0; HOP_SAMPLES]).unwrap();
            assert_eq!(s.hop_index, i);
        }
        assert_eq!(a.hop_counter(), 5);
    }
}
