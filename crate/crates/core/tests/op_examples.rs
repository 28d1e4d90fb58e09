//! Worked examples for individual operations that span modules.

use std::f64::consts::PI;

use hrnn::fbank::{Analyzer, HOP_SAMPLES};
use hrnn::metrics::{rmse, si_sdr, stoi};
use hrnn::{mix, oracle, synth};

const FS: usize = 24_000;

#[test]
fn rmse_of_identical_and_offset_signals() {
    let s = synth::speech_like(FS, 1);
    assert_eq!(rmse(&s, &s, 0).unwrap(), 0.0);
    let shifted: Vec<f32> = s.iter().map(|v| v + 0.1).collect();
    assert!((rmse(&shifted, &s, 0).unwrap() - 0.1).abs() < 1e-6);
}

#[test]
fn rmse_alignment_helps_for_a_pure_delay() {
    let s = synth::speech_like(FS, 2);
    let d = 96;
    let mut delayed = vec![0.0; d];
    delayed.extend_from_slice(&s[..s.len() - d]);
    let aligned = rmse(&delayed, &s, d).unwrap();
    let unaligned = rmse(&delayed, &s, 0).unwrap();
    assert!(aligned < 1e-12);
    assert!(unaligned > 0.01);
}

#[test]
fn si_sdr_of_doubled_reference_is_capped() {
    let s = synth::speech_like(FS, 3);
    let two: Vec<f32> = s.iter().map(|v| 2.0 * v).collect();
    assert_eq!(si_sdr(&two, &s, 0).unwrap(), 100.0);
}

#[test]
fn si_sdr_joint_scaling() {
    let s = synth::speech_like(FS, 4);
    let n = synth::white_noise(s.len(), 0.05, 5);
    let y: Vec<f32> = s.iter().zip(&n).map(|(a, b)| a + b).collect();
    let base = si_sdr(&y, &s, 0).unwrap();
    for g in [0.25f32, 4.0, 1024.0] {
        let gs: Vec<f32> = s.iter().map(|v| v * g).collect();
        let gy: Vec<f32> = y.iter().map(|v| v * g).collect();
        assert!((si_sdr(&gy, &gs, 0).unwrap() - base).abs() < 1e-6);
    }
}

#[test]
fn mix_at_20_db_measures_20_db_si_sdr() {
    let s = synth::speech_like(10 * FS, 6);
    let n = synth::white_noise(s.len(), 1.0, 7);
    let y = mix::mix(&s, &n, 20.0).unwrap();
    let v = si_sdr(&y, &s, 0).unwrap();
    assert!((v - 20.0).abs() < 0.1, "{v}");
}

#[test]
fn snr_grid_is_table_buckets() {
    assert_eq!(mix::SNR_GRID_DB, [-5.0, 0.0, 5.0, 10.0, 20.0]);
}

#[test]
fn stoi_silence_against_speech_is_pinned() {
    let s = synth::speech_like(3 * FS, 8);
    let v = stoi(&vec![0.0; s.len()], &s, FS as u32, 0).unwrap();
    // golden value from the first verified run
    assert_eq!(v, 0.0);
}

#[test]
fn one_khz_tone_peaks_in_bin_4() {
    let x: Vec<f32> = (0..40 * HOP_SAMPLES)
        .map(|n| (2.0 * PI * 1000.0 * n as f64 / FS as f64).sin() as f32)
        .collect();
    let mut a = Analyzer::<f32>::new();
    let mut p = [0.0f32; 49];
    for hop in x.chunks_exact(HOP_SAMPLES) {
        p = a.analyze(hop).unwrap().power();
    }
    let peak = (0..49).max_by(|&i, &j| p[i].total_cmp(&p[j])).unwrap();
    assert_eq!(peak, 4);
    // sqrt-Hann sidelobes: about 23.5 dB at two bins off, falling further out
    for k in (0usize..49).filter(|k| k.abs_diff(4) >= 2) {
        let rel = 10.0 * (p[k] as f64 / p[4] as f64).log10();
        assert!(rel < -23.0, "bin {k}: {rel:.1} dB");
    }
}

#[test]
fn equal_speech_and_noise_power_gives_half_mask() {
    // identical signals have |S|^2 = |N|^2 in every bin
    let s = synth::white_noise(4800, 0.1, 9);
    let masks = oracle::wiener_band_masks(&s, &s).unwrap();
    for m in &masks[4..] {
        for &g in m {
            assert!((g - 0.5).abs() < 1e-6, "{g}");
        }
    }
}

/// Gated harmonic tone plus LCG noise; reproducible bit-for-bit elsewhere.
fn reference_fixture(gain: f32) -> (Vec<f32>, Vec<f32>) {
    let n = 3 * FS;
    let mut state: u64 = 12345;
    let mut clean = Vec::with_capacity(n);
    let mut noisy = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / FS as f64;
        let gate = if (2.0 * PI * 2.5 * t).sin() > 0.0 { 1.0 } else { 0.0 };
        let tone: f64 = [150.0, 300.0, 450.0, 900.0, 1800.0, 2700.0]
            .iter()
            .enumerate()
            .map(|(k, f)| (2.0 * PI * f * t).sin() / (k + 1) as f64)
            .sum();
        let s = (0.1 * gate * tone) as f32;
        state = (1_664_525 * state + 1_013_904_223) % (1 << 32);
        let u = (state as f64 / 4_294_967_296.0 - 0.5) as f32;
        clean.push(s);
        noisy.push(s + gain * u);
    }
    (clean, noisy)
}

#[test]
fn stoi_agrees_with_reference_implementation() {
    // scores from the widely used Python implementation on the same fixture
    for (gain, want) in [
        (0.05f32, 0.849_001_906_901_642_6),
        (0.2, 0.595_015_764_922_485_8),
        (0.5, 0.415_241_567_627_984_25),
    ] {
        let (clean, noisy) = reference_fixture(gain);
        let got = stoi(&noisy, &clean, FS as u32, 0).unwrap();
        assert!((got - want).abs() < 1e-3, "gain {gain}: {got} vs {want}");
    }
}
