//! Feature extraction: dB transform, running mean (and optional variance)
//! normalization, and the 48-bin to 16-band rectangular grouping.

use crate::error::{invalid, Result};
use crate::fbank::USABLE_BINS;

pub const NUM_BANDS: usize = 16;
/// Power floor of the dB transform (-100 dB).
pub const POWER_FLOOR: f64 = 1e-10;
/// Floor applied to the variance estimate before the square root.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Bins per band. The first eight bands (up to 2 kHz) hold one bin each,
/// the upper eight follow an equal-width Traunmüller bark partition of
/// bins 8..47.
pub const BINS_PER_BAND: [usize; NUM_BANDS] = [1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 3, 4, 6, 8, 13];

/// `10 * log10(max(p, 1e-10))` per bin.
pub fn to_db(power: &[f32], out: &mut [f32]) -> Result<()> {
    if power.len() != out.len() {
        return Err(invalid(format!(
            "to_db: {} inputs but {} outputs",
            power.len(),
            out.len()
        )));
    }
    for (o, &p) in out.iter_mut().zip(power) {
        if p.is_nan() || p < 0.0 {
            return Err(invalid(format!(
                "to_db: power must be nonnegative, got {p}"
            )));
        }
        *o = db(p);
    }
    Ok(())
}

#[inline]
fn db(p: f32) -> f32 {
    (10.0 * (p as f64).max(POWER_FLOOR).log10()) as f32
}

/// Exponential decay for a smoothing time constant `tau_s` sampled every `dt_s`.
pub fn alpha_from_tau(tau_s: f64, dt_s: f64) -> Result<f64> {
    if tau_s.is_nan() || dt_s.is_nan() || tau_s <= 0.0 || dt_s <= 0.0 {
        return Err(invalid(format!(
            "alpha_from_tau needs positive arguments, got tau={tau_s} dt={dt_s}"
        )));
    }
    Ok((-dt_s / tau_s).exp())
}

/// Running per-bin mean and mean-square estimates.
///
/// The state is kept in double precision; with a decay of 0.999 the single
/// precision update loses most of the residual's significant digits.
#[derive(Debug, Clone)]
pub struct Normalizer {
    mean_db: [f64; USABLE_BINS],
    square_db: [f64; USABLE_BINS],
    alpha: f64,
    variance_enabled: bool,
    initialized: bool,
}

impl Normalizer {
    pub fn new(alpha: f64, variance_enabled: bool) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(format!(
                "normalizer decay must be in (0,1), got {alpha}"
            )));
        }
        Ok(Self {
            mean_db: [0.0; USABLE_BINS],
            square_db: [0.0; USABLE_BINS],
            alpha,
            variance_enabled,
            initialized: false,
        })
    }

    /// Starts from explicit mean estimates instead of the first frame.
    pub fn with_mean(alpha: f64, variance_enabled: bool, mean_db: &[f64]) -> Result<Self> {
        let mut n = Self::new(alpha, variance_enabled)?;
        if mean_db.len() != USABLE_BINS {
            return Err(invalid(format!(
                "initial mean needs {USABLE_BINS} values, got {}",
                mean_db.len()
            )));
        }
        n.mean_db.copy_from_slice(mean_db);
        for (s, m) in n.square_db.iter_mut().zip(mean_db) {
            *s = m * m;
        }
        n.initialized = true;
        Ok(n)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn variance_enabled(&self) -> bool {
        self.variance_enabled
    }

    pub fn mean_db(&self) -> &[f64; USABLE_BINS] {
        &self.mean_db
    }

    /// `ŝ² − μ̂²` floored at [`VARIANCE_FLOOR`].
    pub fn variance(&self, bin: usize) -> f64 {
        (self.square_db[bin] - self.mean_db[bin] * self.mean_db[bin]).max(VARIANCE_FLOOR)
    }

    pub fn reset(&mut self) {
        self.mean_db = [0.0; USABLE_BINS];
        self.square_db = [0.0; USABLE_BINS];
        self.initialized = false;
    }

    /// Updates the estimates with `db` and writes the normalized frame.
    pub fn normalize(&mut self, db: &[f32], out: &mut [f32]) -> Result<()> {
        if db.len() != USABLE_BINS || out.len() != USABLE_BINS {
            return Err(invalid(format!(
                "normalize works on {USABLE_BINS} bins, got {} in / {} out",
                db.len(),
                out.len()
            )));
        }
        if !self.initialized {
            for (i, &x) in db.iter().enumerate() {
                self.mean_db[i] = x as f64;
                self.square_db[i] = x as f64 * x as f64;
            }
            self.initialized = true;
        } else {
            let a = self.alpha;
            for (i, &x) in db.iter().enumerate() {
                let x = x as f64;
                self.mean_db[i] = a * self.mean_db[i] + (1.0 - a) * x;
                if self.variance_enabled {
                    self.square_db[i] = a * self.square_db[i] + (1.0 - a) * x * x;
                }
            }
        }
        for (i, (o, &x)) in out.iter_mut().zip(db).enumerate() {
            let centered = x as f64 - self.mean_db[i];
            *o = if self.variance_enabled {
                (centered / self.variance(i).sqrt()) as f32
            } else {
                centered as f32
            };
        }
        Ok(())
    }
}

/// Partition of the 48 usable bins into 16 contiguous bands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BarkLayout {
    pub band_of_bin: [usize; USABLE_BINS],
    pub bins_per_band: [usize; NUM_BANDS],
}

impl BarkLayout {
    /// First bin of `band`.
    pub fn band_start(&self, band: usize) -> usize {
        self.bins_per_band[..band].iter().sum()
    }

    pub fn band_range(&self, band: usize) -> std::ops::Range<usize> {
        let start = self.band_start(band);
        start..start + self.bins_per_band[band]
    }
}

pub fn bark_layout() -> BarkLayout {
    let mut band_of_bin = [0; USABLE_BINS];
    let mut bin = 0;
    for (band, &n) in BINS_PER_BAND.iter().enumerate() {
        for slot in &mut band_of_bin[bin..bin + n] {
            *slot = band;
        }
        bin += n;
    }
    BarkLayout {
        band_of_bin,
        bins_per_band: BINS_PER_BAND,
    }
}

/// Band value = mean of its member bins.
pub fn bark_compress(values: &[f32], out: &mut [f32]) -> Result<()> {
    if values.len() != USABLE_BINS || out.len() != NUM_BANDS {
        return Err(invalid(format!(
            "bark_compress maps {USABLE_BINS} -> {NUM_BANDS}, got {} -> {}",
            values.len(),
            out.len()
        )));
    }
    let mut start = 0;
    for (o, &n) in out.iter_mut().zip(&BINS_PER_BAND) {
        let sum: f32 = values[start..start + n].iter().sum();
        *o = sum / n as f32;
        start += n;
    }
    Ok(())
}

/// Piecewise-constant expansion: every bin takes its band's value.
pub fn bark_expand(band_values: &[f32], out: &mut [f32]) -> Result<()> {
    if band_values.len() != NUM_BANDS || out.len() != USABLE_BINS {
        return Err(invalid(format!(
            "bark_expand maps {NUM_BANDS} -> {USABLE_BINS}, got {} -> {}",
            band_values.len(),
            out.len()
        )));
    }
    let mut start = 0;
    for (&v, &n) in band_values.iter().zip(&BINS_PER_BAND) {
        out[start..start + n].fill(v);
        start += n;
    }
    Ok(())
}

/// One frame of network input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureFrame {
    pub values: [f32; NUM_BANDS],
    pub hop_index: u64,
}

impl FeatureFrame {
    pub fn new(values: [f32; NUM_BANDS], hop_index: u64) -> Self {
        Self { values, hop_index }
    }
}

/// Power spectrum -> network features for a single stream.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    normalizer: Normalizer,
    db: [f32; USABLE_BINS],
    norm: [f32; USABLE_BINS],
}

impl FeatureExtractor {
    pub fn new(normalizer: Normalizer) -> Self {
        Self {
            normalizer,
            db: [0.0; USABLE_BINS],
            norm: [0.0; USABLE_BINS],
        }
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    /// `power` holds at least the 48 usable bins; anything beyond is ignored.
    pub fn extract(&mut self, power: &[f32], hop_index: u64) -> Result<FeatureFrame> {
        if power.len() < USABLE_BINS {
            return Err(invalid(format!(
                "feature extraction needs {USABLE_BINS} power bins, got {}",
                power.len()
            )));
        }
        to_db(&power[..USABLE_BINS], &mut self.db)?;
        self.normalizer.normalize(&self.db, &mut self.norm)?;
        let mut values = [0.0; NUM_BANDS];
        bark_compress(&self.norm, &mut values)?;
        Ok(FeatureFrame { values, hop_index })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Equal-width partition of bins 8..47 on the Traunmüller bark scale,
    /// assigning each 250 Hz bin center to its segment.
    fn traunmuller_upper_bands() -> Vec<usize> {
        let bark = |f: f64| 26.81 * f / (1960.0 + f) - 0.53;
        let centers: Vec<f64> = (8..48).map(|k| k as f64 * 250.0).collect();
        let lo = bark(centers[0]);
        let hi = bark(*centers.last().unwrap());
        let width = (hi - lo) / 8.0;
        let mut counts = vec![0usize; 8];
        for &f in &centers {
            let seg = (((bark(f) - lo) / width).floor() as usize).min(7);
            counts[seg] += 1;
        }
        counts
    }

    #[test]
    fn upper_band_table_matches_bark_oracle() {
        assert_eq!(traunmuller_upper_bands(), BINS_PER_BAND[8..].to_vec());
    }

    #[test]
    fn layout_partitions_all_bins() {
        let layout = bark_layout();
        assert_eq!(layout.bins_per_band.iter().sum::<usize>(), USABLE_BINS);
        assert!(layout.bins_per_band[..8].iter().all(|&n| n == 1));
        assert!(layout.bins_per_band.iter().all(|&n| n > 0));
        for w in layout.band_of_bin.windows(2) {
            assert!(w[1] == w[0] || w[1] == w[0] + 1);
        }
        assert_eq!(layout.band_of_bin[0], 0);
        assert_eq!(layout.band_of_bin[47], 15);
        assert_eq!(layout.band_range(15), 35..48);
    }

    #[test]
    fn to_db_examples() {
        let mut out = [0.0f32; 3];
        to_db(&[1.0, 1e-12, 100.0], &mut out).unwrap();
        assert_eq!(out, [0.0, -100.0, 20.0]);
        assert!(to_db(&[-1.0, 0.0, 0.0], &mut out).is_err());
        assert!(to_db(&[f32::NAN, 0.0, 0.0], &mut out).is_err());
        assert!(to_db(&[1.0], &mut out).is_err());
    }

    #[test]
    fn alpha_examples() {
        assert!((alpha_from_tau(1.0, 0.001).unwrap() - 0.999).abs() < 1e-3);
        assert!((alpha_from_tau(3.0, 0.001).unwrap() - 0.999_666_7).abs() < 1e-6);
        assert!(alpha_from_tau(1.0, 0.0).is_err());
        assert!(alpha_from_tau(0.0, 0.001).is_err());
        assert!(alpha_from_tau(-1.0, 0.001).is_err());
    }

    #[test]
    fn normalizer_rejects_bad_alpha() {
        assert!(Normalizer::new(0.0, false).is_err());
        assert!(Normalizer::new(1.0, false).is_err());
    }

    #[test]
    fn constant_input_at_fixed_point_stays_zero() {
        let c = [-37.5f32; USABLE_BINS];
        let mean = [-37.5f64; USABLE_BINS];
        let mut n = Normalizer::with_mean(0.999, false, &mean).unwrap();
        let mut out = [1.0f32; USABLE_BINS];
        for _ in 0..1000 {
            n.normalize(&c, &mut out).unwrap();
            assert!(out.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn mean_residual_decays_geometrically() {
        // closed form: r[t] = c - mu[t] = alpha^t (c - mu0) when the update
        // precedes the subtraction.
        let alpha = 0.999;
        let c = 12.0f32;
        let mu0 = -40.0f64;
        let mut n = Normalizer::with_mean(alpha, false, &[mu0; USABLE_BINS]).unwrap();
        let mut out = [0.0f32; USABLE_BINS];
        let mut prev = c as f64 - mu0;
        for t in 1..=500 {
            n.normalize(&[c; USABLE_BINS], &mut out).unwrap();
            let r = c as f64 - n.mean_db()[0];
            assert!((r / prev - alpha).abs() < 1e-9, "step {t}");
            let closed = alpha.powi(t) * (c as f64 - mu0);
            assert!((r - closed).abs() < 1e-9 * closed.abs().max(1.0));
            assert!((out[0] as f64 - r).abs() < 1e-4);
            prev = r;
        }
    }

    #[test]
    fn first_frame_initializes_estimates() {
        let mut n = Normalizer::new(0.999, true).unwrap();
        let x: Vec<f32> = (0..USABLE_BINS).map(|i| i as f32 - 20.0).collect();
        let mut out = [1.0f32; USABLE_BINS];
        n.normalize(&x, &mut out).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        for (i, &v) in x.iter().enumerate() {
            assert_eq!(n.mean_db()[i], v as f64);
            assert_eq!(n.variance(i), VARIANCE_FLOOR);
        }
    }

    #[test]
    fn variance_mode_divides_by_running_std() {
        let mut n = Normalizer::new(0.9, true).unwrap();
        let mut out = [0.0f32; USABLE_BINS];
        let frames = [[0.0f32; USABLE_BINS], [10.0; USABLE_BINS]];
        for f in &frames {
            n.normalize(f, &mut out).unwrap();
        }
        // mu = 1, s2 = 10, var = 9
        assert!((n.mean_db()[0] - 1.0).abs() < 1e-12);
        assert!((n.variance(0) - 9.0).abs() < 1e-9);
        assert!((out[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn compress_expand_examples() {
        let mut bands = [0.0f32; NUM_BANDS];
        bark_compress(&[1.0; USABLE_BINS], &mut bands).unwrap();
        assert_eq!(bands, [1.0; NUM_BANDS]);

        let mut one_hot = [0.0f32; USABLE_BINS];
        one_hot[47] = 1.0;
        bark_compress(&one_hot, &mut bands).unwrap();
        assert_eq!(bands[15], 1.0 / 13.0);
        assert!(bands[..15].iter().all(|&v| v == 0.0));

        let mut band_hot = [0.0f32; NUM_BANDS];
        band_hot[0] = 1.0;
        let mut bins = [0.0f32; USABLE_BINS];
        bark_expand(&band_hot, &mut bins).unwrap();
        assert_eq!(bins[0], 1.0);
        assert!(bins[1..].iter().all(|&v| v == 0.0));

        assert!(bark_compress(&[0.0; 47], &mut bands).is_err());
        assert!(bark_expand(&[0.0; 15], &mut bins).is_err());
    }

    #[test]
    fn band_constant_vectors_survive_expand_of_compress() {
        let per_band: Vec<f32> = (0..NUM_BANDS).map(|b| b as f32 * 0.25 - 1.0).collect();
        let mut bins = [0.0f32; USABLE_BINS];
        bark_expand(&per_band, &mut bins).unwrap();
        let mut bands = [0.0f32; NUM_BANDS];
        bark_compress(&bins, &mut bands).unwrap();
        assert_eq!(bands.to_vec(), per_band);
        let mut again = [0.0f32; USABLE_BINS];
        bark_expand(&bands, &mut again).unwrap();
        assert_eq!(again, bins);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn compress_of_expand_is_identity(v in proptest::array::uniform16(-100.0f32..100.0)) {
                let mut bins = [0.0f32; USABLE_BINS];
                bark_expand(&v, &mut bins).unwrap();
                let mut back = [0.0f32; NUM_BANDS];
                bark_compress(&bins, &mut back).unwrap();
                for (a, b) in v.iter().zip(&back) {
                    prop_assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0));
                }
            }

            #[test]
            fn expand_of_compress_is_idempotent(v in proptest::collection::vec(-100.0f32..100.0, USABLE_BINS)) {
                let mut bands = [0.0f32; NUM_BANDS];
                let mut once = [0.0f32; USABLE_BINS];
                bark_compress(&v, &mut bands).unwrap();
                bark_expand(&bands, &mut once).unwrap();
                let mut twice = [0.0f32; USABLE_BINS];
                bark_compress(&once, &mut bands).unwrap();
                bark_expand(&bands, &mut twice).unwrap();
                for (a, b) in once.iter().zip(&twice) {
                    prop_assert!((a - b).abs() <= 1e-4);
                }
            }

            #[test]
            fn to_db_is_monotone_and_bounded(a in 0.0f32..1e6, b in 0.0f32..1e6) {
                let mut out = [0.0f32; 2];
                to_db(&[a.min(b), a.max(b)], &mut out).unwrap();
                prop_assert!(out[0] <= out[1]);
                prop_assert!(out[0] >= -100.0);
            }

            #[test]
            fn variance_never_negative(frames in proptest::collection::vec(-120.0f32..40.0, 2..60)) {
                let mut n = Normalizer::new(0.99, true).unwrap();
                let mut out = [0.0f32; USABLE_BINS];
                for &x in &frames {
                    n.normalize(&[x; USABLE_BINS], &mut out).unwrap();
                    prop_assert!(n.variance(0) >= VARIANCE_FLOOR);
                    prop_assert!(out.iter().all(|v| v.is_finite()));
                }
            }

            #[test]
            fn mean_normalization_is_shift_equivariant(
                frames in proptest::collection::vec(-90.0f32..0.0, 1..50),
                k in -30.0f32..30.0,
            ) {
                let mut a = Normalizer::new(0.99, false).unwrap();
                let mut b = Normalizer::new(0.99, false).unwrap();
                let mut oa = [0.0f32; USABLE_BINS];
                let mut ob = [0.0f32; USABLE_BINS];
                for &x in &frames {
                    a.normalize(&[x; USABLE_BINS], &mut oa).unwrap();
                    b.normalize(&[x + k; USABLE_BINS], &mut ob).unwrap();
                    prop_assert!((b.mean_db()[0] - a.mean_db()[0] - k as f64).abs() < 1e-3);
                    prop_assert!((oa[0] - ob[0]).abs() < 1e-3);
                }
            }
        }
    }
}
