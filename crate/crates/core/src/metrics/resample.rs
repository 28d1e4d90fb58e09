//! Rational-factor polyphase resampling with a Kaiser-windowed sinc.

use std::f64::consts::PI;

const HALF_LEN_PER_FACTOR: usize = 10;
const KAISER_BETA: f64 = 5.0;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Resamples `x` from `from_hz` to `to_hz`. Output sample `m` is aligned
/// with input time `m · from_hz / to_hz`; output length is
/// `ceil(len · to_hz / from_hz)`.
pub fn resample(x: &[f64], from_hz: u32, to_hz: u32) -> Vec<f64> {
    let g = gcd(from_hz as usize, to_hz as usize);
    let up = to_hz as usize / g;
    let down = from_hz as usize / g;
    if up == down {
        return x.to_vec();
    }
    let factor = up.max(down);
    let half = HALF_LEN_PER_FACTOR * factor;
    let len = 2 * half + 1;
    // cutoff at the lower of the two Nyquist rates, in cycles per
    // upsampled sample
    let fc = 0.5 / factor as f64;
    let i0_beta = bessel_i0(KAISER_BETA);
    let h: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 - half as f64;
            let sinc = if t == 0.0 {
                1.0
            } else {
                (2.0 * PI * fc * t).sin() / (2.0 * PI * fc * t)
            };
            let r = t / half as f64;
            let win = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
            2.0 * fc * sinc * win * up as f64
        })
        .collect();

    let out_len = (x.len() * up).div_ceil(down);
    (0..out_len)
        .map(|m| {
            // upsampled index of this output sample, centered on the filter
            let center = m * down;
            let lo = center.saturating_sub(half);
            let hi = center + half;
            let n_first = lo.div_ceil(up);
            let n_last = (hi / up).min(x.len().saturating_sub(1));
            let mut acc = 0.0;
            let mut n = n_first;
            while n <= n_last && n < x.len() {
                let k = n * up + half - center;
                acc += x[n] * h[k];
                n += 1;
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_rates_match() {
        let x = vec![1.0, 2.0, 3.0];
        assert_eq!(resample(&x, 24_000, 24_000), x);
    }

    #[test]
    fn preserves_in_band_sine() {
        let fs_in = 24_000.0;
        let f = 1000.0;
        let x: Vec<f64> = (0..24_000)
            .map(|n| (2.0 * PI * f * n as f64 / fs_in).sin())
            .collect();
        let y = resample(&x, 24_000, 10_000);
        assert_eq!(y.len(), 10_000);
        // skip filter edges
        for (m, &v) in y.iter().enumerate().take(9500).skip(500) {
            let want = (2.0 * PI * f * m as f64 / 10_000.0).sin();
            assert!((v - want).abs() < 1e-3, "m={m}: {v} vs {want}");
        }
    }

    #[test]
    fn rejects_above_new_nyquist() {
        let x: Vec<f64> = (0..24_000)
            .map(|n| (2.0 * PI * 8000.0 * n as f64 / 24_000.0).sin())
            .collect();
        let y = resample(&x, 24_000, 10_000);
        let p: f64 = y[500..9500].iter().map(|v| v * v).sum::<f64>() / 9000.0;
        assert!(p < 1e-6, "residual power {p}");
    }

    #[test]
    fn bessel_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(5.0) - 27.239_871_823_604_45).abs() < 1e-10);
    }
}
