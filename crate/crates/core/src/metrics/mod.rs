//! Objective quality metrics and batch evaluation.
//!
//! Every comparison takes an explicit `delay`: the estimate is assumed to
//! lag the reference by that many samples, so `estimate[n + delay]` is
//! compared with `reference[n]` over the overlapping span.

mod resample;
mod stoi;

use std::fmt;
use std::str::FromStr;

pub use resample::resample;
pub use stoi::DYN_RANGE_DB;

use crate::error::{invalid, Error, Result};
use crate::par;

/// Upper (and lower) bound on reported SI-SDR.
pub const SI_SDR_CAP_DB: f64 = 100.0;

/// Overlapping spans of `estimate` delayed by `delay` against `reference`.
pub fn align<'a>(
    estimate: &'a [f32],
    reference: &'a [f32],
    delay: usize,
) -> Result<(&'a [f32], &'a [f32])> {
    if delay >= estimate.len() {
        return Err(invalid(format!(
            "delay {delay} leaves nothing of a {}-sample estimate",
            estimate.len()
        )));
    }
    let est = &estimate[delay..];
    let n = est.len().min(reference.len());
    if n == 0 {
        return Err(invalid("empty reference"));
    }
    Ok((&est[..n], &reference[..n]))
}

/// Scale-invariant signal-to-distortion ratio in dB, clamped to
/// ±[`SI_SDR_CAP_DB`].
pub fn si_sdr(estimate: &[f32], reference: &[f32], delay: usize) -> Result<f64> {
    let (est, reference) = align(estimate, reference, delay)?;
    let ss: f64 = reference.iter().map(|&s| s as f64 * s as f64).sum();
    if ss == 0.0 {
        return Err(invalid("si_sdr reference is silent"));
    }
    let dot: f64 = est
        .iter()
        .zip(reference)
        .map(|(&e, &s)| e as f64 * s as f64)
        .sum();
    let alpha = dot / ss;
    let mut target = 0.0;
    let mut residual = 0.0;
    for (&e, &s) in est.iter().zip(reference) {
        let t = alpha * s as f64;
        let r = e as f64 - t;
        target += t * t;
        residual += r * r;
    }
    let db = if residual == 0.0 {
        SI_SDR_CAP_DB
    } else {
        10.0 * (target / residual).log10()
    };
    Ok(db.clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// Short-time objective intelligibility in [0, 1].
pub fn stoi(estimate: &[f32], reference: &[f32], sample_rate: u32, delay: usize) -> Result<f64> {
    let (est, reference) = align(estimate, reference, delay)?;
    stoi::stoi(est, reference, sample_rate)
}

/// Root-mean-square error.
pub fn rmse(estimate: &[f32], reference: &[f32], delay: usize) -> Result<f64> {
    let (est, reference) = align(estimate, reference, delay)?;
    let se: f64 = est
        .iter()
        .zip(reference)
        .map(|(&e, &s)| (e as f64 - s as f64).powi(2))
        .sum();
    Ok((se / est.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricSet {
    pub si_sdr: bool,
    pub stoi: bool,
    pub rmse: bool,
}

impl MetricSet {
    pub const ALL: Self = Self {
        si_sdr: true,
        stoi: true,
        rmse: true,
    };
}

impl Default for MetricSet {
    fn default() -> Self {
        Self::ALL
    }
}

/// Comma-separated list of `si_sdr`, `stoi`, `rmse`.
impl FromStr for MetricSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut set = Self {
            si_sdr: false,
            stoi: false,
            rmse: false,
        };
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            match name.to_ascii_lowercase().replace('-', "_").as_str() {
                "si_sdr" | "sisdr" => set.si_sdr = true,
                "stoi" => set.stoi = true,
                "rmse" => set.rmse = true,
                other => {
                    return Err(invalid(format!(
                        "unknown metric {other:?}, expected si_sdr, stoi or rmse"
                    )))
                }
            }
        }
        if set
            == (Self {
                si_sdr: false,
                stoi: false,
                rmse: false,
            })
        {
            return Err(invalid("no metrics selected"));
        }
        Ok(set)
    }
}

/// One evaluation unit: a clean reference, its noisy mixture and the
/// enhanced output. `noisy` is aligned with `clean`; `enhanced` lags it
/// by `delay` samples.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub name: String,
    pub snr_db: f64,
    pub clean: Vec<f32>,
    pub noisy: Vec<f32>,
    pub enhanced: Vec<f32>,
    pub delay: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileMetrics {
    pub name: String,
    pub snr_db: f64,
    pub si_sdr_in: Option<f64>,
    pub si_sdr_out: Option<f64>,
    pub stoi_in: Option<f64>,
    pub stoi_out: Option<f64>,
    pub rmse: Option<f64>,
}

impl FileMetrics {
    pub fn delta_stoi(&self) -> Option<f64> {
        Some(self.stoi_out? - self.stoi_in?)
    }

    pub fn delta_si_sdr(&self) -> Option<f64> {
        Some(self.si_sdr_out? - self.si_sdr_in?)
    }

    pub const CSV_HEADER: &'static str =
        "file,snr_db,si_sdr_in,si_sdr_out,stoi_in,stoi_out,delta_stoi,rmse";

    pub fn csv_row(&self) -> String {
        let f = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            csv_field(&self.name),
            self.snr_db,
            f(self.si_sdr_in),
            f(self.si_sdr_out),
            f(self.stoi_in),
            f(self.stoi_out),
            f(self.delta_stoi()),
            f(self.rmse)
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn evaluate(item: &EvalItem, metrics: MetricSet, sample_rate: u32) -> Result<FileMetrics> {
    let ctx = |e: Error| match e {
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("{}: {m}", item.name)),
        other => other,
    };
    let (clean, noisy, enh, d) = (&item.clean, &item.noisy, &item.enhanced, item.delay);
    type Metric<'a> = &'a dyn Fn(&[f32], &[f32], usize) -> Result<f64>;
    let pair = |f: Metric| -> Result<(f64, f64)> {
        Ok((
            f(noisy, clean, 0).map_err(ctx)?,
            f(enh, clean, d).map_err(ctx)?,
        ))
    };
    let (si_sdr_in, si_sdr_out) = if metrics.si_sdr {
        let (a, b) = pair(&si_sdr)?;
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    let (stoi_in, stoi_out) = if metrics.stoi {
        let (a, b) = pair(&|e, r, d| stoi(e, r, sample_rate, d))?;
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    let rmse = if metrics.rmse {
        Some(rmse(enh, clean, d).map_err(ctx)?)
    } else {
        None
    };
    Ok(FileMetrics {
        name: item.name.clone(),
        snr_db: item.snr_db,
        si_sdr_in,
        si_sdr_out,
        stoi_in,
        stoi_out,
        rmse,
    })
}

/// Evaluates every item, in parallel when enabled. Order is preserved.
pub fn evaluate_many(
    items: &[EvalItem],
    metrics: MetricSet,
    sample_rate: u32,
) -> Vec<Result<FileMetrics>> {
    par::map(items, |it| evaluate(it, metrics, sample_rate))
}

/// Per-SNR means over files.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrSummary {
    pub snr_db: f64,
    pub files: usize,
    pub si_sdr_in: Option<f64>,
    pub si_sdr_out: Option<f64>,
    pub stoi_in: Option<f64>,
    pub stoi_out: Option<f64>,
    /// Mean of per-file differences.
    pub delta_stoi: Option<f64>,
    pub rmse: Option<f64>,
}

impl fmt::Display for SnrSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = |x: Option<f64>| x.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        write!(
            f,
            "snr_db={} files={} si_sdr_in={} si_sdr_out={} stoi_in={} stoi_out={} delta_stoi={} rmse={}",
            self.snr_db,
            self.files,
            v(self.si_sdr_in),
            v(self.si_sdr_out),
            v(self.stoi_in),
            v(self.stoi_out),
            v(self.delta_stoi),
            v(self.rmse)
        )
    }
}

fn mean(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for x in xs {
        sum += x?;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Groups by exact SNR value, ascending.
pub fn summarize_by_snr(results: &[FileMetrics]) -> Vec<SnrSummary> {
    let mut snrs: Vec<f64> = results.iter().map(|r| r.snr_db).collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    snrs.into_iter()
        .map(|snr| {
            let group: Vec<&FileMetrics> = results.iter().filter(|r| r.snr_db == snr).collect();
            let m = |f: fn(&FileMetrics) -> Option<f64>| mean(group.iter().map(|r| f(r)));
            SnrSummary {
                snr_db: snr,
                files: group.len(),
                si_sdr_in: m(|r| r.si_sdr_in),
                si_sdr_out: m(|r| r.si_sdr_out),
                stoi_in: m(|r| r.stoi_in),
                stoi_out: m(|r| r.stoi_out),
                delta_stoi: m(FileMetrics::delta_stoi),
                rmse: m(|r| r.rmse),
            }
        })
        .collect()
}
