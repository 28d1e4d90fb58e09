//! Mono 24 kHz WAV input and 32-bit float output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::SAMPLE_RATE;

fn format_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {msg}", path.display()))
}

/// Reads 16-bit PCM or 32-bit float samples as f32 in `[-1, 1)`. Anything
/// other than mono at 24 kHz is rejected.
pub fn read_mono(path: &Path) -> Result<Vec<f32>> {
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => format_err(path, format!("not a readable WAV file ({other})")),
    })?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(format_err(
            path,
            format!(
                "sample rate {} Hz, expected {SAMPLE_RATE} Hz (resample first)",
                spec.sample_rate
            ),
        ));
    }
    if spec.channels != 1 {
        return Err(format_err(
            path,
            format!("{} channels, expected mono", spec.channels),
        ));
    }
    let at =
        |i: usize, e: hound::Error| format_err(path, format!("bad sample data at sample {i}: {e}"));
    match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .enumerate()
            .map(|(i, s)| s.map(|v| v as f32 / 32768.0).map_err(|e| at(i, e)))
            .collect(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .enumerate()
            .map(|(i, s)| s.map_err(|e| at(i, e)))
            .collect(),
        (fmt, bits) => Err(format_err(
            path,
            format!(
                "unsupported sample format {fmt:?} {bits}-bit, expected 16-bit PCM or 32-bit float"
            ),
        )),
    }
}

fn spec(format: SampleFormat, bits: u16) -> WavSpec {
    WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: bits,
        sample_format: format,
    }
}

fn hound_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => format_err(path, other),
    }
}

pub fn write_f32(path: &Path, samples: &[f32]) -> Result<()> {
    let mut w =
        WavWriter::create(path, spec(SampleFormat::Float, 32)).map_err(|e| hound_err(path, e))?;
    for &s in samples {
        w.write_sample(s).map_err(|e| hound_err(path, e))?;
    }
    w.finalize().map_err(|e| hound_err(path, e))
}

/// 16-bit PCM with clipping to the representable range.
pub fn write_i16(path: &Path, samples: &[f32]) -> Result<()> {
    let mut w =
        WavWriter::create(path, spec(SampleFormat::Int, 16)).map_err(|e| hound_err(path, e))?;
    for &s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(|e| hound_err(path, e))?;
    }
    w.finalize().map_err(|e| hound_err(path, e))
}
