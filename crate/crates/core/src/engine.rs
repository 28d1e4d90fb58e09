//! Per-hop streaming pipeline and latency accounting.

use std::path::Path;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::fbank::{
    Analyzer, FbankConfig, Spectrum, Synthesizer, DFT_BINS, HOP_SAMPLES, USABLE_BINS,
};
use crate::features::{
    alpha_from_tau, bark_expand, FeatureExtractor, FeatureFrame, Normalizer, NUM_BANDS,
};
use crate::model::{ArchConfig, Mask, ModelWeights, Network};
use crate::{par, wav};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub arch: ArchConfig,
    /// Divide by the running standard deviation as well as removing the mean.
    pub variance_norm: bool,
    /// Normalization time constant in seconds.
    pub tau_s: f64,
    /// Lower bound on every gain in dB; `-inf` disables it.
    pub gain_floor_db: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            arch: ArchConfig::hc(16),
            variance_norm: false,
            tau_s: 1.0,
            gain_floor_db: f64::NEG_INFINITY,
        }
    }
}

impl EngineConfig {
    pub fn for_weights(weights: &ModelWeights) -> Self {
        Self {
            arch: weights.arch,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if !self.tau_s.is_finite() || self.tau_s <= 0.0 {
            return Err(invalid(format!("tau must be positive, got {}", self.tau_s)));
        }
        if self.gain_floor_db.is_nan() || self.gain_floor_db > 0.0 {
            return Err(invalid(format!(
                "gain floor must be <= 0 dB, got {}",
                self.gain_floor_db
            )));
        }
        Ok(())
    }

    /// Linear amplitude floor, 0 when disabled.
    pub fn gain_floor(&self) -> f32 {
        if self.gain_floor_db == f64::NEG_INFINITY {
            0.0
        } else {
            10f64.powf(self.gain_floor_db / 20.0) as f32
        }
    }

    fn normalizer(&self) -> Result<Normalizer> {
        let fb = FbankConfig::default();
        let dt = fb.hop_samples as f64 / fb.sample_rate_hz as f64;
        Normalizer::new(alpha_from_tau(self.tau_s, dt)?, self.variance_norm)
    }
}

/// Anything that turns the feature stream into masks with one hop of
/// lookahead: consuming hop `t` yields the mask for hop `t - 1`.
pub trait MaskSource: Send {
    fn push(&mut self, feat: &FeatureFrame) -> Option<Mask>;
    fn reset(&mut self);
}

impl MaskSource for Network {
    fn push(&mut self, feat: &FeatureFrame) -> Option<Mask> {
        self.push_frame(feat)
    }

    fn reset(&mut self) {
        Network::reset(self)
    }
}

/// Replays masks computed ahead of time, with the same alignment as the
/// network. Hops past the end of the list get a unity mask.
#[derive(Debug, Clone)]
pub struct PrecomputedMasks {
    masks: Vec<[f32; NUM_BANDS]>,
    seen: u64,
}

impl PrecomputedMasks {
    pub fn new(masks: Vec<[f32; NUM_BANDS]>) -> Self {
        Self { masks, seen: 0 }
    }
}

impl MaskSource for PrecomputedMasks {
    fn push(&mut self, _feat: &FeatureFrame) -> Option<Mask> {
        self.seen += 1;
        if self.seen < 2 {
            return None;
        }
        let hop = self.seen - 2;
        let gains = self
            .masks
            .get(hop as usize)
            .copied()
            .unwrap_or([1.0; NUM_BANDS]);
        Some(Mask {
            gains,
            hop_index: hop,
        })
    }

    fn reset(&mut self) {
        self.seen = 0;
    }
}

/// One audio stream through the whole pipeline.
pub struct Engine<M: MaskSource = Network> {
    config: EngineConfig,
    analyzer: Analyzer<f32>,
    synth: Synthesizer<f32>,
    features: FeatureExtractor,
    masks: M,
    spec: Spectrum<f32>,
    held: Spectrum<f32>,
    bin_gains: [f32; USABLE_BINS],
    gains: [f32; DFT_BINS],
    floor: f32,
    pending: Vec<f32>,
}

impl Engine<Network> {
    pub fn new(weights: Arc<ModelWeights>, config: EngineConfig) -> Result<Self> {
        if weights.arch != config.arch {
            return Err(Error::Validation(format!(
                "engine configured for {} but weights are {}",
                config.arch, weights.arch
            )));
        }
        let net = Network::new(weights)?;
        Self::with_mask_source(net, config)
    }
}

impl<M: MaskSource> Engine<M> {
    pub fn with_mask_source(masks: M, config: EngineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            features: FeatureExtractor::new(config.normalizer()?),
            floor: config.gain_floor(),
            config,
            analyzer: Analyzer::new(),
            synth: Synthesizer::new(),
            masks,
            spec: Spectrum::zeros(),
            held: Spectrum::zeros(),
            bin_gains: [0.0; USABLE_BINS],
            gains: [0.0; DFT_BINS],
            pending: Vec::with_capacity(HOP_SAMPLES),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn mask_source(&self) -> &M {
        &self.masks
    }

    /// Input-to-output delay of the sample stream produced by
    /// [`Engine::process`]: filter bank plus one hop of lookahead.
    pub fn stream_delay_samples(&self) -> usize {
        stream_delay_samples()
    }

    /// Processes one hop. Returns `None` while the one-hop lookahead is
    /// being primed (the first call after construction or reset).
    pub fn process_hop(&mut self, samples: &[f32]) -> Result<Option<&[f32]>> {
        if samples.len() != HOP_SAMPLES {
            return Err(invalid(format!(
                "process_hop expects {HOP_SAMPLES} samples, got {}",
                samples.len()
            )));
        }
        self.analyzer.analyze_into(samples, &mut self.spec)?;
        let power = self.spec.power();
        let feat = self.features.extract(&power, self.spec.hop_index)?;
        let out = match self.masks.push(&feat) {
            Some(mask) => {
                debug_assert_eq!(mask.hop_index, self.held.hop_index);
                let mut band = mask.gains;
                for g in &mut band {
                    *g = g.max(self.floor);
                }
                bark_expand(&band, &mut self.bin_gains)?;
                self.gains[..USABLE_BINS].copy_from_slice(&self.bin_gains);
                self.gains[USABLE_BINS] = band[NUM_BANDS - 1];
                self.held.apply_gains(&self.gains);
                Some(self.synth.synthesize(&self.held))
            }
            None => None,
        };
        self.held = self.spec;
        Ok(out)
    }

    /// Streams an arbitrary chunk of samples. Completed hops are appended to
    /// `out`, with the priming hop written as silence so that the output
    /// stays sample-aligned with the input; a partial trailing hop is kept
    /// for the next call.
    pub fn process(&mut self, input: &[f32], out: &mut Vec<f32>) -> Result<()> {
        let mut rest = input;
        if !self.pending.is_empty() {
            let need = HOP_SAMPLES - self.pending.len();
            let take = need.min(rest.len());
            self.pending.extend_from_slice(&rest[..take]);
            rest = &rest[take..];
            if self.pending.len() < HOP_SAMPLES {
                return Ok(());
            }
            let hop: [f32; HOP_SAMPLES] = self.pending[..].try_into().unwrap();
            self.pending.clear();
            self.emit(&hop, out)?;
        }
        let mut chunks = rest.chunks_exact(HOP_SAMPLES);
        for hop in &mut chunks {
            self.emit(hop, out)?;
        }
        self.pending.extend_from_slice(chunks.remainder());
        Ok(())
    }

    fn emit(&mut self, hop: &[f32], out: &mut Vec<f32>) -> Result<()> {
        match self.process_hop(hop)? {
            Some(y) => out.extend_from_slice(y),
            None => out.extend_from_slice(&[0.0; HOP_SAMPLES]),
        }
        Ok(())
    }

    /// Pads any partial hop with zeros and processes it.
    pub fn flush(&mut self, out: &mut Vec<f32>) -> Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let fill = HOP_SAMPLES - self.pending.len();
        self.process(&vec![0.0; fill], out)
    }

    /// Back to stream start.
    pub fn reset(&mut self) -> Result<()> {
        self.analyzer = Analyzer::new();
        self.synth = Synthesizer::new();
        self.features = FeatureExtractor::new(self.config.normalizer()?);
        self.masks.reset();
        self.held = Spectrum::zeros();
        self.pending.clear();
        Ok(())
    }

    /// Whole signal in, same-length signal out (delayed by
    /// [`Engine::stream_delay_samples`]).
    pub fn enhance(&mut self, input: &[f32]) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(input.len() + HOP_SAMPLES);
        self.process(input, &mut out)?;
        self.flush(&mut out)?;
        out.truncate(input.len());
        Ok(out)
    }
}

/// Filter-bank delay plus one hop of lookahead, in samples.
pub fn stream_delay_samples() -> usize {
    let fb = FbankConfig::default();
    fb.algorithmic_delay() + fb.hop_samples
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyReport {
    /// Analysis + synthesis round trip.
    pub fbank_ms: f64,
    /// One hop of future context.
    pub lookahead_ms: f64,
    /// Block buffering: a hop is processed only once all of it has arrived.
    pub hop_ms: f64,
    pub total_ms: f64,
}

impl LatencyReport {
    pub fn total_samples(&self) -> f64 {
        self.total_ms * FbankConfig::default().sample_rate_hz as f64 / 1000.0
    }
}

/// Latency budget. Independent of normalization and gain settings.
pub fn latency_report(_config: &EngineConfig) -> LatencyReport {
    let fb = FbankConfig::default();
    let fbank_ms = fb.algorithmic_delay_ms();
    let lookahead_ms = fb.hop_ms();
    let hop_ms = fb.hop_ms();
    LatencyReport {
        fbank_ms,
        lookahead_ms,
        hop_ms,
        total_ms: fbank_ms + lookahead_ms + hop_ms,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasuredLatency {
    /// Offset between input and output sample streams.
    pub stream_delay_samples: usize,
    /// Arrival of an input sample to playback of its output sample when
    /// hops are processed as soon as they are complete and each result is
    /// played during the following hop.
    pub realtime_delay_samples: usize,
}

/// Sends an impulse through a fresh engine and times its reappearance.
///
/// The input sample `n` arrives at time `n`; the hop containing it is
/// processed at the end of that hop and its output (silence while priming)
/// is played back over the next hop.
pub fn measure_latency<M: MaskSource>(engine: &mut Engine<M>) -> Result<MeasuredLatency> {
    engine.reset()?;
    let hops = 64;
    let impulse_at = 20 * HOP_SAMPLES + 7;
    let mut stream = Vec::with_capacity(hops * HOP_SAMPLES);
    let mut peak = (0usize, 0.0f32, 0usize);
    for k in 0..hops {
        let mut hop = [0.0f32; HOP_SAMPLES];
        if impulse_at / HOP_SAMPLES == k {
            hop[impulse_at % HOP_SAMPLES] = 1.0;
        }
        let played_from = (k + 1) * HOP_SAMPLES;
        let out = engine.process_hop(&hop)?;
        let out = out
            .map(|o| o.to_vec())
            .unwrap_or_else(|| vec![0.0; HOP_SAMPLES]);
        for (i, &y) in out.iter().enumerate() {
            if y.abs() > peak.1 {
                peak = (stream.len() + i, y.abs(), played_from + i);
            }
        }
        stream.extend_from_slice(&out);
    }
    engine.reset()?;
    if peak.1 == 0.0 {
        return Err(Error::Validation(
            "impulse did not reach the output; mask is zero".into(),
        ));
    }
    Ok(MeasuredLatency {
        stream_delay_samples: peak.0 - impulse_at,
        realtime_delay_samples: peak.2 - impulse_at,
    })
}

/// Reads a mono 24 kHz WAV, enhances it and writes 32-bit float output of
/// the same length.
pub fn enhance_file(
    input: impl AsRef<Path>,
    output: impl AsRef<Path>,
    weights: Arc<ModelWeights>,
    config: EngineConfig,
) -> Result<()> {
    let samples = wav::read_mono(input.as_ref())?;
    let mut engine = Engine::new(weights, config)?;
    let enhanced = engine.enhance(&samples)?;
    wav::write_f32(output.as_ref(), &enhanced)
}

/// Enhances independent signals, one fresh engine per signal, spread over
/// the worker pool when the `parallel` feature is on.
pub fn enhance_batch(
    weights: &Arc<ModelWeights>,
    config: &EngineConfig,
    signals: &[Vec<f32>],
) -> Result<Vec<Vec<f32>>> {
    par::map(signals, |s| {
        Engine::new(weights.clone(), *config)?.enhance(s)
    })
    .into_iter()
    .collect()
}

/// [`enhance_batch`] on the calling thread only.
pub fn enhance_batch_sequential(
    weights: &Arc<ModelWeights>,
    config: &EngineConfig,
    signals: &[Vec<f32>],
) -> Result<Vec<Vec<f32>>> {
    signals
        .iter()
        .map(|s| Engine::new(weights.clone(), *config)?.enhance(s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn unity_engine() -> Engine {
        let arch = ArchConfig::hc(16);
        let w = Arc::new(ModelWeights::constant_mask(arch, 100.0));
        Engine::new(w, EngineConfig::default()).unwrap()
    }

    #[test]
    fn priming_then_output() {
        let mut e = unity_engine();
        assert!(e.process_hop(&[0.0; HOP_SAMPLES]).unwrap().is_none());
        for _ in 0..5 {
            assert_eq!(
                e.process_hop(&[0.0; HOP_SAMPLES]).unwrap().unwrap().len(),
                HOP_SAMPLES
            );
        }
    }

    #[test]
    fn wrong_hop_length() {
        let mut e = unity_engine();
        assert!(e.process_hop(&[0.0; 10]).is_err());
    }

    #[test]
    fn config_validation() {
        let bad_tau = EngineConfig {
            tau_s: 0.0,
            ..EngineConfig::default()
        };
        assert!(bad_tau.validate().is_err());
        let bad_floor = EngineConfig {
            gain_floor_db: 3.0,
            ..EngineConfig::default()
        };
        assert!(bad_floor.validate().is_err());
        let w = Arc::new(ModelWeights::zeros(ArchConfig::c(16)));
        assert!(Engine::new(w, EngineConfig::default()).is_err());
    }

    #[test]
    fn silence_in_silence_out() {
        let mut e = unity_engine();
        let y = e.enhance(&vec![0.0; 4800]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unity_mask_is_a_pure_delay() {
        let x = synth::white_noise(24_000, 0.3, 5);
        let y = unity_engine().enhance(&x).unwrap();
        let d = stream_delay_samples();
        let err: f64 = x[..x.len() - d]
            .iter()
            .zip(&y[d..])
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum();
        let sig: f64 = x[..x.len() - d].iter().map(|a| (*a as f64).powi(2)).sum();
        assert!(10.0 * (sig / err).log10() >= 60.0);
    }

    #[test]
    fn measured_latency_matches_report() {
        let mut e = unity_engine();
        let m = measure_latency(&mut e).unwrap();
        assert_eq!(m.stream_delay_samples, 96);
        assert_eq!(m.realtime_delay_samples, 120);
        let r = latency_report(e.config());
        assert!((r.total_samples() - m.realtime_delay_samples as f64).abs() <= 1.0);
        assert!(r.total_ms <= 8.0);
        let slower = EngineConfig {
            tau_s: 2.0,
            ..EngineConfig::default()
        };
        assert_eq!(latency_report(&slower), r);
    }

    #[test]
    fn gain_floor_caps_attenuation() {
        let arch = ArchConfig::hc(16);
        let w = Arc::new(ModelWeights::constant_mask(arch, -100.0));
        let cfg = EngineConfig {
            gain_floor_db: -14.0,
            ..EngineConfig::default()
        };
        let x = synth::white_noise(24_000, 0.5, 9);
        let y = Engine::new(w, cfg).unwrap().enhance(&x).unwrap();
        let d = stream_delay_samples();
        let px: f64 = x[..x.len() - d].iter().map(|v| (*v as f64).powi(2)).sum();
        let py: f64 = y[d..].iter().map(|v| (*v as f64).powi(2)).sum();
        let att = 10.0 * (py / px).log10();
        assert!((att + 14.0).abs() < 0.05, "attenuation {att}");
    }

    #[test]
    fn chunking_does_not_change_output() {
        let w = Arc::new(ModelWeights::random(ArchConfig::hc(16), 3));
        let x = synth::speech_like(12_000, 2);
        let whole = Engine::new(w.clone(), EngineConfig::default())
            .unwrap()
            .enhance(&x)
            .unwrap();
        let mut e = Engine::new(w, EngineConfig::default()).unwrap();
        let mut out = Vec::new();
        for chunk in x.chunks(37) {
            e.process(chunk, &mut out).unwrap();
        }
        e.flush(&mut out).unwrap();
        out.truncate(x.len());
        assert_eq!(
            whole.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            out.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn precomputed_masks_follow_network_alignment() {
        let mut src = PrecomputedMasks::new(vec![[0.25; NUM_BANDS], [0.75; NUM_BANDS]]);
        let f = FeatureFrame::new([0.0; NUM_BANDS], 0);
        assert!(src.push(&f).is_none());
        assert_eq!(src.push(&f).unwrap().gains[0], 0.25);
        assert_eq!(src.push(&f).unwrap().gains[0], 0.75);
        assert_eq!(src.push(&f).unwrap().gains[0], 1.0);
    }

    #[test]
    fn batch_matches_sequential() {
        let w = Arc::new(ModelWeights::random(ArchConfig::hc(16), 3));
        let cfg = EngineConfig::default();
        let signals: Vec<Vec<f32>> = (0..4).map(|s| synth::speech_like(4800, s)).collect();
        let a = enhance_batch(&w, &cfg, &signals).unwrap();
        let b = enhance_batch_sequential(&w, &cfg, &signals).unwrap();
        assert_eq!(a, b);
    }
}
