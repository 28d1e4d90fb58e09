//! `hrnn` command-line front end.
//!
//! Every failure is reported as a single stderr line of the form
//! `error kind=<kind> message=<text>` with a kind-specific exit code.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use hrnn::complexity::{
    flop_rate, instrumented_count, FlopConventions, HOPS_PER_SECOND, REFERENCE_NORMALIZATION_MFLOPS,
};
use hrnn::engine::{latency_report, stream_delay_samples, Engine, EngineConfig};
use hrnn::fbank::HOP_SAMPLES;
use hrnn::metrics::{self, EvalItem, FileMetrics, MetricSet};
use hrnn::{mix, par, synth, wav, ArchConfig, Error, ModelWeights, Variant, SAMPLE_RATE};

#[derive(Parser)]
#[command(
    name = "hrnn",
    version,
    about = "Low-latency streaming noise reduction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance a mono 24 kHz WAV file.
    Enhance {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        engine: EngineFlags,
    },
    /// Score enhanced files against clean references; one CSV row per file.
    Evaluate {
        /// Clean reference (repeat once per file).
        #[arg(long, required = true)]
        clean: Vec<PathBuf>,
        /// Noisy input aligned with the clean reference.
        #[arg(long, required = true)]
        noisy: Vec<PathBuf>,
        /// Enhanced output of the engine.
        #[arg(long, required = true)]
        enhanced: Vec<PathBuf>,
        /// Input SNR label per file, or once for all files. Estimated from
        /// the clean/noisy pair when omitted.
        #[arg(long, allow_negative_numbers = true)]
        snr: Vec<f64>,
        /// Comma-separated subset of si_sdr,stoi,rmse.
        #[arg(long, default_value = "si_sdr,stoi,rmse")]
        metrics: String,
        /// Samples by which the enhanced signal lags the clean one; defaults
        /// to the engine's stream delay.
        #[arg(long)]
        delay: Option<usize>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Mix clean speech and noise at a given SNR.
    Mix {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        snr: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Time the engine on synthetic audio.
    Bench {
        /// Weight file; a random HC(16) model when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
        seconds: f64,
        #[command(flatten)]
        engine: EngineFlags,
    },
    /// Print size, cost and latency of a model as key=value lines.
    Inspect {
        #[arg(long, conflicts_with_all = ["variant", "hidden"])]
        model: Option<PathBuf>,
        /// hc or c.
        #[arg(long, default_value = "hc")]
        variant: Variant,
        #[arg(long, default_value_t = 16)]
        hidden: usize,
        #[arg(long)]
        variance_norm: bool,
    },
    /// Write a weight file with random or pass-through weights.
    Init {
        #[arg(long, default_value = "hc")]
        variant: Variant,
        #[arg(long, default_value_t = 16)]
        hidden: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Mask fixed at one: the engine passes audio through unchanged.
        #[arg(long)]
        unity: bool,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args, Clone, Copy)]
struct EngineFlags {
    /// Normalize features by running variance as well as mean.
    #[arg(long)]
    variance_norm: bool,
    /// Normalization time constant in seconds.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Lower bound on gains in dB (e.g. -14).
    #[arg(long, allow_negative_numbers = true)]
    gain_floor: Option<f64>,
}

impl EngineFlags {
    fn config(&self, arch: ArchConfig) -> hrnn::Result<EngineConfig> {
        let cfg = EngineConfig {
            arch,
            variance_norm: self.variance_norm,
            tau_s: self.tau,
            gain_floor_db: self.gain_floor.unwrap_or(f64::NEG_INFINITY),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 2,
        Error::Format(_) => 3,
        Error::Validation(_) => 4,
        Error::Io(_) => 5,
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let head: Vec<&str> = msg
                .lines()
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more"))
                .collect();
            let text = one_line(&head.join(" "));
            eprintln!(
                "error kind=usage message={}",
                text.trim_start_matches("error: ")
            );
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = match &e {
                Error::InvalidArgument(m) | Error::Format(m) | Error::Validation(m) => m.clone(),
                Error::Io(io) => io.to_string(),
            };
            eprintln!("error kind={} message={}", e.kind(), one_line(&msg));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command) -> hrnn::Result<()> {
    match cmd {
        Command::Enhance {
            model,
            input,
            output,
            engine,
        } => {
            let weights = Arc::new(ModelWeights::load(&model)?);
            let cfg = engine.config(weights.arch)?;
            hrnn::engine::enhance_file(&input, &output, weights, cfg)
        }
        Command::Evaluate {
            clean,
            noisy,
            enhanced,
            snr,
            metrics,
            delay,
            output,
        } => evaluate(
            clean,
            noisy,
            enhanced,
            snr,
            &metrics,
            delay,
            output.as_deref(),
        ),
        Command::Mix {
            clean,
            noise,
            snr,
            output,
        } => {
            let c = wav::read_mono(&clean)?;
            let n = wav::read_mono(&noise)?;
            let y = mix::mix(&c, &n, snr)?;
            wav::write_f32(&output, &y)
        }
        Command::Bench {
            model,
            seconds,
            engine,
        } => bench(model.as_deref(), seconds, engine),
        Command::Inspect {
            model,
            variant,
            hidden,
            variance_norm,
        } => {
            let arch = match model {
                Some(path) => ModelWeights::load(&path)?.arch,
                None => ArchConfig::new(variant, hidden, hidden)?,
            };
            inspect(arch, variance_norm)
        }
        Command::Init {
            variant,
            hidden,
            seed,
            unity,
            output,
        } => {
            let arch = ArchConfig::new(variant, hidden, hidden)?;
            let w = if unity {
                ModelWeights::constant_mask(arch, 100.0)
            } else {
                ModelWeights::random(arch, seed)
            };
            w.save(&output)
        }
    }
}

fn evaluate(
    clean: Vec<PathBuf>,
    noisy: Vec<PathBuf>,
    enhanced: Vec<PathBuf>,
    snr: Vec<f64>,
    metrics: &str,
    delay: Option<usize>,
    output: Option<&Path>,
) -> hrnn::Result<()> {
    let set: MetricSet = metrics.parse()?;
    let n = clean.len();
    if noisy.len() != n || enhanced.len() != n {
        return Err(invalid(format!(
            "need one --noisy and one --enhanced per --clean, got {n} clean, {} noisy, {} enhanced",
            noisy.len(),
            enhanced.len()
        )));
    }
    if !(snr.is_empty() || snr.len() == 1 || snr.len() == n) {
        return Err(invalid(format!(
            "--snr given {} times for {n} files; give it once or once per file",
            snr.len()
        )));
    }
    let delay = delay.unwrap_or_else(stream_delay_samples);
    let threads = par::thread_cap_from_env();

    let items: Vec<EvalItem> = par::with_threads(threads, || {
        let idx: Vec<usize> = (0..n).collect();
        par::map(&idx, |&i| -> hrnn::Result<EvalItem> {
            let c = wav::read_mono(&clean[i])?;
            let y = wav::read_mono(&noisy[i])?;
            let e = wav::read_mono(&enhanced[i])?;
            let label = match snr.len() {
                0 => estimate_snr(&c, &y)?,
                1 => snr[0],
                _ => snr[i],
            };
            Ok(EvalItem {
                name: enhanced[i].display().to_string(),
                snr_db: label,
                clean: c,
                noisy: y,
                enhanced: e,
                delay,
            })
        })
        .into_iter()
        .collect::<hrnn::Result<Vec<_>>>()
    })?;
    let results: Vec<FileMetrics> = par::with_threads(threads, || {
        metrics::evaluate_many(&items, set, SAMPLE_RATE)
            .into_iter()
            .collect::<hrnn::Result<Vec<_>>>()
    })?;

    let mut csv = String::new();
    csv.push_str(FileMetrics::CSV_HEADER);
    csv.push('\n');
    for r in &results {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    match output {
        Some(path) => fs::write(path, csv)?,
        None => io::stdout().write_all(csv.as_bytes())?,
    }
    for s in metrics::summarize_by_snr(&results) {
        eprintln!("summary {s}");
    }
    Ok(())
}

/// Input SNR from a clean/noisy pair, rounded to 0.01 dB.
fn estimate_snr(clean: &[f32], noisy: &[f32]) -> hrnn::Result<f64> {
    let n = clean.len().min(noisy.len());
    let noise: Vec<f32> = noisy[..n]
        .iter()
        .zip(&clean[..n])
        .map(|(y, c)| y - c)
        .collect();
    let (pc, pn) = (mix::power(&clean[..n]), mix::power(&noise));
    if pc == 0.0 || pn == 0.0 {
        return Err(invalid(
            "cannot estimate SNR of a silent or noise-free pair; pass --snr",
        ));
    }
    Ok((1000.0 * (pc / pn).log10()).round() / 100.0)
}

fn bench(model: Option<&Path>, seconds: f64, flags: EngineFlags) -> hrnn::Result<()> {
    if !seconds.is_finite() || seconds <= 0.0 {
        return Err(invalid(format!(
            "--seconds must be positive, got {seconds}"
        )));
    }
    let weights = Arc::new(match model {
        Some(p) => ModelWeights::load(p)?,
        None => ModelWeights::random(ArchConfig::hc(16), 0),
    });
    let arch = weights.arch;
    let mut engine = Engine::new(weights, flags.config(arch)?)?;
    let len = ((seconds * SAMPLE_RATE as f64) as usize).max(HOP_SAMPLES);
    let clean = synth::speech_like(len, 1);
    let audio = mix::mix(&clean, &synth::white_noise(len, 1.0, 2), 5.0)?;

    let mut per_hop = Vec::with_capacity(len / HOP_SAMPLES);
    let mut checksum = 0.0f64;
    let start = Instant::now();
    for hop in audio.chunks_exact(HOP_SAMPLES) {
        let t = Instant::now();
        let out = engine.process_hop(hop)?;
        per_hop.push(t.elapsed().as_nanos() as u64);
        if let Some(y) = out {
            checksum += y.iter().map(|&v| v as f64).sum::<f64>();
        }
    }
    let wall = start.elapsed().as_secs_f64();
    per_hop.sort_unstable();
    let pct = |p: f64| per_hop[((per_hop.len() - 1) as f64 * p).round() as usize] as f64 / 1000.0;
    let audio_s = per_hop.len() as f64 / HOPS_PER_SECOND as f64;
    println!("model={arch}");
    println!("hops={}", per_hop.len());
    println!("audio_seconds={audio_s:.3}");
    println!("wall_seconds={wall:.6}");
    println!("real_time_factor={:.6}", wall / audio_s);
    println!("hop_p50_us={:.3}", pct(0.5));
    println!("hop_p99_us={:.3}", pct(0.99));
    println!("hop_max_us={:.3}", pct(1.0));
    println!("output_checksum={checksum:.9e}");
    Ok(())
}

fn inspect(arch: ArchConfig, variance_norm: bool) -> hrnn::Result<()> {
    let conv = FlopConventions { variance_norm };
    let cost = flop_rate(&arch, &conv);
    let executed = instrumented_count(&arch)?;
    let lat = latency_report(&EngineConfig {
        arch,
        variance_norm,
        ..EngineConfig::default()
    });
    let b = cost.breakdown;
    println!("arch={arch}");
    println!("variant={}", arch.variant);
    println!("hidden1={}", arch.hidden1);
    println!("hidden2={}", arch.hidden2);
    println!("params_total={}", cost.params_total);
    for l in &cost.params_per_layer {
        println!("params_{}={}", l.name, l.count);
    }
    println!("flops_gru1_per_hop={}", b.gru1);
    println!("flops_gru2_per_hop={}", b.gru2);
    println!("flops_output_per_hop={}", b.output);
    println!("flops_network_per_hop={}", b.network());
    println!("flops_normalization_per_hop={}", b.normalization);
    println!("flops_bark_per_hop={}", b.bark);
    println!("flops_per_hop={}", cost.flops_per_hop);
    println!("flops_per_second={}", cost.flops_per_second);
    println!("network_mflops={:.3}", cost.network_mflops());
    println!(
        "normalization_mflops={:.3}",
        cost.stage_per_second(b.normalization) as f64 / 1e6
    );
    println!("normalization_reference_mflops={REFERENCE_NORMALIZATION_MFLOPS}");
    println!(
        "bark_kflops={:.3}",
        cost.stage_per_second(b.bark) as f64 / 1e3
    );
    println!("instrumented_ops_per_hop={}", executed.total());
    println!("latency_fbank_ms={}", lat.fbank_ms);
    println!("latency_lookahead_ms={}", lat.lookahead_ms);
    println!("latency_hop_ms={}", lat.hop_ms);
    println!("latency_total_ms={}", lat.total_ms);
    Ok(())
}
