use std::path::{Path, PathBuf};
use std::process::ExitCode;

use biosep::interpret::{BackendKind, LabelSet};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

mod analyze_cmd;
mod config;
mod output;
mod plot_cmd;
mod separate_cmd;
mod svg;
mod synth_cmd;

use config::{ConfigError, RunConfig, Sources};

#[derive(Parser)]
#[command(name = "biosep", version, about = "Separate heart and lung sounds and describe each source")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic heart + lung mixture and its references.
    Synth(SynthArgs),
    /// Split a recording into heart, lung and residual sources.
    Separate(SeparateArgs),
    /// Extract features per source and ask a backend for a diagnostic term.
    Analyze(AnalyzeArgs),
    /// Write waveform/spectrogram CSV and SVG renderings.
    PlotData(PlotArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration; flags take precedence over it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct StftArgs {
    #[arg(long)]
    window_len: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long)]
    fft_len: Option<usize>,
}

#[derive(Args)]
struct NmfArgs {
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative divergence improvement below which iteration stops.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Mean beat interval, s.
    #[arg(long)]
    rr_mean: Option<f64>,
    /// Coefficient of variation of the beat intervals.
    #[arg(long)]
    jitter_cv: Option<f64>,
    /// Length, s.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    sample_rate: Option<u32>,
    /// Heart-to-lung energy ratio, dB.
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    lung_center: Option<f64>,
    #[arg(long)]
    lung_bandwidth: Option<f64>,
    /// Lung bursts per second; 0 gives continuous noise.
    #[arg(long)]
    burst_rate: Option<f64>,
    /// Fraction of time the lung bursts are on.
    #[arg(long)]
    burst_duty: Option<f64>,
    #[arg(long, value_enum)]
    sources: Option<Sources>,
}

#[derive(Args)]
struct SeparateArgs {
    /// Mono WAV recording.
    input: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    stft: StftArgs,
    #[command(flatten)]
    nmf: NmfArgs,
    /// Also write the factor matrices as JSON (default `<stem>.model.json`).
    #[arg(long, value_name = "FILE", num_args = 0..=1)]
    save_model: Option<Option<PathBuf>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Remote,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// A mixture, or separated sources named `<stem>.<heart|lung|residual>.wav`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    stft: StftArgs,
    #[command(flatten)]
    nmf: NmfArgs,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long, value_name = "URL")]
    llm_url: Option<String>,
    /// Concurrent backend requests.
    #[arg(long)]
    max_inflight: Option<usize>,
    /// Comma-separated diagnostic terms.
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
}

#[derive(Args)]
struct PlotArgs {
    /// WAV files, or a directory holding a mixture and its separated sources.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    stft: StftArgs,
}

pub enum Failure {
    Usage(String),
    Run(biosep::Error),
}

impl From<biosep::Error> for Failure {
    fn from(e: biosep::Error) -> Self {
        Failure::Run(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(msg) => Failure::Usage(msg),
            ConfigError::Io(e) => Failure::Run(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(biosep::Error::Io(e))
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn base_config(common: &CommonArgs) -> Result<RunConfig, Failure> {
    let mut c = RunConfig::load(common.config.as_deref())?;
    if common.out.is_some() {
        c.out = common.out.clone();
    }
    if common.seed.is_some() {
        c.seed = common.seed;
    }
    Ok(c)
}

fn apply_stft(c: &mut RunConfig, a: &StftArgs) {
    set(&mut c.stft.window_len, a.window_len);
    set(&mut c.stft.hop, a.hop);
    match (a.fft_len, a.window_len) {
        (Some(n), _) => c.stft.fft_len = n,
        (None, Some(w)) if c.stft.fft_len < w => c.stft.fft_len = w,
        _ => {}
    }
}

fn apply_nmf(c: &mut RunConfig, a: &NmfArgs) {
    set(&mut c.nmf.rank, a.rank);
    set(&mut c.nmf.max_iters, a.max_iters);
    set(&mut c.nmf.rel_tol, a.tol);
}

fn finish(mut c: RunConfig) -> Result<RunConfig, Failure> {
    c.apply_seed();
    c.validate()?;
    Ok(c)
}

/// Output directory: configured, else next to `input`, else the working directory.
pub fn out_dir(c: &RunConfig, input: Option<&Path>) -> PathBuf {
    c.out.clone().unwrap_or_else(|| {
        input
            .and_then(Path::parent)
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth(a) => {
            let mut c = base_config(&a.common)?;
            let s = &mut c.synth;
            set(&mut s.heart.rr_mean_s, a.rr_mean);
            set(&mut s.heart.rr_jitter_cv, a.jitter_cv);
            set(&mut s.duration_s, a.duration);
            set(&mut s.sample_rate_hz, a.sample_rate);
            set(&mut s.snr_db, a.snr_db);
            set(&mut s.lung.center_freq_hz, a.lung_center);
            set(&mut s.lung.bandwidth_hz, a.lung_bandwidth);
            set(&mut s.lung.burst_rate_per_s, a.burst_rate);
            set(&mut s.lung.burst_duty, a.burst_duty);
            set(&mut s.sources, a.sources);
            synth_cmd::run(&finish(c)?)
        }
        Command::Separate(a) => {
            let mut c = base_config(&a.common)?;
            apply_stft(&mut c, &a.stft);
            apply_nmf(&mut c, &a.nmf);
            separate_cmd::run(&finish(c)?, &a.input, a.save_model)
        }
        Command::Analyze(a) => {
            let mut c = base_config(&a.common)?;
            apply_stft(&mut c, &a.stft);
            apply_nmf(&mut c, &a.nmf);
            if let Some(b) = a.backend {
                c.backend = match b {
                    BackendArg::Mock => BackendKind::Mock,
                    BackendArg::Remote => BackendKind::Remote,
                };
            }
            if a.llm_url.is_some() {
                c.llm_url = a.llm_url;
            }
            set(&mut c.max_inflight, a.max_inflight);
            if let Some(terms) = a.labels {
                c.labels = LabelSet::new(terms).map_err(|e| Failure::Usage(e.to_string()))?;
            }
            analyze_cmd::run(&finish(c)?, &a.inputs)
        }
        Command::PlotData(a) => {
            let mut c = base_config(&a.common)?;
            apply_stft(&mut c, &a.stft);
            plot_cmd::run(&finish(c)?, &a.inputs)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => Cli::command().error(ErrorKind::ValueValidation, msg).exit(),
        Err(Failure::Run(e)) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(1)
        }
    }
}
