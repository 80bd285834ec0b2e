//! Command-line front end for earshot. [`run`] parses arguments, layers the
//! configuration, runs one subcommand on a bounded thread pool and maps the
//! outcome to an exit code: 0 ok, 1 internal error or failed items, 2 usage
//! or validation error.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use commands::SegmentInput;
use config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "earshot", version, about = "Speech-in-environment corpus tooling")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Corpus or utterance manifest (JSON lines).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Directory for every output of the run.
    #[arg(long, global = true, default_value = "earshot-out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// `key = value` config file; repeat to layer several, later ones win.
    #[arg(long = "config", global = true, value_name = "FILE")]
    pub configs: Vec<PathBuf>,
    /// Single config override, applied after the files.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect utterances in a WAV file or in every close-talk recording of a manifest.
    Segment {
        /// Single WAV file; otherwise --manifest is segmented.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        onset_db: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        offset_db: Option<f64>,
        #[arg(long)]
        hangover_s: Option<f64>,
        #[arg(long)]
        min_duration_s: Option<f64>,
        #[arg(long)]
        merge_gap_s: Option<f64>,
    },
    /// Per-utterance level, F0, F1 and spectral tilt.
    Features,
    /// Feature shifts between environment labels, per speaker.
    Analyze {
        #[arg(long)]
        alpha: Option<f64>,
        /// `welch` or `permutation`.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        resamples: Option<usize>,
        /// Comma-separated subset of rms,f0,f1,spectral_tilt.
        #[arg(long)]
        features: Option<String>,
    },
    /// Correlation between consecutive turns, per speaker pair and label.
    Entrain {
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        features: Option<String>,
    },
    /// Noise-paired, tilt-boosted training pairs.
    Pseudo {
        /// Directory of noise WAV files.
        #[arg(long)]
        noise_dir: PathBuf,
        /// Comma-separated SNRs in dB.
        #[arg(long, allow_hyphen_values = true)]
        snr_grid: Option<String>,
        /// `noise` or `prior`.
        #[arg(long)]
        hearing: Option<String>,
    },
    /// Listener-position stimuli from each session's impulse responses.
    RenderEval {
        /// Ambience gain in dB, or `off`.
        #[arg(long, allow_hyphen_values = true)]
        ambience_gain_db: Option<String>,
        /// Speech level (dBFS) before convolution, or `off`.
        #[arg(long, allow_hyphen_values = true)]
        align_rms_db: Option<String>,
    },
    /// Assign quiet/moderate/noisy labels from each session's ambient level.
    Labels {
        #[arg(long)]
        quiet_max_db: Option<f64>,
        #[arg(long)]
        noisy_min_db: Option<f64>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] earshot::Error),
    #[error("{0} item(s) failed; see failures.jsonl")]
    ItemsFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Core(_) | CliError::ItemsFailed(_) => 1,
        }
    }
}

impl Command {
    /// Flag values as config overrides.
    fn overrides(&self) -> Vec<(&'static str, String)> {
        fn push<T: ToString>(out: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<T>) {
            if let Some(v) = v {
                out.push((key, v.to_string()));
            }
        }
        let mut out = Vec::new();
        match self {
            Command::Segment {
                onset_db,
                offset_db,
                hangover_s,
                min_duration_s,
                merge_gap_s,
                ..
            } => {
                push(&mut out, "vad.onset_db", onset_db);
                push(&mut out, "vad.offset_db", offset_db);
                push(&mut out, "vad.hangover_s", hangover_s);
                push(&mut out, "vad.min_duration_s", min_duration_s);
                push(&mut out, "vad.merge_gap_s", merge_gap_s);
            }
            Command::Features => {}
            Command::Analyze {
                alpha,
                method,
                resamples,
                features,
            } => {
                push(&mut out, "stats.alpha", alpha);
                push(&mut out, "stats.method", method);
                push(&mut out, "stats.resamples", resamples);
                push(&mut out, "stats.features", features);
            }
            Command::Entrain { alpha, features } => {
                push(&mut out, "stats.alpha", alpha);
                push(&mut out, "stats.features", features);
            }
            Command::Pseudo { snr_grid, hearing, .. } => {
                push(&mut out, "pseudo.snr_grid", snr_grid);
                push(&mut out, "pseudo.hearing", hearing);
            }
            Command::RenderEval {
                ambience_gain_db,
                align_rms_db,
            } => {
                push(&mut out, "render.ambience_gain_db", ambience_gain_db);
                push(&mut out, "render.align_rms_db", align_rms_db);
            }
            Command::Labels {
                quiet_max_db,
                noisy_min_db,
            } => {
                push(&mut out, "labels.quiet_max_db", quiet_max_db);
                push(&mut out, "labels.noisy_min_db", noisy_min_db);
            }
        }
        out
    }
}

/// Defaults, then config files in order, then `--set`, then dedicated flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::default();
    for path in &cli.common.configs {
        config.apply_file(path)?;
    }
    for kv in &cli.common.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        config.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }
    if let Some(threads) = cli.common.threads {
        config.threads = threads;
    }
    for (k, v) in cli.command.overrides() {
        config.set(k, &v)?;
    }
    Ok(config)
}

fn need_manifest(cli: &Cli) -> Result<&Path, CliError> {
    cli.common
        .manifest
        .as_deref()
        .ok_or_else(|| CliError::Usage("this subcommand needs --manifest".into()))
}

/// Runs a parsed command line; returns a one-line summary.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let config = resolve_config(cli)?;
    let out = cli.common.out_dir.as_path();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", config.threads)))?;
    commands::prepare_out_dir(out, &config)?;
    pool.install(|| -> Result<String, CliError> {
        Ok(match &cli.command {
            Command::Segment { input, .. } => {
                let source = match (input, &cli.common.manifest) {
                    (Some(wav), _) => SegmentInput::Wav(wav),
                    (None, Some(m)) => SegmentInput::Manifest(m),
                    (None, None) => return Err(CliError::Usage("segment needs --input or --manifest".into())),
                };
                let n = commands::cmd_segment(source, &config, out)?;
                format!("{n} segment(s)")
            }
            Command::Features => {
                let n = commands::cmd_features(need_manifest(cli)?, &config, out)?;
                format!("features for {n} utterance(s)")
            }
            Command::Analyze { .. } => {
                let r = commands::cmd_analyze(need_manifest(cli)?, &config, out)?;
                let sig = r.comparisons.iter().filter(|c| c.test.significant).count();
                format!("{} comparison(s), {sig} significant", r.comparisons.len())
            }
            Command::Entrain { .. } => {
                let r = commands::cmd_entrain(need_manifest(cli)?, &config, out)?;
                format!("{} entrainment row(s)", r.rows.len())
            }
            Command::Pseudo { noise_dir, .. } => {
                let n = commands::cmd_pseudo(need_manifest(cli)?, noise_dir, &config, out)?;
                format!("{n} pseudo pair(s)")
            }
            Command::RenderEval { .. } => {
                let s = commands::cmd_render(need_manifest(cli)?, &config, out)?;
                if !s.failures.is_empty() {
                    for f in &s.failures {
                        eprintln!("failed: {} {}: {}", f.utterance_id, f.ir_id, f.message);
                    }
                    return Err(CliError::ItemsFailed(s.failures.len()));
                }
                format!("{} stimulus file(s)", s.rendered)
            }
            Command::Labels { .. } => {
                let m = commands::cmd_labels(need_manifest(cli)?, &config, out)?;
                format!("labelled {} session(s)", m.sessions.len())
            }
        })
    })
}

/// Entry point shared by the binary and tests: parse `args` (including the
/// program name), run, print, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            e.exit_code()
        }
    }
}
