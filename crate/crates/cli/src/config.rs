//! Run configuration: built-in defaults, overlaid by `key = value` files in
//! the order given, overlaid by command-line flags.
//!
//! ```text
//! # comments and blank lines are ignored
//! run.seed = 7
//! [vad]
//! onset_db = 15     # same as vad.onset_db
//! ```

use std::fmt::Write as _;
use std::path::Path;

use earshot::augment::{BoostMap, HearingMode};
use earshot::corpus::DEFAULT_LABEL_THRESHOLDS;
use earshot::features::{Feature, FeatureConfig, RmsMode};
use earshot::stats::{EnvEffectConfig, TestMethod};
use earshot::vad::VadConfig;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{origin}: line {line}: {message}")]
    Syntax {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: cannot use `{value}`: {message}")]
    BadValue {
        key: String,
        value: String,
        message: String,
    },
    #[error("cannot read config file {path}: {message}")]
    Unreadable { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub vad: VadConfig,
    pub features: FeatureConfig,
    pub label_thresholds: (f64, f64),
    pub alpha: f64,
    pub method: MethodChoice,
    pub resamples: usize,
    pub stat_features: Vec<Feature>,
    pub snr_grid: Vec<f64>,
    pub boost: BoostMap,
    pub hearing: HearingMode,
    pub ambience_gain_db: f64,
    pub align_rms_db: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Welch,
    Permutation,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            vad: VadConfig::default(),
            features: FeatureConfig::default(),
            label_thresholds: DEFAULT_LABEL_THRESHOLDS,
            alpha: 0.05,
            method: MethodChoice::Welch,
            resamples: 10_000,
            stat_features: Feature::ALL.to_vec(),
            snr_grid: vec![0.0, 5.0, 10.0, 20.0],
            boost: BoostMap::default(),
            hearing: HearingMode::NoiseOnly,
            ambience_gain_db: 0.0,
            align_rms_db: None,
        }
    }
}

fn bad(key: &str, value: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| bad(key, value, e.to_string()))
}

fn finite(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = num(key, value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, value, "must be finite"))
    }
}

fn list<T>(key: &str, value: &str, item: impl Fn(&str, &str) -> Result<T, ConfigError>) -> Result<Vec<T>, ConfigError> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| item(key, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(bad(key, value, "empty list"));
    }
    Ok(items)
}

fn optional_db(key: &str, value: &str, off: f64) -> Result<f64, ConfigError> {
    if value == "off" {
        Ok(off)
    } else {
        finite(key, value)
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value;
        match key {
            "run.seed" => self.seed = num(key, v)?,
            "run.threads" => self.threads = num(key, v)?,

            "vad.frame_s" => self.vad.frame_s = finite(key, v)?,
            "vad.hop_s" => self.vad.hop_s = finite(key, v)?,
            "vad.onset_db" => self.vad.onset_margin_db = finite(key, v)?,
            "vad.offset_db" => self.vad.offset_margin_db = finite(key, v)?,
            "vad.hangover_s" => self.vad.hangover_s = finite(key, v)?,
            "vad.min_duration_s" => self.vad.min_duration_s = finite(key, v)?,
            "vad.merge_gap_s" => self.vad.merge_gap_s = finite(key, v)?,
            "vad.floor_percentile" => self.vad.floor_percentile = finite(key, v)?,

            "features.frame_s" => self.features.frame_s = finite(key, v)?,
            "features.hop_s" => self.features.hop_s = finite(key, v)?,
            "features.f0_min_hz" => self.features.pitch.min_hz = finite(key, v)?,
            "features.f0_max_hz" => self.features.pitch.max_hz = finite(key, v)?,
            "features.aperiodicity_threshold" => self.features.pitch.aperiodicity_threshold = finite(key, v)?,
            "features.silence_db" => self.features.pitch.silence_db = finite(key, v)?,
            "features.min_voiced_frames" => self.features.min_voiced_frames = num(key, v)?,
            "features.rms_mode" => {
                self.features.rms_mode = match v {
                    "voiced" => RmsMode::VoicedFrames,
                    "whole" => RmsMode::WholeUtterance,
                    _ => return Err(bad(key, v, "expected `voiced` or `whole`")),
                }
            }
            "features.formant_rate" => self.features.formant.analysis_rate = num(key, v)?,
            "features.f1_min_hz" => self.features.formant.min_hz = finite(key, v)?,
            "features.f1_max_hz" => self.features.formant.max_hz = finite(key, v)?,
            "features.formant_max_bandwidth_hz" => self.features.formant.max_bandwidth_hz = finite(key, v)?,

            "labels.quiet_max_db" => self.label_thresholds.0 = finite(key, v)?,
            "labels.noisy_min_db" => self.label_thresholds.1 = finite(key, v)?,

            "stats.alpha" => {
                let a = finite(key, v)?;
                if !(a > 0.0 && a < 1.0) {
                    return Err(bad(key, v, "must lie in (0, 1)"));
                }
                self.alpha = a;
            }
            "stats.method" => {
                self.method = match v {
                    "welch" => MethodChoice::Welch,
                    "permutation" => MethodChoice::Permutation,
                    _ => return Err(bad(key, v, "expected `welch` or `permutation`")),
                }
            }
            "stats.resamples" => self.resamples = num(key, v)?,
            "stats.features" => {
                self.stat_features = list(key, v, |k, s| s.parse::<Feature>().map_err(|e| bad(k, s, e.to_string())))?
            }

            "pseudo.snr_grid" => self.snr_grid = list(key, v, finite)?,
            "pseudo.boost_reference_snr_db" => self.boost.reference_snr_db = finite(key, v)?,
            "pseudo.boost_slope" => self.boost.slope = finite(key, v)?,
            "pseudo.boost_max" => self.boost.max_db_per_oct = finite(key, v)?,
            "pseudo.hearing" => {
                self.hearing = match v {
                    "noise" => HearingMode::NoiseOnly,
                    "prior" => HearingMode::PriorUtterance,
                    _ => return Err(bad(key, v, "expected `noise` or `prior`")),
                }
            }

            "render.ambience_gain_db" => self.ambience_gain_db = optional_db(key, v, f64::NEG_INFINITY)?,
            "render.align_rms_db" => {
                self.align_rms_db = if v == "off" { None } else { Some(finite(key, v)?) }
            }
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Applies every setting of a config text; `origin` names it in errors.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: &str| ConfigError::Syntax {
                origin: origin.into(),
                line: i + 1,
                message: message.into(),
            };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| syntax("unterminated section header"))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| syntax("expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(syntax("empty key"));
            }
            let key = if section.is_empty() || k.contains('.') { k.to_string() } else { format!("{section}.{k}") };
            self.set(&key, v).map_err(|e| match e {
                ConfigError::Syntax { .. } => e,
                other => syntax(&other.to_string()),
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Every key with its resolved value, in a stable order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let f = &self.features;
        let rms_mode = match f.rms_mode {
            RmsMode::VoicedFrames => "voiced",
            RmsMode::WholeUtterance => "whole",
        };
        let method = match self.method {
            MethodChoice::Welch => "welch",
            MethodChoice::Permutation => "permutation",
        };
        let hearing = match self.hearing {
            HearingMode::NoiseOnly => "noise",
            HearingMode::PriorUtterance => "prior",
        };
        let db_or_off = |v: f64| if v.is_finite() { v.to_string() } else { "off".into() };
        vec![
            ("run.seed", self.seed.to_string()),
            ("run.threads", self.threads.to_string()),
            ("vad.frame_s", self.vad.frame_s.to_string()),
            ("vad.hop_s", self.vad.hop_s.to_string()),
            ("vad.onset_db", self.vad.onset_margin_db.to_string()),
            ("vad.offset_db", self.vad.offset_margin_db.to_string()),
            ("vad.hangover_s", self.vad.hangover_s.to_string()),
            ("vad.min_duration_s", self.vad.min_duration_s.to_string()),
            ("vad.merge_gap_s", self.vad.merge_gap_s.to_string()),
            ("vad.floor_percentile", self.vad.floor_percentile.to_string()),
            ("features.frame_s", f.frame_s.to_string()),
            ("features.hop_s", f.hop_s.to_string()),
            ("features.f0_min_hz", f.pitch.min_hz.to_string()),
            ("features.f0_max_hz", f.pitch.max_hz.to_string()),
            ("features.aperiodicity_threshold", f.pitch.aperiodicity_threshold.to_string()),
            ("features.silence_db", f.pitch.silence_db.to_string()),
            ("features.min_voiced_frames", f.min_voiced_frames.to_string()),
            ("features.rms_mode", rms_mode.into()),
            ("features.formant_rate", f.formant.analysis_rate.to_string()),
            ("features.f1_min_hz", f.formant.min_hz.to_string()),
            ("features.f1_max_hz", f.formant.max_hz.to_string()),
            ("features.formant_max_bandwidth_hz", f.formant.max_bandwidth_hz.to_string()),
            ("labels.quiet_max_db", self.label_thresholds.0.to_string()),
            ("labels.noisy_min_db", self.label_thresholds.1.to_string()),
            ("stats.alpha", self.alpha.to_string()),
            ("stats.method", method.into()),
            ("stats.resamples", self.resamples.to_string()),
            (
                "stats.features",
                self.stat_features.iter().map(|f| f.name()).collect::<Vec<_>>().join(","),
            ),
            ("pseudo.snr_grid", join(&self.snr_grid)),
            ("pseudo.boost_reference_snr_db", self.boost.reference_snr_db.to_string()),
            ("pseudo.boost_slope", self.boost.slope.to_string()),
            ("pseudo.boost_max", self.boost.max_db_per_oct.to_string()),
            ("pseudo.hearing", hearing.into()),
            ("render.ambience_gain_db", db_or_off(self.ambience_gain_db)),
            ("render.align_rms_db", self.align_rms_db.map_or("off".into(), |v| v.to_string())),
        ]
    }

    /// The resolved configuration in the format [`apply_text`](Self::apply_text) reads.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn env_effect(&self) -> EnvEffectConfig {
        EnvEffectConfig {
            alpha: self.alpha,
            method: match self.method {
                MethodChoice::Welch => TestMethod::Welch,
                MethodChoice::Permutation => TestMethod::Permutation {
                    resamples: self.resamples,
                    seed: self.seed,
                },
            },
            features: self.stat_features.clone(),
        }
    }
}
