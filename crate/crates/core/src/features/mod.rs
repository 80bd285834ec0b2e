//! Prosodic features of an utterance: voiced-frame level, F0, F1 and
//! spectral tilt, plus the frame-energy contour used for hearing audio.
//!
//! All frame-level quantities share one grid (25 ms frames every 5 ms by
//! default) so a single voicing mask selects the frames for every feature.

mod formant;
mod level;
mod pitch;
mod tilt;

use serde::{Deserialize, Serialize};

pub use formant::{
    extract_f1, extract_f1_with, f1_track, lpc_coefficients, lpc_resonances, FormantConfig, Resonance,
};
pub use level::{active_rms, activity_mask, energy_contour, extract_rms, whole_rms_db};
pub(crate) use level::masked_rms;
pub(crate) use tilt::ls_slope;
pub use pitch::{extract_f0, extract_f0_with, PitchConfig, VoicingTrack};
pub use tilt::{extract_spectral_tilt, frame_tilt};

use crate::audio::AudioClip;
use crate::dsp::{FilterBank, FrameSpec};
use crate::error::{Error, Result};

/// Feature values of one utterance. Each value is `None` when undefined
/// (too few voiced frames, or no valid formant).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UtteranceFeatures {
    pub rms_db: Option<f64>,
    pub f0_mean_hz: Option<f64>,
    pub f1_mean_hz: Option<f64>,
    pub spectral_tilt_db_per_oct: Option<f64>,
    pub voiced_frame_count: usize,
}

impl UtteranceFeatures {
    pub fn get(&self, feature: Feature) -> Option<f64> {
        match feature {
            Feature::Rms => self.rms_db,
            Feature::F0 => self.f0_mean_hz,
            Feature::F1 => self.f1_mean_hz,
            Feature::SpectralTilt => self.spectral_tilt_db_per_oct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Rms,
    F0,
    F1,
    SpectralTilt,
}

impl Feature {
    pub const ALL: [Feature; 4] = [Feature::Rms, Feature::F0, Feature::F1, Feature::SpectralTilt];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Rms => "rms",
            Feature::F0 => "f0",
            Feature::F1 => "f1",
            Feature::SpectralTilt => "spectral_tilt",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Feature::Rms => "dBFS",
            Feature::F0 | Feature::F1 => "Hz",
            Feature::SpectralTilt => "dB/oct",
        }
    }
}

impl std::fmt::Display for Feature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid("feature", format!("unknown feature `{s}`")))
    }
}

/// Which samples the level feature averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RmsMode {
    #[default]
    VoicedFrames,
    WholeUtterance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub frame_s: f64,
    pub hop_s: f64,
    pub pitch: PitchConfig,
    pub formant: FormantConfig,
    pub bank: FilterBank,
    pub rms_mode: RmsMode,
    /// Features are undefined below this many voiced frames.
    pub min_voiced_frames: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            frame_s: 0.025,
            hop_s: 0.005,
            pitch: PitchConfig::default(),
            formant: FormantConfig::default(),
            bank: FilterBank::tilt_default(),
            rms_mode: RmsMode::VoicedFrames,
            min_voiced_frames: 5,
        }
    }
}

impl FeatureConfig {
    pub fn frame_spec(&self, sample_rate: u32) -> Result<FrameSpec> {
        FrameSpec::from_seconds(self.frame_s, self.hop_s, sample_rate, crate::dsp::Window::Hann)
    }
}

/// Runs the full per-utterance analysis on a mono clip.
pub fn extract_features(clip: &AudioClip, config: &FeatureConfig) -> Result<UtteranceFeatures> {
    let spec = config.frame_spec(clip.sample_rate())?;
    let voicing = extract_f0_with(clip, &spec, &config.pitch)?;
    let voiced = voicing.voiced_count();
    if voiced < config.min_voiced_frames {
        return Ok(UtteranceFeatures {
            voiced_frame_count: voiced,
            ..Default::default()
        });
    }
    let rms_db = match config.rms_mode {
        RmsMode::VoicedFrames => extract_rms(clip, &voicing)?,
        RmsMode::WholeUtterance => whole_rms_db(clip)?,
    };
    let formant = FormantConfig {
        min_voiced_frames: config.min_voiced_frames,
        ..config.formant.clone()
    };
    let f1 = extract_f1_with(clip, &voicing, &formant)?;
    let tilt = match extract_spectral_tilt(clip, &voicing, &config.bank) {
        Ok(t) => Some(t),
        // a bank that does not fit under the Nyquist frequency leaves tilt undefined
        Err(Error::TooFewBands | Error::AboveNyquist { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(UtteranceFeatures {
        rms_db,
        f0_mean_hz: voicing.mean_f0(),
        f1_mean_hz: f1,
        spectral_tilt_db_per_oct: tilt,
        voiced_frame_count: voiced,
    })
}
