//! F0 tracking and voicing decisions.
//!
//! A cumulative-mean-normalized difference function (YIN) is evaluated on a
//! signal decimated to roughly 8 kHz, the first dip under the aperiodicity
//! threshold is taken, and the lag is then refined on the full-rate signal
//! with a parabolic fit.

use crate::audio::{AudioClip, Resampler};
use crate::dsp::FrameSpec;
use crate::error::{Error, Result};

/// Per-frame voicing decision and F0 on the shared analysis grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoicingTrack {
    spec: FrameSpec,
    sample_rate: u32,
    n_samples: usize,
    voiced: Vec<bool>,
    f0_hz: Vec<Option<f64>>,
}

impl VoicingTrack {
    /// Track with an explicit voicing mask and no F0 values.
    pub fn from_mask(n_samples: usize, sample_rate: u32, spec: FrameSpec, voiced: Vec<bool>) -> Result<Self> {
        let expected = spec.frame_count(n_samples);
        if voiced.len() != expected {
            return Err(Error::GridMismatch {
                expected,
                actual: voiced.len(),
            });
        }
        let f0_hz = vec![None; voiced.len()];
        Ok(Self {
            spec,
            sample_rate,
            n_samples,
            voiced,
            f0_hz,
        })
    }

    /// Every frame of `clip` marked voiced.
    pub fn all_voiced(clip: &AudioClip, spec: FrameSpec) -> Self {
        let n = spec.frame_count(clip.len());
        Self::from_mask(clip.len(), clip.sample_rate(), spec, vec![true; n])
            .expect("mask sized from the clip")
    }

    pub fn spec(&self) -> &FrameSpec {
        &self.spec
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.voiced.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voiced.is_empty()
    }

    pub fn voiced(&self) -> &[bool] {
        &self.voiced
    }

    pub fn f0_hz(&self) -> &[Option<f64>] {
        &self.f0_hz
    }

    /// Centre time of each frame in seconds.
    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.spec.frame_center_s(k, self.sample_rate))
            .collect()
    }

    pub fn voiced_count(&self) -> usize {
        self.voiced.iter().filter(|&&v| v).count()
    }

    /// Mean F0 over voiced frames that carry an estimate.
    pub fn mean_f0(&self) -> Option<f64> {
        let vals: Vec<f64> = self.f0_hz.iter().flatten().copied().collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Fails unless the track was computed on a clip of this length and rate.
    pub fn check_grid(&self, clip: &AudioClip) -> Result<()> {
        let expected = self.spec.frame_count(clip.len());
        if clip.sample_rate() != self.sample_rate || clip.len() != self.n_samples || expected != self.len() {
            return Err(Error::GridMismatch {
                expected,
                actual: self.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn voiced_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.voiced
            .iter()
            .enumerate()
            .filter_map(|(k, &v)| v.then_some(k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchConfig {
    pub min_hz: f64,
    pub max_hz: f64,
    /// Largest normalized-difference dip accepted as periodic.
    pub aperiodicity_threshold: f64,
    /// Frames quieter than this (dBFS mean square) are unvoiced.
    pub silence_db: f64,
    /// Rate the coarse search runs at; the decimation factor is the largest
    /// divisor of the clip rate that keeps at least this rate.
    pub coarse_rate_hz: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            min_hz: 70.0,
            max_hz: 400.0,
            aperiodicity_threshold: 0.2,
            silence_db: -70.0,
            coarse_rate_hz: 8000.0,
        }
    }
}

impl PitchConfig {
    pub fn with_range(min_hz: f64, max_hz: f64) -> Self {
        Self {
            min_hz,
            max_hz,
            ..Self::default()
        }
    }
}

fn decimation_factor(sample_rate: u32, coarse_rate: f64) -> u32 {
    let mut d = ((sample_rate as f64 / coarse_rate).floor() as u32).max(1);
    while sample_rate % d != 0 {
        d -= 1;
    }
    d
}

/// Sum of squared differences between `seg[j]` and `seg[j + lag]`, `j < w`.
#[inline]
fn difference(seg: &[f64], w: usize, lag: usize) -> f64 {
    seg[..w]
        .iter()
        .zip(&seg[lag..lag + w])
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Copies `x[start..start + len]` into `buf`, zero outside the signal.
fn copy_padded(x: &[f64], start: i64, buf: &mut [f64]) {
    let n = x.len() as i64;
    for (i, b) in buf.iter_mut().enumerate() {
        let idx = start + i as i64;
        *b = if idx >= 0 && idx < n { x[idx as usize] } else { 0.0 };
    }
}

fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom.abs() < 1e-300 {
        0.0
    } else {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    }
}

/// F0 track on the default analysis grid with the given search range.
pub fn extract_f0(clip: &AudioClip, range: (f64, f64)) -> Result<VoicingTrack> {
    let spec = FrameSpec::analysis_default(clip.sample_rate());
    extract_f0_with(clip, &spec, &PitchConfig::with_range(range.0, range.1))
}

pub fn extract_f0_with(clip: &AudioClip, spec: &FrameSpec, config: &PitchConfig) -> Result<VoicingTrack> {
    let x = clip.mono_samples()?;
    let sr = clip.sample_rate();
    let nyquist = sr as f64 / 2.0;
    if !(config.min_hz > 0.0 && config.min_hz < config.max_hz && config.max_hz < nyquist / 2.0) {
        return Err(Error::invalid(
            "range",
            format!(
                "need 0 < min ({}) < max ({}) < Nyquist/2 ({})",
                config.min_hz,
                config.max_hz,
                nyquist / 2.0
            ),
        ));
    }
    if x.len() < spec.frame_length() {
        return Err(Error::invalid(
            "clip",
            format!("{} samples is shorter than one frame ({})", x.len(), spec.frame_length()),
        ));
    }

    let dec = decimation_factor(sr, config.coarse_rate_hz.max(4.0 * config.max_hz)) as usize;
    let coarse_rate = sr as f64 / dec as f64;
    let coarse: Vec<f64> = if dec == 1 {
        x.to_vec()
    } else {
        Resampler::new(sr, sr / dec as u32)?.process(x)
    };

    let lag_min = ((coarse_rate / config.max_hz).floor() as usize).max(2);
    let lag_max = (coarse_rate / config.min_hz).ceil() as usize + 1;
    let w = lag_max;
    let mut seg = vec![0.0; w + lag_max + 1];
    let mut diff = vec![0.0; lag_max + 2];
    let mut cmnd = vec![1.0; lag_max + 2];

    let fine_w = w * dec;
    let fine_span = 2 * dec + 3;
    let mut fine_seg = vec![0.0; fine_w + lag_max * dec + fine_span + 2];
    let silence = 10f64.powf(config.silence_db / 10.0);

    let n_frames = spec.frame_count(x.len());
    let mut voiced = vec![false; n_frames];
    let mut f0_hz = vec![None; n_frames];

    for k in 0..n_frames {
        let center = (k * spec.hop_length()) as f64 + spec.frame_length() as f64 / 2.0;
        let c_coarse = (center / dec as f64).round() as i64;
        let start = c_coarse - ((w + lag_max) / 2) as i64;
        copy_padded(&coarse, start, &mut seg);

        let energy = seg[..w + lag_max].iter().map(|s| s * s).sum::<f64>() / (w + lag_max) as f64;
        if energy < silence {
            continue;
        }

        let mut running = 0.0;
        for lag in 1..=lag_max {
            diff[lag] = difference(&seg, w, lag);
            running += diff[lag];
            cmnd[lag] = if running > 0.0 {
                diff[lag] * lag as f64 / running
            } else {
                1.0
            };
        }

        // first dip under the threshold, followed down to its local minimum
        let mut best = None;
        let mut lag = lag_min;
        while lag < lag_max {
            if cmnd[lag] < config.aperiodicity_threshold {
                while lag + 1 < lag_max && cmnd[lag + 1] < cmnd[lag] {
                    lag += 1;
                }
                best = Some(lag);
                break;
            }
            lag += 1;
        }
        let Some(lag) = best else { continue };
        let coarse_lag = if lag > 1 && lag < lag_max {
            lag as f64 + parabolic_offset(cmnd[lag - 1], cmnd[lag], cmnd[lag + 1])
        } else {
            lag as f64
        };

        let period = if dec == 1 {
            coarse_lag
        } else {
            let guess = coarse_lag * dec as f64;
            let lo = (guess.floor() as usize).saturating_sub(dec + 1).max(2);
            let hi = guess.ceil() as usize + dec + 1;
            let start = center.round() as i64 - ((fine_w + hi) / 2) as i64;
            let seg_len = fine_w + hi + 1;
            if fine_seg.len() < seg_len {
                fine_seg.resize(seg_len, 0.0);
            }
            copy_padded(x, start, &mut fine_seg[..seg_len]);
            let d: Vec<f64> = (lo..=hi).map(|l| difference(&fine_seg, fine_w, l)).collect();
            let (i_min, _) = d
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("non-empty lag range");
            if i_min > 0 && i_min + 1 < d.len() {
                (lo + i_min) as f64 + parabolic_offset(d[i_min - 1], d[i_min], d[i_min + 1])
            } else {
                guess
            }
        };

        let f0 = sr as f64 / period;
        if f0 >= config.min_hz && f0 <= config.max_hz {
            voiced[k] = true;
            f0_hz[k] = Some(f0);
        }
    }

    Ok(VoicingTrack {
        spec: *spec,
        sample_rate: sr,
        n_samples: x.len(),
        voiced,
        f0_hz,
    })
}
