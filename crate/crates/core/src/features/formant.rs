//! First-formant estimation by LPC root solving.

use nalgebra::DMatrix;

use crate::audio::{AudioClip, Resampler};
use crate::dsp::Window;
use crate::error::Result;

use super::VoicingTrack;

#[derive(Debug, Clone, PartialEq)]
pub struct FormantConfig {
    /// Signals are downsampled to this rate (never upsampled) before LPC.
    pub analysis_rate: u32,
    /// Pre-emphasis corner: `x[n] - exp(-2 pi f / fs) x[n-1]`.
    pub preemphasis_hz: f64,
    pub window_s: f64,
    /// LPC order; `None` means `2 + analysis_rate / 1000`.
    pub order: Option<usize>,
    pub max_bandwidth_hz: f64,
    pub min_hz: f64,
    pub max_hz: f64,
    /// Fewer voiced frames than this leaves F1 undefined.
    pub min_voiced_frames: usize,
}

impl Default for FormantConfig {
    fn default() -> Self {
        Self {
            analysis_rate: 10_000,
            preemphasis_hz: 50.0,
            window_s: 0.025,
            order: None,
            max_bandwidth_hz: 400.0,
            min_hz: 150.0,
            max_hz: 1500.0,
            min_voiced_frames: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance {
    pub freq_hz: f64,
    pub bandwidth_hz: f64,
}

fn autocorrelation(frame: &[f64], order: usize) -> Vec<f64> {
    let n = frame.len();
    (0..=order)
        .map(|lag| {
            if lag >= n {
                0.0
            } else {
                frame[..n - lag].iter().zip(&frame[lag..]).map(|(a, b)| a * b).sum()
            }
        })
        .collect()
}

/// Levinson-Durbin recursion on autocorrelation values `r[0..=order]`.
fn levinson(r: &[f64]) -> Option<Vec<f64>> {
    let order = r.len() - 1;
    if r[0] <= 0.0 {
        return None;
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    let mut prev = a.clone();
    for i in 1..=order {
        let acc: f64 = (1..i).map(|j| prev[j] * r[i - j]).sum::<f64>() + r[i];
        let k = -acc / err;
        a[i] = k;
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        err *= 1.0 - k * k;
        if err <= 0.0 {
            break;
        }
        prev.copy_from_slice(&a);
    }
    a.remove(0);
    Some(a)
}

/// Predictor coefficients `a[1..=order]` of `A(z) = 1 + sum a_k z^-k` by the
/// autocorrelation method. `None` for a silent frame.
pub fn lpc_coefficients(frame: &[f64], order: usize) -> Option<Vec<f64>> {
    levinson(&autocorrelation(frame, order))
}

/// Resonances (positive-frequency roots) of the LPC polynomial.
pub fn lpc_resonances(coefficients: &[f64], sample_rate: f64) -> Vec<Resonance> {
    let p = coefficients.len();
    if p == 0 {
        return Vec::new();
    }
    // companion matrix of z^p + a1 z^(p-1) + ... + ap
    let companion = DMatrix::from_fn(p, p, |i, j| {
        if i == 0 {
            -coefficients[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let mut out: Vec<Resonance> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im > 0.0)
        .map(|z| {
            let r = z.norm();
            Resonance {
                freq_hz: z.im.atan2(z.re) * sample_rate / (2.0 * std::f64::consts::PI),
                bandwidth_hz: -r.ln() * sample_rate / std::f64::consts::PI,
            }
        })
        .collect();
    out.sort_by(|a, b| a.freq_hz.total_cmp(&b.freq_hz));
    out
}

/// Prepared analysis signal: resampled and pre-emphasized.
pub(crate) struct FormantAnalyzer<'c> {
    config: &'c FormantConfig,
    rate: f64,
    signal: Vec<f64>,
    window: Vec<f64>,
    order: usize,
}

impl<'c> FormantAnalyzer<'c> {
    pub(crate) fn new(x: &[f64], sample_rate: u32, config: &'c FormantConfig) -> Result<Self> {
        let target = config.analysis_rate.min(sample_rate);
        let mut signal = if target == sample_rate {
            x.to_vec()
        } else {
            Resampler::new(sample_rate, target)?.process(x)
        };
        let alpha = (-2.0 * std::f64::consts::PI * config.preemphasis_hz / target as f64).exp();
        for i in (1..signal.len()).rev() {
            signal[i] -= alpha * signal[i - 1];
        }
        let win_len = ((config.window_s * target as f64).round() as usize).max(4);
        let order = config.order.unwrap_or(2 + target as usize / 1000);

        Ok(Self {
            config,
            rate: target as f64,
            signal,
            window: Window::Hann.coefficients(win_len),
            order,
        })
    }

    /// Lowest in-range, narrow-band resonance of the frame centred at `center_s`.
    pub(crate) fn f1_at(&self, center_s: f64, buf: &mut Vec<f64>) -> Option<f64> {
        let n = self.window.len();
        let start = (center_s * self.rate).round() as i64 - (n / 2) as i64;
        buf.clear();
        buf.extend(self.window.iter().enumerate().map(|(i, w)| {
            let idx = start + i as i64;
            if idx >= 0 && (idx as usize) < self.signal.len() {
                self.signal[idx as usize] * w
            } else {
                0.0
            }
        }));
        let coeffs = lpc_coefficients(buf, self.order)?;
        lpc_resonances(&coeffs, self.rate)
            .into_iter()
            .filter(|r| {
                r.bandwidth_hz < self.config.max_bandwidth_hz
                    && r.freq_hz >= self.config.min_hz
                    && r.freq_hz <= self.config.max_hz
            })
            .map(|r| r.freq_hz)
            .next()
    }
}

pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

/// Per-voiced-frame F1 values (frames without a valid resonance are skipped).
pub fn f1_track(clip: &AudioClip, voicing: &VoicingTrack, config: &FormantConfig) -> Result<Vec<(usize, f64)>> {
    let x = clip.mono_samples()?;
    voicing.check_grid(clip)?;
    let analyzer = FormantAnalyzer::new(x, clip.sample_rate(), config)?;
    let mut buf = Vec::new();
    Ok(voicing
        .voiced_frames()
        .filter_map(|k| {
            let t = voicing.spec().frame_center_s(k, clip.sample_rate());
            analyzer.f1_at(t, &mut buf).map(|f| (k, f))
        })
        .collect())
}

/// Median F1 over voiced frames, `None` if too few frames are voiced or no
/// frame has a valid resonance.
pub fn extract_f1(clip: &AudioClip, voicing: &VoicingTrack) -> Result<Option<f64>> {
    extract_f1_with(clip, voicing, &FormantConfig::default())
}

pub fn extract_f1_with(clip: &AudioClip, voicing: &VoicingTrack, config: &FormantConfig) -> Result<Option<f64>> {
    voicing.check_grid(clip)?;
    if voicing.voiced_count() < config.min_voiced_frames {
        return Ok(None);
    }
    let mut values: Vec<f64> = f1_track(clip, voicing, config)?.into_iter().map(|(_, f)| f).collect();
    Ok(median(&mut values))
}
