use crate::audio::AudioClip;
use crate::dsp::{fill_frame, sum_bands, FilterBank, PowerSpectrum};
use crate::error::{Error, Result};

use super::VoicingTrack;

/// Least-squares slope of `y` against `x`.
pub(crate) fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

/// Spectral tilt of one frame's band energies, dB per octave of band centre.
/// `None` when fewer than two bands carry energy.
pub fn frame_tilt(energies: &[f64], bank: &FilterBank) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = energies
        .iter()
        .zip(bank.bands())
        .filter(|(e, _)| **e > 0.0)
        .map(|(e, b)| (b.center_hz.log2(), 10.0 * e.log10()))
        .unzip();
    (xs.len() >= 2).then(|| ls_slope(&xs, &ys))
}

/// Mean over voiced frames of the per-frame tilt (dB/octave).
pub fn extract_spectral_tilt(clip: &AudioClip, voicing: &VoicingTrack, bank: &FilterBank) -> Result<f64> {
    let x = clip.mono_samples()?;
    voicing.check_grid(clip)?;
    bank.check_rate(clip.sample_rate())?;
    if voicing.voiced_count() == 0 {
        return Err(Error::NoVoicedFrames);
    }
    let spec = voicing.spec();
    let fft_len = PowerSpectrum::len_for(spec.frame_length());
    let mut analyzer = PowerSpectrum::new(fft_len);
    let layout = bank.layout(fft_len, clip.sample_rate());
    let window = spec.window().coefficients(spec.frame_length());
    let mut frame = vec![0.0; spec.frame_length()];
    let mut energies = vec![0.0; bank.bands().len()];

    let (mut sum, mut count) = (0.0, 0usize);
    for k in voicing.voiced_frames() {
        fill_frame(x, spec, k, &window, &mut frame);
        sum_bands(analyzer.compute(&frame), &layout, &mut energies);
        if let Some(t) = frame_tilt(&energies, bank) {
            sum += t;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::TooFewBands);
    }
    Ok(sum / count as f64)
}
