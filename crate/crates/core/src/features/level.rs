use crate::audio::{to_mono, AudioClip};
use crate::dsp::{percentile, FrameSpec, ENERGY_FLOOR};
use crate::error::Result;

use super::VoicingTrack;

/// Per-frame energy in dB: `10 * log10(mean square + 1e-10)`.
///
/// Multi-channel input is averaged to mono first. The mean square is
/// window-weighted and taken over the in-bounds part of each frame, so a
/// constant signal reads the same level in every frame, including the last.
pub fn energy_contour(clip: &AudioClip, spec: &FrameSpec) -> Vec<f64> {
    let mono = to_mono(clip);
    let x = mono.channel(0);
    let window = spec.window().coefficients(spec.frame_length());
    (0..spec.frame_count(x.len()))
        .map(|k| {
            let range = spec.frame_range(k, x.len());
            let (mut num, mut den) = (0.0, 0.0);
            for (s, w) in x[range].iter().zip(&window) {
                let w2 = w * w;
                num += w2 * s * s;
                den += w2;
            }
            let ms = if den > 0.0 { num / den } else { 0.0 };
            10.0 * (ms + ENERGY_FLOOR).log10()
        })
        .collect()
}

/// Union of the sample ranges covered by the selected frames.
pub(crate) fn frame_mask(len: usize, spec: &FrameSpec, frames: impl Iterator<Item = usize>) -> Vec<bool> {
    let mut mask = vec![false; len];
    for k in frames {
        mask[spec.frame_range(k, len)].fill(true);
    }
    mask
}

/// RMS of the samples selected by `mask`, or `None` if none are selected.
pub(crate) fn masked_rms(x: &[f64], mask: &[bool]) -> Option<f64> {
    let (sum, count) = x
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + v * v, c + 1));
    (count > 0).then(|| (sum / count as f64).sqrt())
}

/// Level in dBFS over the samples of voiced frames.
///
/// Returns `Ok(None)` when no frame is voiced.
pub fn extract_rms(clip: &AudioClip, voicing: &VoicingTrack) -> Result<Option<f64>> {
    let x = clip.mono_samples()?;
    voicing.check_grid(clip)?;
    let mask = frame_mask(x.len(), voicing.spec(), voicing.voiced_frames());
    Ok(masked_rms(x, &mask).map(|r| 20.0 * r.log10()))
}

/// Level in dBFS over the whole clip.
pub fn whole_rms_db(clip: &AudioClip) -> Result<Option<f64>> {
    let x = clip.mono_samples()?;
    if x.is_empty() {
        return Ok(None);
    }
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    Ok(Some(10.0 * ms.log10()))
}

/// Frames whose energy clears the activity gate.
///
/// The gate sits 12 dB above the 10th-percentile frame energy, lowered to
/// 12 dB under the loudest frame when the contour has less than 24 dB of
/// range (stationary signals with no pauses).
pub(crate) fn active_frames(contour: &[f64]) -> Vec<usize> {
    if contour.is_empty() {
        return Vec::new();
    }
    let floor = percentile(contour, 0.10);
    let peak = contour.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gate = (floor + 12.0).min(peak - 12.0);
    let silent = 10.0 * ENERGY_FLOOR.log10() + 1e-9;
    contour
        .iter()
        .enumerate()
        .filter_map(|(k, &e)| (e > gate && e > silent).then_some(k))
        .collect()
}

/// Sample mask of the speech-active region of a mono signal.
pub fn activity_mask(clip: &AudioClip) -> Result<Vec<bool>> {
    let x = clip.mono_samples()?;
    let spec = FrameSpec::analysis_default(clip.sample_rate()).with_window(crate::dsp::Window::Rectangular);
    let contour = energy_contour(clip, &spec);
    Ok(frame_mask(x.len(), &spec, active_frames(&contour).into_iter()))
}

/// RMS over the speech-active region, `None` for silence.
pub fn active_rms(clip: &AudioClip) -> Result<Option<f64>> {
    let mask = activity_mask(clip)?;
    Ok(masked_rms(clip.mono_samples()?, &mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::Window;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SR: u32 = 16000;

    #[test]
    fn constant_half_scale() {
        let clip = AudioClip::mono(vec![0.5; SR as usize], SR).unwrap();
        let track = VoicingTrack::all_voiced(&clip, FrameSpec::analysis_default(SR));
        let db = extract_rms(&clip, &track).unwrap().unwrap();
        assert!((db + 6.0206).abs() < 0.01, "{db}");
    }

    #[test]
    fn full_scale_square() {
        let x: Vec<f64> = (0..SR as usize).map(|i| if (i / 40) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let clip = AudioClip::mono(x, SR).unwrap();
        let track = VoicingTrack::all_voiced(&clip, FrameSpec::analysis_default(SR));
        assert!(extract_rms(&clip, &track).unwrap().unwrap().abs() < 0.01);
    }

    #[test]
    fn random_mask_matches_per_sample_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let x: Vec<f64> = (0..8000).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let clip = AudioClip::mono(x.clone(), SR).unwrap();
            let spec = FrameSpec::analysis_default(SR);
            let n = spec.frame_count(x.len());
            let mut mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
            mask[0] = true;
            let track = VoicingTrack::from_mask(x.len(), SR, spec, mask.clone()).unwrap();

            // oracle: visit every sample, keep it if any voiced frame covers it
            let (mut sum, mut count) = (0.0, 0usize);
            for (i, v) in x.iter().enumerate() {
                let covered = (0..n).any(|k| {
                    mask[k] && i >= k * spec.hop_length() && i < k * spec.hop_length() + spec.frame_length()
                });
                if covered {
                    sum += v * v;
                    count += 1;
                }
            }
            let oracle = 10.0 * (sum / count as f64).log10();
            let got = extract_rms(&clip, &track).unwrap().unwrap();
            assert!((got - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn no_voiced_frames_is_undefined() {
        let clip = AudioClip::mono(vec![0.5; 1000], SR).unwrap();
        let spec = FrameSpec::analysis_default(SR);
        let n = spec.frame_count(1000);
        let track = VoicingTrack::from_mask(1000, SR, spec, vec![false; n]).unwrap();
        assert_eq!(extract_rms(&clip, &track).unwrap(), None);
    }

    #[test]
    fn grid_mismatch() {
        let clip = AudioClip::mono(vec![0.5; 1000], SR).unwrap();
        let other = AudioClip::mono(vec![0.5; 2000], SR).unwrap();
        let track = VoicingTrack::all_voiced(&other, FrameSpec::analysis_default(SR));
        assert!(extract_rms(&clip, &track).is_err());
    }

    #[test]
    fn contour_floor_and_unity() {
        let spec = FrameSpec::analysis_default(SR);
        let silent = AudioClip::mono(vec![0.0; 4000], SR).unwrap();
        assert!(energy_contour(&silent, &spec).iter().all(|&e| (e + 100.0).abs() < 1e-9));
        let ones = AudioClip::mono(vec![1.0; 4000], SR).unwrap();
        assert!(energy_contour(&ones, &spec).iter().all(|&e| e.abs() < 0.01));
        let rect = spec.with_window(Window::Rectangular);
        assert!(energy_contour(&ones, &rect).iter().all(|&e| e.abs() < 0.01));
    }

    #[test]
    fn contour_step_is_20_db() {
        let spec = FrameSpec::analysis_default(SR);
        let x: Vec<f64> = (0..SR as usize).map(|i| if i < 8000 { 0.1 } else { 1.0 }).collect();
        let c = energy_contour(&AudioClip::mono(x, SR).unwrap(), &spec);
        let step = c[c.len() - 10] - c[10];
        assert!((step - 20.0).abs() < 0.5, "{step}");
    }

    #[test]
    fn stereo_contour_uses_mean() {
        let spec = FrameSpec::analysis_default(SR);
        let clip = AudioClip::new(vec![vec![1.0; 1000], vec![-1.0; 1000]], SR).unwrap();
        assert!(energy_contour(&clip, &spec).iter().all(|&e| (e + 100.0).abs() < 1e-9));
    }

    #[test]
    fn active_rms_of_stationary_signal_is_plain_rms() {
        let x: Vec<f64> = (0..SR as usize)
            .map(|i| 0.1 * std::f64::consts::SQRT_2 * (i as f64 * 0.21).sin())
            .collect();
        let clip = AudioClip::mono(x, SR).unwrap();
        let r = active_rms(&clip).unwrap().unwrap();
        assert!((r - 0.1).abs() < 1e-3, "{r}");
        let silent = AudioClip::mono(vec![0.0; 1000], SR).unwrap();
        assert_eq!(active_rms(&silent).unwrap(), None);
    }
}
