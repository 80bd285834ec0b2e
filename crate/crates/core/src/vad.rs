//! Energy-gate voice activity detection for close-talk recordings.
//!
//! The noise floor is the 10th percentile of the frame-energy contour. A
//! frame louder than `floor + onset_margin` opens a segment; the segment
//! stays open until the energy has been at or below `floor + offset_margin`
//! for the hangover time. Close gaps are then merged and short segments
//! dropped.

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dsp::{percentile, FrameSpec, Window};
use crate::error::{Error, Result};
use crate::features::energy_contour;

/// A time span within a recording, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
}

impl Segment {
    pub fn new(start_s: f64, end_s: f64) -> Result<Self> {
        if !(start_s.is_finite() && end_s.is_finite() && 0.0 <= start_s && start_s < end_s) {
            return Err(Error::invalid(
                "segment",
                format!("need 0 <= start < end, got [{start_s}, {end_s}]"),
            ));
        }
        Ok(Self { start_s, end_s })
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VadConfig {
    pub frame_s: f64,
    pub hop_s: f64,
    pub onset_margin_db: f64,
    pub offset_margin_db: f64,
    pub hangover_s: f64,
    pub min_duration_s: f64,
    pub merge_gap_s: f64,
    /// Percentile of the contour taken as the noise floor, in `[0, 1]`.
    pub floor_percentile: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            frame_s: 0.025,
            hop_s: 0.010,
            onset_margin_db: 12.0,
            offset_margin_db: 6.0,
            hangover_s: 0.3,
            min_duration_s: 0.3,
            merge_gap_s: 0.2,
            floor_percentile: 0.10,
        }
    }
}

impl VadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.offset_margin_db > self.onset_margin_db {
            return Err(Error::invalid(
                "offset_margin_db",
                format!(
                    "offset margin {} dB exceeds onset margin {} dB",
                    self.offset_margin_db, self.onset_margin_db
                ),
            ));
        }
        for (name, v) in [
            ("hangover_s", self.hangover_s),
            ("min_duration_s", self.min_duration_s),
            ("merge_gap_s", self.merge_gap_s),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be a non-negative duration, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.floor_percentile) {
            return Err(Error::invalid("floor_percentile", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Speech segments of a mono close-talk clip, sorted and non-overlapping.
pub fn segment(clip: &AudioClip, config: &VadConfig) -> Result<Vec<Segment>> {
    config.validate()?;
    clip.mono_samples()?;
    if clip.is_empty() {
        return Err(Error::Empty("clip"));
    }
    let rate = clip.sample_rate();
    let spec = FrameSpec::from_seconds(config.frame_s, config.hop_s, rate, Window::Rectangular)?;
    let contour = energy_contour(clip, &spec);
    let floor = percentile(&contour, config.floor_percentile);
    let onset = floor + config.onset_margin_db;
    let offset = floor + config.offset_margin_db;
    let hop_s = spec.hop_length() as f64 / rate as f64;
    let hangover = (config.hangover_s / hop_s).round() as usize;

    // (first frame, last frame above the offset threshold)
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (k, &e) in contour.iter().enumerate() {
        open = match open {
            None if e > onset => Some((k, k)),
            None => None,
            Some((first, _)) if e > offset => Some((first, k)),
            Some(run) if k - run.1 >= hangover.max(1) => {
                runs.push(run);
                // this frame may itself reopen
                (e > onset).then_some((k, k))
            }
            Some(run) => Some(run),
        };
    }
    runs.extend(open);

    let duration = clip.duration_s();
    let bounds = runs.into_iter().map(|(first, last)| {
        let start = spec.frame_center_s(first, rate) - hop_s / 2.0;
        let end = spec.frame_center_s(last, rate) + hop_s / 2.0;
        (start.max(0.0), end.min(duration))
    });

    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (start, end) in bounds {
        match merged.last_mut() {
            Some(prev) if start - prev.1 < config.merge_gap_s => prev.1 = prev.1.max(end),
            _ => merged.push((start, end)),
        }
    }
    Ok(merged
        .into_iter()
        .filter(|(s, e)| e - s >= config.min_duration_s && e > s)
        .map(|(start_s, end_s)| Segment { start_s, end_s })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_has_no_segments() {
        let clip = AudioClip::mono(vec![0.0; 16000], 16000).unwrap();
        assert!(segment(&clip, &VadConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn empty_clip_is_an_error() {
        let clip = AudioClip::mono(vec![], 16000).unwrap();
        assert!(matches!(segment(&clip, &VadConfig::default()), Err(Error::Empty(_))));
    }

    #[test]
    fn stereo_is_rejected() {
        let clip = AudioClip::new(vec![vec![0.0; 100]; 2], 16000).unwrap();
        assert!(matches!(segment(&clip, &VadConfig::default()), Err(Error::NotMono(2))));
    }

    #[test]
    fn inverted_margins_are_rejected() {
        let config = VadConfig {
            offset_margin_db: 20.0,
            ..Default::default()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn segment_validation() {
        assert!(Segment::new(1.0, 1.0).is_err());
        assert!(Segment::new(-0.1, 1.0).is_err());
        assert_eq!(Segment::new(0.5, 2.0).unwrap().duration_s(), 1.5);
    }
}
