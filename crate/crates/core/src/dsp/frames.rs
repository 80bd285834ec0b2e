use crate::audio::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rectangular,
    Hann,
}

impl Window {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| {
                    0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()
                })
                .collect(),
        }
    }
}

/// Frame grid in samples. Frame `k` covers `[k * hop, k * hop + frame_length)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSpec {
    frame_length: usize,
    hop_length: usize,
    window: Window,
}

impl FrameSpec {
    pub fn new(frame_length: usize, hop_length: usize, window: Window) -> Result<Self> {
        if hop_length == 0 || hop_length > frame_length {
            return Err(Error::invalid(
                "hop_length",
                format!("need 0 < hop ({hop_length}) <= frame ({frame_length})"),
            ));
        }
        Ok(Self {
            frame_length,
            hop_length,
            window,
        })
    }

    /// Grid from durations in seconds, rounded to whole samples.
    pub fn from_seconds(frame_s: f64, hop_s: f64, sample_rate: u32, window: Window) -> Result<Self> {
        let sr = sample_rate as f64;
        let frame = (frame_s * sr).round() as usize;
        let hop = (hop_s * sr).round() as usize;
        Self::new(frame.max(1), hop.max(1).min(frame.max(1)), window)
    }

    /// 25 ms Hann frames every 5 ms: the shared analysis grid.
    pub fn analysis_default(sample_rate: u32) -> Self {
        Self::from_seconds(0.025, 0.005, sample_rate, Window::Hann)
            .expect("default analysis grid is valid")
    }

    pub fn frame_length(&self) -> usize {
        self.frame_length
    }

    pub fn hop_length(&self) -> usize {
        self.hop_length
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn with_window(self, window: Window) -> Self {
        Self { window, ..self }
    }

    /// `ceil(len / hop)` frames for a non-empty signal.
    pub fn frame_count(&self, len: usize) -> usize {
        len.div_ceil(self.hop_length)
    }

    pub fn frame_start(&self, k: usize) -> usize {
        k * self.hop_length
    }

    /// In-bounds sample range of frame `k` for a signal of length `len`.
    pub fn frame_range(&self, k: usize, len: usize) -> std::ops::Range<usize> {
        let start = (k * self.hop_length).min(len);
        let end = (k * self.hop_length + self.frame_length).min(len);
        start..end
    }

    /// Time of the centre of frame `k`, in seconds.
    pub fn frame_center_s(&self, k: usize, sample_rate: u32) -> f64 {
        (k * self.hop_length) as f64 / sample_rate as f64
            + self.frame_length as f64 / (2.0 * sample_rate as f64)
    }
}

/// Splits a mono clip into windowed frames. The last frames are zero-padded.
pub fn frames(clip: &AudioClip, spec: &FrameSpec) -> Result<Vec<Vec<f64>>> {
    let x = clip.mono_samples()?;
    let window = spec.window.coefficients(spec.frame_length);
    Ok((0..spec.frame_count(x.len()))
        .map(|k| {
            let start = spec.frame_start(k);
            let mut frame = vec![0.0; spec.frame_length];
            for (i, (f, w)) in frame.iter_mut().zip(&window).enumerate() {
                if let Some(s) = x.get(start + i) {
                    *f = s * w;
                }
            }
            frame
        })
        .collect())
}

/// Copies frame `k` of `x` into `buf`, zero-padding past the end, and
/// multiplies by `window`.
pub(crate) fn fill_frame(x: &[f64], spec: &FrameSpec, k: usize, window: &[f64], buf: &mut [f64]) {
    let range = spec.frame_range(k, x.len());
    let n = range.len();
    for ((b, s), w) in buf[..n].iter_mut().zip(&x[range]).zip(window) {
        *b = s * w;
    }
    buf[n..].fill(0.0);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn frame_count_is_ceiling() {
        let spec = FrameSpec::new(400, 200, Window::Rectangular).unwrap();
        let clip = AudioClip::mono(vec![0.1; 1000], 16000).unwrap();
        assert_eq!(frames(&clip, &spec).unwrap().len(), 5);
    }

    #[test]
    fn hann_on_constant_is_the_window() {
        let spec = FrameSpec::new(64, 32, Window::Hann).unwrap();
        let clip = AudioClip::mono(vec![1.0; 256], 16000).unwrap();
        let f = frames(&clip, &spec).unwrap();
        assert_eq!(f[0], Window::Hann.coefficients(64));
    }

    #[test]
    fn invalid_specs() {
        assert!(FrameSpec::new(10, 0, Window::Hann).is_err());
        assert!(FrameSpec::new(10, 11, Window::Hann).is_err());
        let stereo = AudioClip::new(vec![vec![0.0; 4]; 2], 8000).unwrap();
        let spec = FrameSpec::new(2, 2, Window::Rectangular).unwrap();
        assert!(matches!(frames(&stereo, &spec), Err(Error::NotMono(2))));
    }

    proptest! {
        #[test]
        fn rectangular_partition_reconstructs(
            x in proptest::collection::vec(-1.0f64..1.0, 1..500),
            frame in 1usize..64,
        ) {
            let spec = FrameSpec::new(frame, frame, Window::Rectangular).unwrap();
            let clip = AudioClip::mono(x.clone(), 8000).unwrap();
            let joined: Vec<f64> = frames(&clip, &spec).unwrap().concat();
            let mut padded = x.clone();
            padded.resize(joined.len(), 0.0);
            prop_assert_eq!(joined, padded);
        }
    }
}
