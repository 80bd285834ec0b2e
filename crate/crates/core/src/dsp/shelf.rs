use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// First-order high shelf: unity gain well below the corner, `gain_db` well
/// above it, half the gain (in dB) at the corner. Bilinear transform with the
/// corner pre-warped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighShelf {
    b0: f64,
    b1: f64,
    a1: f64,
}

impl HighShelf {
    pub fn new(corner_hz: f64, gain_db: f64, sample_rate: u32) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(corner_hz > 0.0 && corner_hz < nyquist) {
            return Err(Error::invalid(
                "corner_hz",
                format!("{corner_hz} Hz is outside (0, {nyquist})"),
            ));
        }
        if !gain_db.is_finite() {
            return Err(Error::invalid("gain_db", "must be finite"));
        }
        let warped = (std::f64::consts::PI * corner_hz / sample_rate as f64).tan();
        let root_g = 10f64.powf(gain_db / 40.0);
        let zero = warped / root_g;
        let pole = warped * root_g;
        let a0 = 1.0 + 1.0 / pole;
        Ok(Self {
            b0: (1.0 + 1.0 / zero) / a0,
            b1: (1.0 - 1.0 / zero) / a0,
            a1: (1.0 - 1.0 / pole) / a0,
        })
    }

    /// Magnitude response in dB at `freq_hz`.
    pub fn response_db(&self, freq_hz: f64, sample_rate: u32) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate as f64;
        let (s, c) = w.sin_cos();
        // H(e^jw) = (b0 + b1 e^-jw) / (1 + a1 e^-jw)
        let num = (self.b0 + self.b1 * c).powi(2) + (self.b1 * s).powi(2);
        let den = (1.0 + self.a1 * c).powi(2) + (self.a1 * s).powi(2);
        10.0 * (num / den).log10()
    }

    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        let (mut x1, mut y1) = (0.0, 0.0);
        for &x0 in x {
            let y0 = self.b0 * x0 + self.b1 * x1 - self.a1 * y1;
            out.push(y0);
            x1 = x0;
            y1 = y0;
        }
        out
    }
}

/// Applies a first-order high shelf to every channel.
pub fn first_order_shelf(clip: &AudioClip, corner_hz: f64, gain_db: f64) -> Result<AudioClip> {
    let shelf = HighShelf::new(corner_hz, gain_db, clip.sample_rate())?;
    Ok(clip.map_channels(|c| shelf.process(c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SR: u32 = 44100;

    fn steady_gain_db(freq: f64, corner: f64, gain: f64) -> f64 {
        let n = SR as usize;
        let x: Vec<f64> = (0..n)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / SR as f64).sin())
            .collect();
        let clip = AudioClip::mono(x.clone(), SR).unwrap();
        let y = first_order_shelf(&clip, corner, gain).unwrap();
        let rms = |v: &[f64]| (v.iter().map(|s| s * s).sum::<f64>() / v.len() as f64).sqrt();
        20.0 * (rms(&y.channel(0)[n / 2..]) / rms(&x[n / 2..])).log10()
    }

    #[test]
    fn zero_gain_is_identity() {
        let x: Vec<f64> = (0..500).map(|i| (i as f64 * 0.3).sin() * 0.4).collect();
        let clip = AudioClip::mono(x.clone(), SR).unwrap();
        let y = first_order_shelf(&clip, 1000.0, 0.0).unwrap();
        for (a, b) in x.iter().zip(y.channel(0)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn passband_and_shelf_levels() {
        let corner = 500.0;
        let low = steady_gain_db(corner / 16.0, corner, 12.0);
        let high = steady_gain_db(corner * 16.0, corner, 12.0);
        assert!(low.abs() <= 0.5, "low {low}");
        assert!((high - 12.0).abs() <= 0.5, "high {high}");
        // half the gain at the corner
        let shelf = HighShelf::new(corner, 12.0, SR).unwrap();
        assert!((shelf.response_db(corner, SR) - 6.0).abs() < 0.01);
    }

    #[test]
    fn invalid_corner() {
        let clip = AudioClip::mono(vec![0.0; 4], 8000).unwrap();
        assert!(first_order_shelf(&clip, 0.0, 3.0).is_err());
        assert!(first_order_shelf(&clip, 4000.0, 3.0).is_err());
    }

    #[test]
    fn response_is_monotone() {
        let shelf = HighShelf::new(1000.0, 9.0, SR).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 1..200 {
            let r = shelf.response_db(k as f64 * 110.0, SR);
            assert!(r >= prev - 1e-12);
            prev = r;
        }
    }

    proptest! {
        #[test]
        fn bounded_input_bounded_output(
            x in proptest::collection::vec(-1.0f64..1.0, 1..2000),
            corner in 50.0f64..15000.0,
            gain in -12.0f64..18.0,
        ) {
            let clip = AudioClip::mono(x.clone(), SR).unwrap();
            let y = first_order_shelf(&clip, corner, gain).unwrap();
            let peak_in = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let g = 10f64.powf(gain / 20.0).max(1.0);
            prop_assert!(y.peak() <= 3.0 * g * peak_in + 1e-12);
        }
    }
}
