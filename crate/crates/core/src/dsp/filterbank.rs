use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandShape {
    Rectangular,
    Triangular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub low_hz: f64,
    pub center_hz: f64,
    pub high_hz: f64,
}

/// Ordered analysis bands over a power spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    bands: Vec<Band>,
    shape: BandShape,
}

impl FilterBank {
    pub fn new(bands: Vec<Band>, shape: BandShape) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::Empty("filter bank"));
        }
        for (i, b) in bands.iter().enumerate() {
            if !(0.0 <= b.low_hz && b.low_hz < b.center_hz && b.center_hz < b.high_hz) {
                return Err(Error::invalid(
                    "bands",
                    format!("band {i} needs 0 <= low < center < high, got {b:?}"),
                ));
            }
        }
        for (i, w) in bands.windows(2).enumerate() {
            if w[1].center_hz <= w[0].center_hz {
                return Err(Error::invalid(
                    "bands",
                    format!("centers must increase strictly (bands {i}, {})", i + 1),
                ));
            }
            let overlaps = match shape {
                BandShape::Rectangular => w[0].high_hz > w[1].low_hz * (1.0 + 1e-12),
                // adjacent triangles may share edges up to the neighbour's centre
                BandShape::Triangular => {
                    w[0].high_hz > w[1].center_hz || w[1].low_hz < w[0].center_hz
                }
            };
            if overlaps {
                return Err(Error::invalid(
                    "bands",
                    format!("bands {i} and {} overlap", i + 1),
                ));
            }
        }
        Ok(Self { bands, shape })
    }

    /// Rectangular one-octave bands centred on `centers`, edges at `c / sqrt 2`
    /// and `c * sqrt 2`.
    pub fn octave(centers: &[f64]) -> Result<Self> {
        let r = std::f64::consts::SQRT_2;
        Self::new(
            centers
                .iter()
                .map(|&c| Band {
                    low_hz: c / r,
                    center_hz: c,
                    high_hz: c * r,
                })
                .collect(),
            BandShape::Rectangular,
        )
    }

    /// Six octave bands centred at 0.25, 0.5, 1, 2, 4 and 8 kHz.
    pub fn tilt_default() -> Self {
        Self::octave(&[250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0])
            .expect("default bank is valid")
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn shape(&self) -> BandShape {
        self.shape
    }

    /// Every edge must lie below the Nyquist frequency of `sample_rate`.
    pub fn check_rate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        match self.bands.iter().find(|b| b.high_hz >= nyquist) {
            Some(b) => Err(Error::AboveNyquist {
                hz: b.high_hz,
                nyquist,
            }),
            None => Ok(()),
        }
    }

    fn weight(&self, band: &Band, f: f64) -> f64 {
        match self.shape {
            BandShape::Rectangular => {
                if f >= band.low_hz && f < band.high_hz {
                    1.0
                } else {
                    0.0
                }
            }
            BandShape::Triangular => {
                if f > band.low_hz && f <= band.center_hz {
                    (f - band.low_hz) / (band.center_hz - band.low_hz)
                } else if f > band.center_hz && f < band.high_hz {
                    (band.high_hz - f) / (band.high_hz - band.center_hz)
                } else {
                    0.0
                }
            }
        }
    }

    /// Per-band bin weights for a one-sided spectrum of an `fft_len` FFT.
    pub(crate) fn layout(&self, fft_len: usize, sample_rate: u32) -> Vec<Vec<(usize, f64)>> {
        let bin_hz = sample_rate as f64 / fft_len as f64;
        self.bands
            .iter()
            .map(|band| {
                let lo = (band.low_hz / bin_hz).floor() as usize;
                let hi = ((band.high_hz / bin_hz).ceil() as usize).min(fft_len / 2);
                (lo..=hi)
                    .filter_map(|k| {
                        let w = self.weight(band, k as f64 * bin_hz);
                        (w > 0.0).then_some((k, w))
                    })
                    .collect()
            })
            .collect()
    }
}

/// Reusable real FFT producing a one-sided, Parseval-scaled power spectrum:
/// the bins sum to the frame's energy `sum(x^2)`.
pub struct PowerSpectrum {
    fft: Arc<dyn RealToComplex<f64>>,
    input: Vec<f64>,
    output: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
    power: Vec<f64>,
}

impl PowerSpectrum {
    pub fn new(fft_len: usize) -> Self {
        let fft = RealFftPlanner::<f64>::new().plan_fft_forward(fft_len);
        Self {
            input: fft.make_input_vec(),
            output: fft.make_output_vec(),
            scratch: fft.make_scratch_vec(),
            power: vec![0.0; fft_len / 2 + 1],
            fft,
        }
    }

    /// FFT length for frames of `frame_len` samples.
    pub fn len_for(frame_len: usize) -> usize {
        frame_len.next_power_of_two().max(2)
    }

    pub fn fft_len(&self) -> usize {
        self.input.len()
    }

    /// Power spectrum of `frame`, zero-padded to the FFT length.
    pub fn compute(&mut self, frame: &[f64]) -> &[f64] {
        let n = self.input.len();
        assert!(frame.len() <= n, "frame longer than FFT");
        self.input[..frame.len()].copy_from_slice(frame);
        self.input[frame.len()..].fill(0.0);
        self.fft
            .process_with_scratch(&mut self.input, &mut self.output, &mut self.scratch)
            .expect("fft length");
        let inv_n = 1.0 / n as f64;
        let last = n / 2;
        for (k, (p, c)) in self.power.iter_mut().zip(&self.output).enumerate() {
            let scale = if k == 0 || k == last { inv_n } else { 2.0 * inv_n };
            *p = c.norm_sqr() * scale;
        }
        &self.power
    }
}

/// Band energies from a precomputed layout.
pub(crate) fn sum_bands(power: &[f64], layout: &[Vec<(usize, f64)>], out: &mut [f64]) {
    for (o, bins) in out.iter_mut().zip(layout) {
        *o = bins.iter().map(|&(k, w)| power[k] * w).sum();
    }
}

/// Linear band energies of one (already windowed) frame.
pub fn band_energies(frame: &[f64], bank: &FilterBank, sample_rate: u32) -> Result<Vec<f64>> {
    if frame.is_empty() {
        return Err(Error::Empty("frame"));
    }
    bank.check_rate(sample_rate)?;
    let n = PowerSpectrum::len_for(frame.len());
    let mut spec = PowerSpectrum::new(n);
    let power = spec.compute(frame);
    let layout = bank.layout(n, sample_rate);
    let mut out = vec![0.0; bank.bands.len()];
    sum_bands(power, &layout, &mut out);
    Ok(out)
}
