//! Synthetic signals with known ground truth: tones, noise with a chosen
//! spectral slope, and impulse-train vowels through formant resonators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use realfft::RealFftPlanner;

use crate::audio::AudioClip;
use crate::dsp::FilterBank;
use crate::features::frame_tilt;

mod corpus;

pub use corpus::{SyntheticCorpus, SyntheticCorpusPlan};

const TAU: f64 = 2.0 * std::f64::consts::PI;

fn clip(samples: Vec<f64>, rate: u32) -> AudioClip {
    AudioClip::mono(samples, rate).expect("synthesized samples are finite")
}

pub fn sine(freq_hz: f64, amplitude: f64, duration_s: f64, rate: u32) -> AudioClip {
    let n = (duration_s * rate as f64).round() as usize;
    clip(
        (0..n)
            .map(|i| amplitude * (TAU * freq_hz * i as f64 / rate as f64).sin())
            .collect(),
        rate,
    )
}

/// Rising sawtooth in `[-amplitude, amplitude)`.
pub fn sawtooth(freq_hz: f64, amplitude: f64, duration_s: f64, rate: u32) -> AudioClip {
    let n = (duration_s * rate as f64).round() as usize;
    clip(
        (0..n)
            .map(|i| amplitude * (2.0 * (freq_hz * i as f64 / rate as f64).fract() - 1.0))
            .collect(),
        rate,
    )
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Gaussian white noise with the given RMS.
pub fn white_noise(rms: f64, duration_s: f64, rate: u32, seed: u64) -> AudioClip {
    let n = (duration_s * rate as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    clip((0..n).map(|_| rms * gauss(&mut rng)).collect(), rate)
}

/// Gaussian noise whose power density falls by `slope_db_per_oct` per octave
/// (0 is white, -3 is pink), scaled to the given RMS. Shaped in the
/// frequency domain over the whole clip.
pub fn colored_noise(slope_db_per_oct: f64, rms: f64, duration_s: f64, rate: u32, seed: u64) -> AudioClip {
    let n = (duration_s * rate as f64).round() as usize;
    let white = white_noise(1.0, duration_s, rate, seed).into_channels().remove(0);
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf = white;
    let mut spec = fwd.make_output_vec();
    fwd.process(&mut buf, &mut spec).expect("fft length");
    let amp_exp = slope_db_per_oct / (20.0 * 2f64.log10());
    for (k, c) in spec.iter_mut().enumerate() {
        if k == 0 {
            *c = 0.0.into();
        } else {
            *c *= (k as f64).powf(amp_exp);
        }
    }
    if n % 2 == 0 {
        let last = spec.len() - 1;
        spec[last].im = 0.0;
    }
    inv.process(&mut spec, &mut buf).expect("fft length");
    let cur = (buf.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    clip(buf.iter().map(|x| x * rms / cur).collect(), rate)
}

/// Two-pole resonator with unity gain at DC.
#[derive(Debug, Clone, Copy)]
pub struct Resonator {
    a: f64,
    b: f64,
    c: f64,
}

impl Resonator {
    pub fn new(freq_hz: f64, bandwidth_hz: f64, rate: u32) -> Self {
        let t = 1.0 / rate as f64;
        let c = -(-TAU * bandwidth_hz * t).exp();
        let b = 2.0 * (-std::f64::consts::PI * bandwidth_hz * t).exp() * (TAU * freq_hz * t).cos();
        Self { a: 1.0 - b - c, b, c }
    }

    /// |H|² at `freq_hz`.
    pub fn power(&self, freq_hz: f64, rate: u32) -> f64 {
        let w = TAU * freq_hz / rate as f64;
        let re = 1.0 - self.b * w.cos() - self.c * (2.0 * w).cos();
        let im = self.b * w.sin() + self.c * (2.0 * w).sin();
        self.a * self.a / (re * re + im * im)
    }

    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        let (mut y1, mut y2) = (0.0, 0.0);
        x.iter()
            .map(|&v| {
                let y = self.a * v + self.b * y1 + self.c * y2;
                y2 = y1;
                y1 = y;
                y
            })
            .collect()
    }
}

/// Parameters of a steady impulse-train vowel.
#[derive(Debug, Clone, PartialEq)]
pub struct Vowel {
    pub f0_hz: f64,
    /// (frequency, bandwidth) pairs, in cascade.
    pub formants: Vec<(f64, f64)>,
    /// Corner of a one-pole low-pass on the pulse train, giving the usual
    /// net -6 dB/octave of glottal source plus lip radiation above it.
    /// `None` keeps a flat source.
    pub source_corner_hz: Option<f64>,
    /// Relative random cycle-length perturbation.
    pub jitter: f64,
    /// Output RMS over the whole clip.
    pub rms: f64,
    pub duration_s: f64,
}

impl Vowel {
    pub fn new(f0_hz: f64, formants: &[(f64, f64)]) -> Self {
        Self {
            f0_hz,
            formants: formants.to_vec(),
            source_corner_hz: Some(100.0),
            jitter: 0.0,
            rms: 0.1,
            duration_s: 0.5,
        }
    }

    /// Spectral tilt (dB/octave over the default octave bands) of the
    /// jitter-free harmonic spectrum, from the filter responses alone.
    pub fn harmonic_tilt(&self, rate: u32) -> f64 {
        let bank = FilterBank::tilt_default();
        let nyquist = rate as f64 / 2.0;
        let pole = self.source_corner_hz.map(|fc| (-TAU * fc / rate as f64).exp());
        let resonators: Vec<Resonator> = self
            .formants
            .iter()
            .map(|&(f, bw)| Resonator::new(f, bw, rate))
            .collect();
        let mut energies = vec![0.0; bank.bands().len()];
        let mut h = 1;
        while (h as f64) * self.f0_hz < nyquist {
            let f = h as f64 * self.f0_hz;
            let mut p = resonators.iter().map(|r| r.power(f, rate)).product::<f64>();
            if let Some(pole) = pole {
                let w = TAU * f / rate as f64;
                p *= (1.0 - pole).powi(2) / (1.0 - 2.0 * pole * w.cos() + pole * pole);
            }
            for (e, b) in energies.iter_mut().zip(bank.bands()) {
                if f >= b.low_hz && f < b.high_hz {
                    *e += p;
                }
            }
            h += 1;
        }
        frame_tilt(&energies, &bank).unwrap_or(0.0)
    }

    pub fn render(&self, rate: u32, seed: u64) -> AudioClip {
        let n = (self.duration_s * rate as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut source = vec![0.0; n];
        let mut t = rng.gen_range(0.0..rate as f64 / self.f0_hz);
        while (t as usize) < n {
            source[t as usize] = 1.0;
            let period = rate as f64 / self.f0_hz;
            let jitter = if self.jitter > 0.0 {
                1.0 + self.jitter * rng.gen_range(-1.0..1.0)
            } else {
                1.0
            };
            t += period * jitter;
        }
        if let Some(fc) = self.source_corner_hz {
            let pole = (-TAU * fc / rate as f64).exp();
            let mut prev = 0.0;
            for s in &mut source {
                prev = (1.0 - pole) * *s + pole * prev;
                *s = prev;
            }
        }
        let mut y = source;
        for &(f, bw) in &self.formants {
            y = Resonator::new(f, bw, rate).process(&y);
        }
        let cur = (y.iter().map(|x| x * x).sum::<f64>() / n.max(1) as f64).sqrt();
        let gain = if cur > 0.0 { self.rms / cur } else { 0.0 };
        clip(y.iter().map(|x| x * gain).collect(), rate)
    }
}

/// Places copies of `burst` into silence (or `bed`) at the given start times.
pub fn place(bed: &AudioClip, burst: &AudioClip, starts_s: &[f64]) -> AudioClip {
    let mut out = bed.channel(0).to_vec();
    for &s in starts_s {
        let at = (s * bed.sample_rate() as f64).round() as usize;
        for (i, v) in burst.channel(0).iter().enumerate() {
            if let Some(o) = out.get_mut(at + i) {
                *o += v;
            }
        }
    }
    clip(out, bed.sample_rate())
}
