//! Band-limited sample-rate conversion with a Kaiser-windowed sinc kernel.

use super::AudioClip;
use crate::error::{Error, Result};

/// Zero crossings of the sinc on each side of the kernel centre. The kernel
/// spans `2 * ZERO_CROSSINGS` zero crossings, i.e. at least 64 taps.
const ZERO_CROSSINGS: f64 = 32.0;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.9;
/// Kaiser shape parameter, roughly 86 dB stop-band rejection.
const KAISER_BETA: f64 = 8.6;
/// Above this many phases the kernel is evaluated on the fly.
const MAX_TABLE_PHASES: u64 = 1024;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= half / k as f64;
        let t2 = term * term;
        sum += t2;
        if t2 < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Rational-ratio resampler from one fixed rate to another.
#[derive(Debug, Clone)]
pub struct Resampler {
    source_rate: u32,
    target_rate: u32,
    /// Reduced ratio: output sample `m` sits at input position `m * down / up`.
    up: u64,
    down: u64,
    /// Normalized cutoff times two (cycles per input sample * 2).
    cutoff2: f64,
    /// Kernel half-width in input samples.
    half: usize,
    i0_beta: f64,
    /// `up` rows of `2 * half` taps, or empty when evaluated on the fly.
    table: Vec<f64>,
}

impl Resampler {
    pub fn new(source_rate: u32, target_rate: u32) -> Result<Self> {
        if source_rate == 0 {
            return Err(Error::invalid("source_rate", "must be positive"));
        }
        if target_rate == 0 {
            return Err(Error::invalid("target_rate", "must be positive"));
        }
        let g = gcd(source_rate as u64, target_rate as u64);
        let up = target_rate as u64 / g;
        let down = source_rate as u64 / g;
        let cutoff2 = ROLLOFF * (up as f64 / down as f64).min(1.0);
        let half = (ZERO_CROSSINGS / cutoff2).ceil() as usize;
        let mut r = Self {
            source_rate,
            target_rate,
            up,
            down,
            cutoff2,
            half,
            i0_beta: bessel_i0(KAISER_BETA),
            table: Vec::new(),
        };
        if up <= MAX_TABLE_PHASES && up != down {
            let width = 2 * half;
            let mut table = Vec::with_capacity(up as usize * width);
            for phase in 0..up {
                let frac = phase as f64 / up as f64;
                for j in 0..width {
                    // tap j covers input index floor(t) - half + 1 + j
                    let x = (j as f64 - half as f64 + 1.0) - frac;
                    table.push(r.kernel(x));
                }
            }
            r.table = table;
        }
        Ok(r)
    }

    pub fn source_rate(&self) -> u32 {
        self.source_rate
    }

    pub fn target_rate(&self) -> u32 {
        self.target_rate
    }

    fn kernel(&self, x: f64) -> f64 {
        let u = x / self.half as f64;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let arg = std::f64::consts::PI * self.cutoff2 * x;
        let sinc = if arg.abs() < 1e-12 { 1.0 } else { arg.sin() / arg };
        let window = bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / self.i0_beta;
        self.cutoff2 * sinc * window
    }

    /// Output length for `input_len` samples: `round(input_len * target / source)`.
    pub fn output_len(&self, input_len: usize) -> usize {
        let num = input_len as u128 * self.up as u128;
        ((2 * num + self.down as u128) / (2 * self.down as u128)) as usize
    }

    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        if self.up == self.down {
            return input.to_vec();
        }
        let out_len = self.output_len(input.len());
        let width = 2 * self.half;
        let n = input.len() as i64;
        let mut out = Vec::with_capacity(out_len);
        for m in 0..out_len as u64 {
            let pos = m * self.down;
            let base = (pos / self.up) as i64;
            let phase = pos % self.up;
            let first = base - self.half as i64 + 1;
            let acc = if self.table.is_empty() {
                let frac = phase as f64 / self.up as f64;
                let mut acc = 0.0;
                for j in 0..width as i64 {
                    let idx = first + j;
                    if idx >= 0 && idx < n {
                        let x = (j as f64 - self.half as f64 + 1.0) - frac;
                        acc += input[idx as usize] * self.kernel(x);
                    }
                }
                acc
            } else {
                let row = &self.table[phase as usize * width..(phase as usize + 1) * width];
                if first >= 0 && first + width as i64 <= n {
                    let seg = &input[first as usize..first as usize + width];
                    seg.iter().zip(row).map(|(a, b)| a * b).sum()
                } else {
                    let lo = (-first).max(0) as usize;
                    let hi = ((n - first).max(0) as usize).min(width);
                    (lo..hi)
                        .map(|j| input[(first + j as i64) as usize] * row[j])
                        .sum()
                }
            };
            out.push(acc);
        }
        out
    }
}

/// Converts a clip to `target_rate` with a windowed-sinc low-pass at 0.9 of
/// the lower Nyquist frequency.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::invalid("target_rate", "must be positive"));
    }
    if target_rate == clip.sample_rate() {
        return Ok(clip.clone());
    }
    let r = Resampler::new(clip.sample_rate(), target_rate)?;
    let chans = clip.channels().iter().map(|c| r.process(c)).collect();
    let mut out = AudioClip::from_parts_unchecked(chans, target_rate);
    out.source_path = clip.source_path.clone();
    Ok(out)
}
