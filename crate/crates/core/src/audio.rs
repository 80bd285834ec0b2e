//! Canonical in-memory audio and RIFF/WAVE input/output.
//!
//! Every clip holds `f64` samples in `[-1, 1]`, one vector per channel. The
//! sample rate travels with the clip; nothing downstream assumes 44.1 kHz.

use std::path::Path;

use crate::error::{Error, Result};

mod resample;

pub use resample::{resample, Resampler};

/// Multi-channel sampled audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
    source_path: Option<String>,
}

impl AudioClip {
    /// Builds a clip, checking that channels are non-empty in number, equal in
    /// length and finite, and that the rate is positive.
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidClip("clip has no channels".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidClip("sample rate must be positive".into()));
        }
        let len = channels[0].len();
        for (ch, data) in channels.iter().enumerate() {
            if data.len() != len {
                return Err(Error::InvalidClip(format!(
                    "channel {ch} has {} samples, channel 0 has {len}",
                    data.len()
                )));
            }
            if let Some(index) = data.iter().position(|x| !x.is_finite()) {
                return Err(Error::InvalidClip(format!(
                    "non-finite sample at channel {ch}, index {index}"
                )));
            }
        }
        Ok(Self {
            channels,
            sample_rate,
            source_path: None,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn with_source(mut self, path: impl Into<String>) -> Self {
        self.source_path = Some(path.into());
        self
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn source_path(&self) -> Option<&str> {
        self.source_path.as_deref()
    }

    pub fn is_mono(&self) -> bool {
        self.channels.len() == 1
    }

    /// The single channel of a mono clip.
    pub fn mono_samples(&self) -> Result<&[f64]> {
        if !self.is_mono() {
            return Err(Error::NotMono(self.channels.len()));
        }
        Ok(&self.channels[0])
    }

    /// Largest absolute sample value over all channels.
    pub fn peak(&self) -> f64 {
        self.channels
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Sub-clip covering samples `[start, end)`, clamped to the clip.
    pub fn slice(&self, start: usize, end: usize) -> AudioClip {
        let end = end.min(self.len());
        let start = start.min(end);
        AudioClip {
            channels: self
                .channels
                .iter()
                .map(|c| c[start..end].to_vec())
                .collect(),
            sample_rate: self.sample_rate,
            source_path: self.source_path.clone(),
        }
    }

    /// Sub-clip between two times in seconds.
    pub fn slice_seconds(&self, start_s: f64, end_s: f64) -> AudioClip {
        let sr = self.sample_rate as f64;
        self.slice(
            (start_s * sr).round().max(0.0) as usize,
            (end_s * sr).round().max(0.0) as usize,
        )
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: f64) -> AudioClip {
        self.map_channels(|c| c.iter().map(|x| x * gain).collect())
    }

    pub(crate) fn map_channels(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> AudioClip {
        AudioClip {
            channels: self.channels.iter().map(|c| f(c)).collect(),
            sample_rate: self.sample_rate,
            source_path: self.source_path.clone(),
        }
    }

    pub(crate) fn from_parts_unchecked(channels: Vec<Vec<f64>>, sample_rate: u32) -> AudioClip {
        debug_assert!(!channels.is_empty());
        AudioClip {
            channels,
            sample_rate,
            source_path: None,
        }
    }
}

/// On-disk sample encodings supported by [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Pcm24,
    Float32,
}

impl WavEncoding {
    /// Largest round-trip error of one sample.
    pub fn quantization_step(self) -> f64 {
        match self {
            WavEncoding::Pcm16 => 1.0 / 32768.0,
            WavEncoding::Pcm24 => 1.0 / 8_388_608.0,
            WavEncoding::Float32 => 0.0,
        }
    }
}

impl std::str::FromStr for WavEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" => Ok(WavEncoding::Pcm16),
            "pcm24" => Ok(WavEncoding::Pcm24),
            "float32" => Ok(WavEncoding::Float32),
            other => Err(Error::invalid(
                "encoding",
                format!("`{other}` is not one of pcm16, pcm24, float32"),
            )),
        }
    }
}

fn map_hound_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Error::MissingFile(path.to_path_buf())
        }
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::MalformedWav {
                path: path.to_path_buf(),
                detail: "file truncated".into(),
            }
        }
        hound::Error::IoError(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        hound::Error::FormatError(detail) => Error::MalformedWav {
            path: path.to_path_buf(),
            detail: detail.to_string(),
        },
        hound::Error::Unsupported => Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: "format tag or bit depth not supported".into(),
        },
        hound::Error::TooWide => Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: "bits_per_sample too wide for sample type".into(),
        },
        hound::Error::InvalidSampleFormat => Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: "sample format does not match bits_per_sample".into(),
        },
        other => Error::MalformedWav {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    }
}

/// Reads a RIFF/WAVE file (PCM 16/24/32-bit integer or 32-bit float).
///
/// Integer samples are scaled by `2^(bits-1)`, so integer full scale maps to
/// ±1.
/// Header facts of a WAV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub sample_rate: u32,
    pub channels: usize,
    pub frames: usize,
}

impl WavInfo {
    pub fn duration_s(&self) -> f64 {
        self.frames as f64 / self.sample_rate as f64
    }
}

/// Reads only the header of a WAV file.
pub fn wav_info(path: impl AsRef<Path>) -> Result<WavInfo> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| map_hound_error(path, e))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.sample_rate == 0 {
        return Err(Error::MalformedWav {
            path: path.to_path_buf(),
            detail: "zero channels or sample rate".into(),
        });
    }
    Ok(WavInfo {
        sample_rate: spec.sample_rate,
        channels: spec.channels as usize,
        frames: reader.duration() as usize,
    })
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| map_hound_error(path, e))?;
    let spec = reader.spec();
    let n_channels = spec.channels as usize;
    if n_channels == 0 {
        return Err(Error::MalformedWav {
            path: path.to_path_buf(),
            detail: "channels = 0".into(),
        });
    }
    if spec.sample_rate == 0 {
        return Err(Error::MalformedWav {
            path: path.to_path_buf(),
            detail: "sample_rate = 0".into(),
        });
    }
    let frames = reader.duration() as usize;
    let mut channels = vec![Vec::with_capacity(frames); n_channels];

    match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            for (i, s) in reader.into_samples::<i32>().enumerate() {
                let s = s.map_err(|e| map_hound_error(path, e))?;
                channels[i % n_channels].push(s as f64 * scale);
            }
        }
        (hound::SampleFormat::Float, 32) => {
            for (i, s) in reader.into_samples::<f32>().enumerate() {
                let s = s.map_err(|e| map_hound_error(path, e))?;
                channels[i % n_channels].push(s as f64);
            }
        }
        (format, bits) => {
            return Err(Error::UnsupportedEncoding {
                path: path.to_path_buf(),
                detail: format!("bits_per_sample = {bits} with {format:?} samples"),
            })
        }
    }

    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::MalformedWav {
            path: path.to_path_buf(),
            detail: "data chunk is not a whole number of frames".into(),
        });
    }
    let clip = AudioClip::new(channels, spec.sample_rate).map_err(|e| match e {
        Error::InvalidClip(detail) => Error::MalformedWav {
            path: path.to_path_buf(),
            detail,
        },
        other => other,
    })?;
    Ok(clip.with_source(path.display().to_string()))
}

/// Writes a clip. Samples outside `[-1, 1]` are rejected, never clipped.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    for (channel, data) in clip.channels().iter().enumerate() {
        if let Some(index) = data.iter().position(|x| x.abs() > 1.0) {
            return Err(Error::SampleOutOfRange {
                channel,
                index,
                value: data[index],
            });
        }
    }
    let (bits, format) = match encoding {
        WavEncoding::Pcm16 => (16, hound::SampleFormat::Int),
        WavEncoding::Pcm24 => (24, hound::SampleFormat::Int),
        WavEncoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: clip.num_channels() as u16,
        sample_rate: clip.sample_rate(),
        bits_per_sample: bits,
        sample_format: format,
    };
    let io_err = |e| map_hound_error(path, e);
    let mut writer = hound::WavWriter::create(path, spec).map_err(io_err)?;
    let chans = clip.channels();
    match encoding {
        WavEncoding::Float32 => {
            for i in 0..clip.len() {
                for c in chans {
                    writer.write_sample(c[i] as f32).map_err(io_err)?;
                }
            }
        }
        WavEncoding::Pcm16 | WavEncoding::Pcm24 => {
            let full = (1i64 << (bits - 1)) as f64;
            let max = full - 1.0;
            for i in 0..clip.len() {
                for c in chans {
                    let q = (c[i] * full).round().clamp(-full, max) as i32;
                    writer.write_sample(q).map_err(io_err)?;
                }
            }
        }
    }
    writer.finalize().map_err(io_err)
}

/// Averages all channels into one.
pub fn to_mono(clip: &AudioClip) -> AudioClip {
    if clip.is_mono() {
        return clip.clone();
    }
    let n = clip.num_channels() as f64;
    let mut out = vec![0.0; clip.len()];
    for c in clip.channels() {
        for (o, x) in out.iter_mut().zip(c) {
            *o += x;
        }
    }
    for o in &mut out {
        *o /= n;
    }
    AudioClip {
        channels: vec![out],
        sample_rate: clip.sample_rate,
        source_path: clip.source_path.clone(),
    }
}
