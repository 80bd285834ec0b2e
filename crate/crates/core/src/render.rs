//! Listener-position stimuli: speech convolved with a measured two-ear
//! impulse response, plus recorded ambience.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, resample, write_wav, AudioClip, WavEncoding};
use crate::dsp::{db_to_gain, fast_convolve, gain_to_db};
use crate::error::{Error, Result};
use crate::features::active_rms;

/// Crossfade used when ambience has to be looped.
pub const LOOP_CROSSFADE_S: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    clip: AudioClip,
    pub distance_m: f64,
    pub session_ref: Option<String>,
}

impl ImpulseResponse {
    /// `clip` holds the left and right ear responses.
    pub fn new(clip: AudioClip, distance_m: f64, session_ref: Option<String>) -> Result<Self> {
        if clip.num_channels() != 2 {
            return Err(Error::invalid(
                "ir",
                format!("expected 2 channels, got {}", clip.num_channels()),
            ));
        }
        if clip.is_empty() {
            return Err(Error::Empty("impulse response"));
        }
        if clip.channels().iter().flatten().all(|&v| v == 0.0) {
            return Err(Error::Silent("impulse response"));
        }
        if !(distance_m.is_finite() && distance_m >= 0.0) {
            return Err(Error::invalid("distance_m", format!("{distance_m} is not a distance")));
        }
        Ok(Self {
            clip,
            distance_m,
            session_ref,
        })
    }

    pub fn load(path: impl AsRef<Path>, distance_m: f64, session_ref: Option<String>) -> Result<Self> {
        let path = path.as_ref();
        Self::new(read_wav(path)?, distance_m, session_ref).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn clip(&self) -> &AudioClip {
        &self.clip
    }

    pub fn sample_rate(&self) -> u32 {
        self.clip.sample_rate()
    }

    pub fn len(&self) -> usize {
        self.clip.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clip.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Gain on the ambience; `f64::NEG_INFINITY` leaves it out.
    pub ambience_gain_db: f64,
    /// Scale the speech to this active-region level (dBFS) before
    /// convolution.
    pub align_rms_db: Option<f64>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            ambience_gain_db: 0.0,
            align_rms_db: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub audio: AudioClip,
    /// Joint attenuation applied to keep the peak at full scale (0 when none).
    pub attenuation_db: f64,
    /// Gain applied by the level-alignment step (0 when disabled).
    pub align_gain_db: f64,
}

/// `x` repeated to `len` samples, each seam an equal-power crossfade of
/// `fade` samples.
fn loop_to(x: &[f64], len: usize, fade: usize) -> Vec<f64> {
    if x.len() >= len {
        return x[..len].to_vec();
    }
    let fade = fade.min(x.len() / 2);
    let mut out = Vec::with_capacity(len + x.len());
    out.extend_from_slice(x);
    while out.len() < len {
        let seam = out.len() - fade;
        for i in 0..fade {
            let t = (i as f64 + 0.5) / fade as f64 * std::f64::consts::FRAC_PI_2;
            out[seam + i] = out[seam + i] * t.cos() + x[i] * t.sin();
        }
        out.extend_from_slice(&x[fade..]);
    }
    out.truncate(len);
    out
}

/// Convolves mono `speech` with each ear of `ir` and adds `ambience`
/// (two channels) scaled by `options.ambience_gain_db`.
///
/// The output has the full convolution length. Shorter ambience is looped
/// with a 50 ms crossfade. If the peak exceeds full scale both channels are
/// attenuated together and the gain is reported.
pub fn render_at_listener(
    speech: &AudioClip,
    ir: &ImpulseResponse,
    ambience: Option<&AudioClip>,
    options: &RenderOptions,
) -> Result<Rendered> {
    let x = speech.mono_samples()?;
    let rate = ir.sample_rate();
    if speech.sample_rate() != rate {
        return Err(Error::RateMismatch {
            expected: rate,
            actual: speech.sample_rate(),
        });
    }
    if x.is_empty() {
        return Err(Error::Empty("speech"));
    }
    let ambience_gain = if options.ambience_gain_db == f64::NEG_INFINITY {
        None
    } else if options.ambience_gain_db.is_finite() {
        Some(db_to_gain(options.ambience_gain_db))
    } else {
        return Err(Error::invalid("ambience_gain_db", "must be finite or -inf"));
    };
    if let Some(a) = ambience {
        if a.sample_rate() != rate {
            return Err(Error::RateMismatch {
                expected: rate,
                actual: a.sample_rate(),
            });
        }
        if a.num_channels() != 2 {
            return Err(Error::invalid("ambience", format!("expected 2 channels, got {}", a.num_channels())));
        }
        if a.is_empty() {
            return Err(Error::Empty("ambience"));
        }
    }

    let mut align_gain = 1.0;
    if let Some(target) = options.align_rms_db {
        let level = active_rms(speech)?.filter(|r| *r > 0.0).ok_or(Error::Silent("speech"))?;
        align_gain = db_to_gain(target) / level;
    }
    let scaled: Vec<f64>;
    let x = if align_gain != 1.0 {
        scaled = x.iter().map(|v| v * align_gain).collect();
        &scaled[..]
    } else {
        x
    };

    let mut ears = Vec::with_capacity(2);
    for ch in ir.clip().channels() {
        ears.push(fast_convolve(x, ch)?);
    }
    let len = ears[0].len();
    if let (Some(a), Some(g)) = (ambience, ambience_gain) {
        let fade = (LOOP_CROSSFADE_S * rate as f64).round() as usize;
        for (ear, amb) in ears.iter_mut().zip(a.channels()) {
            for (o, v) in ear.iter_mut().zip(loop_to(amb, len, fade)) {
                *o += g * v;
            }
        }
    }
    let peak = ears.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut attenuation = 1.0;
    if peak > 1.0 {
        attenuation = 1.0 / peak;
        ears.iter_mut().flatten().for_each(|v| *v *= attenuation);
    }
    Ok(Rendered {
        audio: AudioClip::new(ears, rate)?,
        attenuation_db: gain_to_db(attenuation),
        align_gain_db: gain_to_db(align_gain),
    })
}

/// One listening condition: an impulse response and optional ambience.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub ir_id: String,
    pub ir: ImpulseResponse,
    pub ambience: Option<(String, AudioClip)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeechItem {
    pub id: String,
    pub clip: AudioClip,
}

/// One row of the stimulus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusRecord {
    pub file: PathBuf,
    pub utterance_id: String,
    pub ir_id: String,
    pub ambience_id: Option<String>,
    pub distance_m: f64,
    pub session_id: Option<String>,
    /// `None` when ambience is disabled.
    pub ambience_gain_db: Option<f64>,
    pub align_rms_db: Option<f64>,
    pub align_gain_db: f64,
    pub attenuation_db: f64,
    pub sample_rate: u32,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderFailure {
    pub utterance_id: String,
    pub ir_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchReport {
    pub stimuli: Vec<StimulusRecord>,
    pub failures: Vec<RenderFailure>,
}

impl BatchReport {
    pub fn to_jsonl(&self) -> String {
        self.stimuli
            .iter()
            .map(|r| serde_json::to_string(r).expect("stimulus records serialize") + "\n")
            .collect()
    }
}

/// File name for one stimulus.
pub fn stimulus_name(utterance_id: &str, condition: &Condition) -> String {
    match &condition.ambience {
        Some((amb, _)) => format!("{utterance_id}__{}__{amb}.wav", condition.ir_id),
        None => format!("{utterance_id}__{}.wav", condition.ir_id),
    }
}

fn render_one(
    item: &SpeechItem,
    condition: &Condition,
    options: &RenderOptions,
    out_dir: &Path,
) -> Result<StimulusRecord> {
    let rate = condition.ir.sample_rate();
    let speech = if item.clip.sample_rate() == rate {
        item.clip.clone()
    } else {
        resample(&item.clip, rate)?
    };
    let ambience = match &condition.ambience {
        Some((_, a)) if a.sample_rate() != rate => Some(resample(a, rate)?),
        Some((_, a)) => Some(a.clone()),
        None => None,
    };
    let rendered = render_at_listener(&speech, &condition.ir, ambience.as_ref(), options)?;
    let file = PathBuf::from(stimulus_name(&item.id, condition));
    write_wav(&rendered.audio, out_dir.join(&file), WavEncoding::Float32)?;
    Ok(StimulusRecord {
        file,
        utterance_id: item.id.clone(),
        ir_id: condition.ir_id.clone(),
        ambience_id: condition.ambience.as_ref().map(|(id, _)| id.clone()),
        distance_m: condition.ir.distance_m,
        session_id: condition.ir.session_ref.clone(),
        ambience_gain_db: (condition.ambience.is_some() && options.ambience_gain_db.is_finite())
            .then_some(options.ambience_gain_db),
        align_rms_db: options.align_rms_db,
        align_gain_db: rendered.align_gain_db,
        attenuation_db: rendered.attenuation_db,
        sample_rate: rate,
        duration_s: rendered.audio.duration_s(),
    })
}

/// Renders every `(speech, condition)` pair into `out_dir` and writes
/// `stimuli.jsonl` there. Failed pairs are collected, not fatal.
pub fn batch_render(
    jobs: &[(&SpeechItem, &Condition)],
    options: &RenderOptions,
    out_dir: &Path,
) -> Result<BatchReport> {
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let results: Vec<_> = jobs
        .par_iter()
        .map(|(item, cond)| render_one(item, cond, options, out_dir))
        .collect();
    let mut report = BatchReport::default();
    for ((item, cond), r) in jobs.iter().zip(results) {
        match r {
            Ok(rec) => report.stimuli.push(rec),
            Err(e) => report.failures.push(RenderFailure {
                utterance_id: item.id.clone(),
                ir_id: cond.ir_id.clone(),
                message: e.to_string(),
            }),
        }
    }
    let path = out_dir.join("stimuli.jsonl");
    std::fs::write(&path, report.to_jsonl()).map_err(|source| Error::Io { path, source })?;
    Ok(report)
}

/// Every utterance under every condition, utterance-major.
pub fn cartesian<'a>(items: &'a [SpeechItem], conditions: &'a [Condition]) -> Vec<(&'a SpeechItem, &'a Condition)> {
    items.iter().flat_map(|i| conditions.iter().map(move |c| (i, c))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loop_crossfade_is_continuous_for_constants() {
        let x = vec![0.5; 100];
        let y = loop_to(&x, 350, 20);
        assert_eq!(y.len(), 350);
        // equal-power fade of a signal with itself peaks at sqrt 2
        assert!(y.iter().all(|v| *v >= 0.5 - 1e-12 && *v <= 0.5 * 2f64.sqrt() + 1e-12));
        assert_eq!(&y[..80], &x[..80]);
    }

    #[test]
    fn loop_keeps_long_input() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(loop_to(&x, 4, 2), vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn ir_validation() {
        let stereo = |l: Vec<f64>, r: Vec<f64>| AudioClip::new(vec![l, r], 16000).unwrap();
        assert!(ImpulseResponse::new(stereo(vec![0.0; 4], vec![0.0; 4]), 1.0, None).is_err());
        assert!(ImpulseResponse::new(AudioClip::mono(vec![1.0], 16000).unwrap(), 1.0, None).is_err());
        assert!(ImpulseResponse::new(stereo(vec![1.0], vec![0.0]), -1.0, None).is_err());
        assert!(ImpulseResponse::new(stereo(vec![1.0], vec![0.0]), 1.0, None).is_ok());
    }

    #[test]
    fn names_are_distinct() {
        let ir = ImpulseResponse::new(AudioClip::new(vec![vec![1.0], vec![1.0]], 16000).unwrap(), 1.0, None).unwrap();
        let a = Condition {
            ir_id: "d1".into(),
            ir: ir.clone(),
            ambience: None,
        };
        let b = Condition {
            ambience: Some(("cafe".into(), AudioClip::new(vec![vec![0.0], vec![0.0]], 16000).unwrap())),
            ..a.clone()
        };
        assert_eq!(stimulus_name("u1", &a), "u1__d1.wav");
        assert_eq!(stimulus_name("u1", &b), "u1__d1__cafe.wav");
    }
}
