//! Pseudo environment-adaptive training pairs: utterances paired with noise
//! at a drawn level, the utterance itself spectrally tilted in proportion to
//! how loud that noise is.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::audio::{write_wav, AudioClip, WavEncoding};
use crate::corpus::{Manifest, Utterance};
use crate::dsp::{db_to_gain, gain_to_db, HighShelf};
use crate::error::{Error, Result};
use crate::features::{activity_mask, masked_rms};
use crate::seed::derive_seed;
use crate::vad::Segment;

/// Largest accepted tilt boost, dB/octave.
pub const MAX_BOOST_DB_PER_OCT: f64 = 12.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Mix {
    pub mixture: AudioClip,
    pub scaled_noise: AudioClip,
    /// Linear gain applied to the noise crop to reach the commanded SNR.
    pub noise_gain: f64,
    /// Joint gain (≤ 1) applied to both outputs to keep the mixture peak at
    /// or below full scale.
    pub headroom_gain: f64,
    /// First sample of the noise crop.
    pub noise_offset: usize,
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Adds a seeded random crop of `noise` to `speech` so that the active-speech
/// RMS over the noise RMS equals `snr_db`.
pub fn mix_at_snr(speech: &AudioClip, noise: &AudioClip, snr_db: f64, seed: u64) -> Result<Mix> {
    let s = speech.mono_samples()?;
    let n = noise.mono_samples()?;
    if speech.sample_rate() != noise.sample_rate() {
        return Err(Error::RateMismatch {
            expected: speech.sample_rate(),
            actual: noise.sample_rate(),
        });
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr_db", "must be finite"));
    }
    if s.is_empty() {
        return Err(Error::Empty("speech"));
    }
    if n.len() < s.len() {
        return Err(Error::invalid(
            "noise",
            format!("{} samples is shorter than the speech ({})", n.len(), s.len()),
        ));
    }
    let speech_rms = masked_rms(s, &activity_mask(speech)?)
        .filter(|r| *r > 0.0)
        .ok_or(Error::Silent("speech"))?;

    let offset = ChaCha8Rng::seed_from_u64(seed).gen_range(0..=n.len() - s.len());
    let crop = &n[offset..offset + s.len()];
    let noise_rms = rms(crop);
    if noise_rms == 0.0 {
        return Err(Error::Silent("noise"));
    }
    let noise_gain = speech_rms / noise_rms / db_to_gain(snr_db);

    let mut scaled: Vec<f64> = crop.iter().map(|v| v * noise_gain).collect();
    let mut mixture: Vec<f64> = s.iter().zip(&scaled).map(|(a, b)| a + b).collect();
    let peak = mixture.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let headroom_gain = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    if headroom_gain < 1.0 {
        mixture.iter_mut().for_each(|v| *v *= headroom_gain);
        scaled.iter_mut().for_each(|v| *v *= headroom_gain);
    }
    let rate = speech.sample_rate();
    Ok(Mix {
        mixture: AudioClip::mono(mixture, rate)?,
        scaled_noise: AudioClip::mono(scaled, rate)?,
        noise_gain,
        headroom_gain,
        noise_offset: offset,
    })
}

const TILT_CENTERS: [f64; 6] = [250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];

/// Shelf cascade with corners half-way (in octaves) between the tilt-band
/// centres, every stage carrying the same gain.
struct ShelfCascade {
    corners: Vec<f64>,
    centers: Vec<f64>,
    rate: u32,
}

impl ShelfCascade {
    fn new(rate: u32) -> Result<Self> {
        let nyquist = rate as f64 / 2.0;
        let centers: Vec<f64> = TILT_CENTERS.iter().copied().filter(|&c| c < nyquist).collect();
        if centers.len() < 2 {
            return Err(Error::invalid("sample_rate", format!("{rate} Hz leaves fewer than two tilt bands")));
        }
        let corners = centers.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
        Ok(Self { corners, centers, rate })
    }

    fn stages(&self, stage_db: f64) -> Result<Vec<HighShelf>> {
        self.corners.iter().map(|&c| HighShelf::new(c, stage_db, self.rate)).collect()
    }

    /// Least-squares slope of the cascade response over the band centres.
    fn slope(&self, stage_db: f64) -> Result<f64> {
        let stages = self.stages(stage_db)?;
        let xs: Vec<f64> = self.centers.iter().map(|c| c.log2()).collect();
        let ys: Vec<f64> = self
            .centers
            .iter()
            .map(|&f| stages.iter().map(|s| s.response_db(f, self.rate)).sum())
            .collect();
        Ok(crate::features::ls_slope(&xs, &ys))
    }

    /// Per-stage gain whose cascade slope equals `target` dB/octave.
    fn solve(&self, target: f64) -> Result<f64> {
        let (mut lo, mut hi) = (0.0, 2.0 * MAX_BOOST_DB_PER_OCT);
        while self.slope(hi)? < target {
            hi *= 2.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.slope(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Raises the spectral slope of a mono clip by `boost_db_per_oct` over
/// 0.25–8 kHz, keeping the active-region RMS of the input.
pub fn tilt_boost(speech: &AudioClip, boost_db_per_oct: f64) -> Result<AudioClip> {
    if !(0.0..=MAX_BOOST_DB_PER_OCT).contains(&boost_db_per_oct) {
        return Err(Error::invalid(
            "boost_db_per_oct",
            format!("{boost_db_per_oct} is outside [0, {MAX_BOOST_DB_PER_OCT}]"),
        ));
    }
    apply_tilt(speech, boost_db_per_oct)
}

/// Signed form of [`tilt_boost`]. A shelf with negated gain is the exact
/// inverse of the original, so the cascade slope is odd in the stage gain.
pub(crate) fn apply_tilt(speech: &AudioClip, db_per_oct: f64) -> Result<AudioClip> {
    let x = speech.mono_samples()?;
    if !(db_per_oct.abs() <= MAX_BOOST_DB_PER_OCT) {
        return Err(Error::invalid("db_per_oct", format!("{db_per_oct} is outside ±{MAX_BOOST_DB_PER_OCT}")));
    }
    if db_per_oct == 0.0 || x.is_empty() {
        return Ok(speech.clone());
    }
    let cascade = ShelfCascade::new(speech.sample_rate())?;
    let stage_db = cascade.solve(db_per_oct.abs())?.copysign(db_per_oct);
    let mut y = x.to_vec();
    for stage in cascade.stages(stage_db)? {
        y = stage.process(&y);
    }
    let mask = activity_mask(speech)?;
    if let (Some(before), Some(after)) = (masked_rms(x, &mask), masked_rms(&y, &mask)) {
        if before > 0.0 && after > 0.0 {
            let g = before / after;
            y.iter_mut().for_each(|v| *v *= g);
        }
    }
    AudioClip::mono(y, speech.sample_rate())
}

/// Tilt boost as a function of the commanded SNR: zero at or above
/// `reference_snr_db`, rising by `slope` dB/octave per dB of SNR below it,
/// capped at `max_db_per_oct`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostMap {
    pub reference_snr_db: f64,
    pub slope: f64,
    pub max_db_per_oct: f64,
}

impl Default for BoostMap {
    fn default() -> Self {
        Self {
            reference_snr_db: 20.0,
            slope: 0.15,
            max_db_per_oct: 6.0,
        }
    }
}

impl BoostMap {
    pub fn boost(&self, snr_db: f64) -> f64 {
        ((self.reference_snr_db - snr_db).max(0.0) * self.slope).clamp(0.0, self.max_db_per_oct)
    }
}

/// What the hearing side of a pair contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HearingMode {
    /// The scaled noise alone.
    #[default]
    NoiseOnly,
    /// The preceding utterance (in input order) mixed into noise at the same
    /// SNR, standing in for the interlocutor's turn. The first utterance
    /// falls back to noise alone.
    PriorUtterance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoConfig {
    pub snr_grid: Vec<f64>,
    pub boost_map: BoostMap,
    pub hearing: HearingMode,
    pub seed: u64,
}

impl Default for PseudoConfig {
    fn default() -> Self {
        Self {
            snr_grid: vec![0.0, 5.0, 10.0, 20.0],
            boost_map: BoostMap::default(),
            hearing: HearingMode::NoiseOnly,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceUtterance {
    pub id: String,
    pub clip: AudioClip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseClip {
    pub id: String,
    pub clip: AudioClip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoPair {
    pub utterance_id: String,
    pub hearing: AudioClip,
    pub target: AudioClip,
    pub snr_db: f64,
    pub boost_db_per_oct: f64,
    pub noise_id: String,
    pub noise_start_s: f64,
    pub headroom_gain_db: f64,
    pub prior_utterance_id: Option<String>,
}

impl PseudoPair {
    pub fn provenance(&self) -> Map<String, Value> {
        let v = json!({
            "source_utterance": self.utterance_id,
            "noise_id": self.noise_id,
            "noise_start_s": self.noise_start_s,
            "snr_db": self.snr_db,
            "boost_db_per_oct": self.boost_db_per_oct,
            "headroom_gain_db": self.headroom_gain_db,
            "prior_utterance": self.prior_utterance_id,
        });
        match v {
            Value::Object(m) => m,
            _ => unreachable!(),
        }
    }
}

fn validate(utterances: &[SourceUtterance], noises: &[NoiseClip], config: &PseudoConfig) -> Result<()> {
    if utterances.is_empty() {
        return Err(Error::Empty("utterances"));
    }
    if noises.is_empty() {
        return Err(Error::Empty("noise bank"));
    }
    if config.snr_grid.is_empty() {
        return Err(Error::Empty("snr grid"));
    }
    if let Some(v) = config.snr_grid.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid("snr_grid", format!("non-finite value {v}")));
    }
    for u in utterances {
        if !u.clip.is_mono() {
            return Err(Error::NotMono(u.clip.num_channels()).context(format!("utterance {}", u.id)));
        }
    }
    for n in noises {
        if !n.clip.is_mono() {
            return Err(Error::NotMono(n.clip.num_channels()).context(format!("noise {}", n.id)));
        }
    }
    Ok(())
}

fn make_pair(
    index: usize,
    utterances: &[SourceUtterance],
    noises: &[NoiseClip],
    config: &PseudoConfig,
) -> Result<PseudoPair> {
    let u = &utterances[index];
    let prior = match config.hearing {
        HearingMode::PriorUtterance if index > 0 => Some(&utterances[index - 1]),
        _ => None,
    };
    let reference = prior.map_or(&u.clip, |p| &p.clip);
    let needed = reference.len();
    let candidates: Vec<&NoiseClip> = noises
        .iter()
        .filter(|n| n.clip.sample_rate() == u.clip.sample_rate() && n.clip.len() >= needed)
        .collect();
    if candidates.is_empty() {
        return Err(Error::invalid(
            "noise",
            format!("no noise clip at {} Hz with at least {needed} samples", u.clip.sample_rate()),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &u.id));
    let snr_db = config.snr_grid[rng.gen_range(0..config.snr_grid.len())];
    let noise = candidates[rng.gen_range(0..candidates.len())];
    let mix = mix_at_snr(reference, &noise.clip, snr_db, rng.gen())?;
    let hearing = if prior.is_some() { mix.mixture } else { mix.scaled_noise };

    let boost = config.boost_map.boost(snr_db);
    let target = tilt_boost(&u.clip, boost)?;
    Ok(PseudoPair {
        utterance_id: u.id.clone(),
        hearing,
        target,
        snr_db,
        boost_db_per_oct: boost,
        noise_id: noise.id.clone(),
        noise_start_s: mix.noise_offset as f64 / noise.clip.sample_rate() as f64,
        headroom_gain_db: gain_to_db(mix.headroom_gain),
        prior_utterance_id: prior.map(|p| p.id.clone()),
    })
}

/// One pair per utterance, in input order. Every random draw comes from a
/// seed derived from `config.seed` and the utterance id, so the result does
/// not depend on scheduling.
pub fn make_pseudo_dataset(
    utterances: &[SourceUtterance],
    noises: &[NoiseClip],
    config: &PseudoConfig,
) -> Result<Vec<PseudoPair>> {
    validate(utterances, noises, config)?;
    (0..utterances.len())
        .into_par_iter()
        .map(|i| make_pair(i, utterances, noises, config).map_err(|e| e.context(format!("utterance {}", utterances[i].id))))
        .collect()
}

/// Writes `<id>_hearing.wav` and `<id>_target.wav` (float) for each pair into
/// `out_dir` and returns a manifest of the targets, with file paths relative
/// to `out_dir`.
pub fn write_pseudo_dataset(pairs: &[PseudoPair], out_dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut manifest = Manifest::new(out_dir);
    for p in pairs {
        let hearing = PathBuf::from(format!("{}_hearing.wav", p.utterance_id));
        let target = PathBuf::from(format!("{}_target.wav", p.utterance_id));
        write_wav(&p.hearing, out_dir.join(&hearing), WavEncoding::Float32)
            .map_err(|e| e.context(format!("utterance {}", p.utterance_id)))?;
        write_wav(&p.target, out_dir.join(&target), WavEncoding::Float32)
            .map_err(|e| e.context(format!("utterance {}", p.utterance_id)))?;

        let mut u = Utterance::new("pseudo", "tts", Segment::new(0.0, p.target.duration_s())?);
        u.id = Some(p.utterance_id.clone());
        u.audio = Some(target);
        let mut prov = p.provenance();
        prov.insert("hearing".into(), Value::String(hearing.to_string_lossy().into_owned()));
        u.provenance = Some(prov);
        manifest.utterances.push(u);
    }
    Ok(manifest)
}
