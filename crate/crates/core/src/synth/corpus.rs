//! A two-speaker conversational corpus of synthetic vowels, with level and
//! F1 shifts planted per environment label.
//!
//! Moving F1 also moves the band energies a tilt measurement sees, so each
//! shifted vowel gets a compensating shelf correction that restores the
//! harmonic tilt of its unshifted twin. Only the planted features move.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::augment::apply_tilt;
use crate::audio::{write_wav, AudioClip, WavEncoding};
use crate::corpus::{utterance_span, EnvLabel, Manifest, SessionManifest, SpeakerFiles, Utterance};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::vad::Segment;

use super::Vowel;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpusPlan {
    pub seed: u64,
    pub sample_rate: u32,
    pub speakers: (String, String),
    pub sessions_per_label: usize,
    /// Utterances per speaker per session (ignored with `mirror_turns`).
    pub turns_per_speaker: usize,
    /// Level of noisy-session utterances relative to quiet ones.
    pub noisy_rms_shift_db: f64,
    pub noisy_f1_shift_hz: f64,
    /// Share of the noisy shifts applied in moderate sessions.
    pub moderate_fraction: f64,
    /// One turn pair per session, the answer a copy of the first utterance,
    /// so turn features are perfectly coupled.
    pub mirror_turns: bool,
}

impl Default for SyntheticCorpusPlan {
    fn default() -> Self {
        Self {
            seed: 0,
            sample_rate: 44100,
            speakers: ("spk01".into(), "spk02".into()),
            sessions_per_label: 2,
            turns_per_speaker: 8,
            noisy_rms_shift_db: 0.0,
            noisy_f1_shift_hz: 0.0,
            moderate_fraction: 0.5,
            mirror_turns: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// Paths are relative; [`write`](Self::write) places them under a directory.
    pub manifest: Manifest,
    pub recordings: BTreeMap<PathBuf, AudioClip>,
}

const BASE_LEVEL_DB: f64 = -26.0;

struct Voice {
    f0_hz: f64,
    f1_hz: f64,
    f2_hz: f64,
}

const VOICES: [Voice; 2] = [
    Voice {
        f0_hz: 115.0,
        f1_hz: 500.0,
        f2_hz: 1500.0,
    },
    Voice {
        f0_hz: 140.0,
        f1_hz: 540.0,
        f2_hz: 1650.0,
    },
];

fn ambient_db(label: EnvLabel) -> f64 {
    match label {
        EnvLabel::Quiet => 48.0,
        EnvLabel::Moderate => 62.0,
        EnvLabel::Noisy => 76.0,
    }
}

fn gauss(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    Normal::new(0.0, sd).expect("positive deviation").sample(rng)
}

impl SyntheticCorpus {
    pub fn generate(plan: &SyntheticCorpusPlan) -> Result<Self> {
        if plan.sessions_per_label == 0 || (!plan.mirror_turns && plan.turns_per_speaker == 0) {
            return Err(Error::Empty("synthetic corpus plan"));
        }
        let rate = plan.sample_rate;
        let speakers = [plan.speakers.0.clone(), plan.speakers.1.clone()];
        let mut manifest = Manifest::new(".");
        let mut recordings = BTreeMap::new();

        for label in EnvLabel::ALL {
            let share = match label {
                EnvLabel::Quiet => 0.0,
                EnvLabel::Moderate => plan.moderate_fraction,
                EnvLabel::Noisy => 1.0,
            };
            for s in 0..plan.sessions_per_label {
                let session_id = format!("{}_{:02}", label.name(), s + 1);
                let key = |what: &str| derive_seed(plan.seed, &format!("{session_id}/{what}"));
                let mut rng = ChaCha8Rng::seed_from_u64(key("timeline"));

                // (speaker index, start sample, clip)
                let mut turns: Vec<(usize, usize, AudioClip)> = Vec::new();
                let mut t = (0.3 * rate as f64) as usize;
                let count = if plan.mirror_turns { 2 } else { 2 * plan.turns_per_speaker };
                for k in 0..count {
                    let who = k % 2;
                    let clip = if plan.mirror_turns && k == 1 {
                        turns[0].2.clone()
                    } else {
                        let mut r = ChaCha8Rng::seed_from_u64(key(&format!("turn{k}")));
                        let voice = &VOICES[who];
                        let f0 = voice.f0_hz * gauss(&mut r, 0.04).exp();
                        let f1 = voice.f1_hz + gauss(&mut r, 25.0);
                        let upper = [
                            (voice.f2_hz + gauss(&mut r, 60.0), 100.0),
                            (2500.0 + gauss(&mut r, 80.0), 150.0),
                        ];
                        let shift = share * plan.noisy_f1_shift_hz;
                        let vowel = |f1: f64| {
                            let mut formants = vec![(f1, 80.0)];
                            formants.extend_from_slice(&upper);
                            Vowel::new(f0, &formants)
                        };
                        let mut v = vowel(f1 + shift);
                        v.source_corner_hz = Some(r.gen_range(70.0..140.0));
                        v.jitter = 0.005;
                        v.duration_s = r.gen_range(0.5..0.8);
                        let db = BASE_LEVEL_DB + share * plan.noisy_rms_shift_db + gauss(&mut r, 1.5);
                        v.rms = 10f64.powf(db / 20.0);
                        let rendered = v.render(rate, r.gen());
                        if shift == 0.0 {
                            rendered
                        } else {
                            let twin = Vowel {
                                formants: vowel(f1).formants,
                                ..v.clone()
                            };
                            let correction = twin.harmonic_tilt(rate) - v.harmonic_tilt(rate);
                            apply_tilt(&rendered, correction)?
                        }
                    };
                    let len = clip.len();
                    turns.push((who, t, clip));
                    t += len + (rng.gen_range(0.25..0.4) * rate as f64) as usize;
                }
                let total = t + (0.3 * rate as f64) as usize;

                let mut files = BTreeMap::new();
                for (who, speaker) in speakers.iter().enumerate() {
                    // No noise floor: these vowels carry almost nothing above
                    // 4 kHz, so any fixed floor would own the top band and
                    // turn every level shift into a tilt shift.
                    let mut x = vec![0.0; total];
                    for (_, start, clip) in turns.iter().filter(|(w, _, _)| *w == who) {
                        for (o, v) in x[*start..].iter_mut().zip(clip.channel(0)) {
                            *o += v;
                        }
                    }
                    let path = PathBuf::from(&session_id).join(format!("{speaker}.wav"));
                    recordings.insert(path.clone(), AudioClip::mono(x, rate)?);
                    files.insert(
                        speaker.clone(),
                        SpeakerFiles {
                            close_talk: path,
                            binaural: None,
                        },
                    );
                }
                for (who, start, clip) in &turns {
                    let start_s = *start as f64 / rate as f64;
                    let end_s = (*start + clip.len()) as f64 / rate as f64;
                    manifest
                        .utterances
                        .push(Utterance::new(&session_id, &speakers[*who], Segment::new(start_s, end_s)?));
                }
                manifest.sessions.push(SessionManifest {
                    session_id: session_id.clone(),
                    speakers: speakers.to_vec(),
                    ambient_db: ambient_db(label) + rng.gen_range(0.0..3.0),
                    env_label: Some(label),
                    distance_m: 1.0,
                    noise_source: "synthetic".into(),
                    files,
                    noise_only: None,
                    impulse_responses: Vec::new(),
                });
            }
        }
        Ok(Self { manifest, recordings })
    }

    /// Audio of one utterance, cut from its recording.
    pub fn utterance_clip(&self, utterance: &Utterance) -> Result<AudioClip> {
        let path = self.manifest.audio_path(utterance)?;
        let recording = self
            .recordings
            .get(&path)
            .ok_or_else(|| Error::MissingFile(path.clone()))?;
        Ok(utterance_span(recording, utterance))
    }

    /// Writes the recordings (32-bit float) and `manifest.jsonl` under `dir`;
    /// returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        for (rel, clip) in &self.recordings {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|source| Error::Io {
                    path: parent.to_path_buf(),
                    source,
                })?;
            }
            write_wav(clip, &path, WavEncoding::Float32)?;
        }
        let path = dir.join("manifest.jsonl");
        // recording paths are relative to `dir`, not to the working directory
        Manifest {
            base_dir: dir.to_path_buf(),
            ..self.manifest.clone()
        }
        .save(&path)?;
        Ok(path)
    }
}
