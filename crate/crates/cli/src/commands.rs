//! One function per subcommand. Each reads its inputs, runs on the current
//! rayon pool and writes its outputs (plus the resolved configuration) into
//! `out_dir`. Output order never depends on scheduling.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use earshot::audio::{read_wav, resample, to_mono, AudioClip};
use earshot::augment::{make_pseudo_dataset, write_pseudo_dataset, NoiseClip, PseudoConfig, SourceUtterance};
use earshot::corpus::{assign_env_label, utterance_span, Manifest, Utterance};
use earshot::features::{extract_features, UtteranceFeatures};
use earshot::render::{batch_render, Condition, ImpulseResponse, RenderFailure, RenderOptions, SpeechItem};
use earshot::stats::{
    entrainment_report, env_effect_report, feature_records, turn_records, write_cells_csv, write_comparisons_csv,
    write_entrainment_csv, EntrainmentReport, EnvEffectReport,
};
use earshot::vad::{segment, Segment};
use earshot::{Error, Result};

use crate::config::RunConfig;

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| io_error(path, e))
}

fn json_lines<T: Serialize>(rows: &[T]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("rows serialize") + "\n")
        .collect()
}

/// Creates `out_dir` and records the configuration the run resolved to.
pub fn prepare_out_dir(out_dir: &Path, config: &RunConfig) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    write_file(&out_dir.join("resolved_config.conf"), config.to_text())
}

/// Saves `manifest` under `out_dir/name` with paths rewritten relative to
/// `out_dir`.
fn save_rebased(manifest: &Manifest, out_dir: &Path, name: &str) -> Result<PathBuf> {
    let path = out_dir.join(name);
    let base = fs::canonicalize(out_dir).map_err(|e| io_error(out_dir, e))?;
    let absolute = Manifest {
        base_dir: fs::canonicalize(&manifest.base_dir).unwrap_or_else(|_| manifest.base_dir.clone()),
        ..manifest.clone()
    };
    absolute.rebased(&base).save(&path)?;
    Ok(path)
}

pub enum SegmentInput<'a> {
    Wav(&'a Path),
    Manifest(&'a Path),
}

/// Voice-activity segmentation of one file (`segments.jsonl` of start/end
/// rows) or of every close-talk recording of a corpus (`segments.jsonl` as a
/// manifest whose utterances are the detected segments).
pub fn cmd_segment(input: SegmentInput<'_>, config: &RunConfig, out_dir: &Path) -> Result<usize> {
    config.vad.validate()?;
    match input {
        SegmentInput::Wav(path) => {
            let clip = to_mono(&read_wav(path)?);
            let segments = segment(&clip, &config.vad).map_err(|e| e.context(path.display().to_string()))?;
            write_file(&out_dir.join("segments.jsonl"), json_lines(&segments))?;
            Ok(segments.len())
        }
        SegmentInput::Manifest(path) => {
            let mut manifest = Manifest::load(path)?;
            let recordings: Vec<(String, String, PathBuf)> = manifest
                .sessions
                .iter()
                .flat_map(|s| {
                    s.files
                        .iter()
                        .map(|(spk, f)| (s.session_id.clone(), spk.clone(), manifest.resolve(&f.close_talk)))
                })
                .collect();
            let found: Vec<Vec<Utterance>> = recordings
                .par_iter()
                .map(|(session, speaker, file)| -> Result<Vec<Utterance>> {
                    let clip = to_mono(&read_wav(file)?);
                    let segs: Vec<Segment> =
                        segment(&clip, &config.vad).map_err(|e| e.context(file.display().to_string()))?;
                    Ok(segs.into_iter().map(|s| Utterance::new(session, speaker, s)).collect())
                })
                .collect::<Result<_>>()?;
            manifest.utterances = found.into_iter().flatten().collect();
            manifest.utterances.sort_by(|a, b| {
                (a.session_id.cmp(&b.session_id))
                    .then(a.start_s.total_cmp(&b.start_s))
                    .then(a.speaker_id.cmp(&b.speaker_id))
            });
            let n = manifest.utterances.len();
            save_rebased(&manifest, out_dir, "segments.jsonl")?;
            Ok(n)
        }
    }
}

/// Features of every utterance in manifest order. Each audio file is read
/// once; the utterances inside it are analysed in parallel.
pub fn compute_features(manifest: &Manifest, config: &RunConfig) -> Result<Vec<UtteranceFeatures>> {
    let mut groups: BTreeMap<PathBuf, Vec<usize>> = BTreeMap::new();
    for (i, u) in manifest.utterances.iter().enumerate() {
        groups.entry(manifest.resolve(&manifest.audio_path(u)?)).or_default().push(i);
    }
    let mut out = vec![UtteranceFeatures::default(); manifest.utterances.len()];
    for (path, indices) in groups {
        let recording = read_wav(&path)?;
        let results: Vec<(usize, UtteranceFeatures)> = indices
            .par_iter()
            .map(|&i| {
                let u = &manifest.utterances[i];
                let clip = utterance_span(&recording, u);
                extract_features(&clip, &config.features)
                    .map(|f| (i, f))
                    .map_err(|e| e.context(format!("utterance {}", u.id())))
            })
            .collect::<Result<_>>()?;
        for (i, f) in results {
            out[i] = f;
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct FeatureRow<'a> {
    utterance_id: String,
    session_id: &'a str,
    speaker_id: &'a str,
    env_label: Option<&'static str>,
    start_s: f64,
    end_s: f64,
    rms_db: Option<f64>,
    f0_mean_hz: Option<f64>,
    f1_mean_hz: Option<f64>,
    spectral_tilt_db_per_oct: Option<f64>,
    voiced_frame_count: usize,
}

/// Writes `features.csv` and `features.jsonl` (the manifest with features
/// filled in). Returns the number of utterances.
pub fn cmd_features(manifest_path: &Path, config: &RunConfig, out_dir: &Path) -> Result<usize> {
    let mut manifest = Manifest::load(manifest_path)?;
    let features = compute_features(&manifest, config)?;
    for (u, f) in manifest.utterances.iter_mut().zip(features) {
        u.features = Some(f);
    }
    let csv_path = out_dir.join("features.csv");
    let mut w = csv::Writer::from_writer(create_file(&csv_path)?);
    for u in &manifest.utterances {
        let f = u.features.unwrap_or_default();
        w.serialize(FeatureRow {
            utterance_id: u.id(),
            session_id: &u.session_id,
            speaker_id: &u.speaker_id,
            env_label: manifest.label_of(u).map(|l| l.name()),
            start_s: u.start_s,
            end_s: u.end_s,
            rms_db: f.rms_db,
            f0_mean_hz: f.f0_mean_hz,
            f1_mean_hz: f.f1_mean_hz,
            spectral_tilt_db_per_oct: f.spectral_tilt_db_per_oct,
            voiced_frame_count: f.voiced_frame_count,
        })
        .map_err(|e| Error::invalid("features.csv", e.to_string()))?;
    }
    w.flush().map_err(|e| io_error(&csv_path, e))?;
    save_rebased(&manifest, out_dir, "features.jsonl")?;
    Ok(manifest.utterances.len())
}

/// Loads a manifest and computes features for utterances that lack them.
fn manifest_with_features(manifest_path: &Path, config: &RunConfig) -> Result<Manifest> {
    let mut manifest = Manifest::load(manifest_path)?;
    if manifest.utterances.iter().any(|u| u.features.is_none()) {
        let missing = Manifest {
            utterances: manifest.utterances.iter().filter(|u| u.features.is_none()).cloned().collect(),
            ..manifest.clone()
        };
        let mut computed = compute_features(&missing, config)?.into_iter();
        for u in manifest.utterances.iter_mut().filter(|u| u.features.is_none()) {
            u.features = computed.next();
        }
    }
    Ok(manifest)
}

/// Environment-effect report: `env_effect.json`, `cells.csv`,
/// `comparisons.csv`.
pub fn cmd_analyze(manifest_path: &Path, config: &RunConfig, out_dir: &Path) -> Result<EnvEffectReport> {
    let manifest = manifest_with_features(manifest_path, config)?;
    let report = env_effect_report(&feature_records(&manifest)?, &config.env_effect())?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&out_dir.join("env_effect.json"), json + "\n")?;
    write_cells_csv(&report, create_file(&out_dir.join("cells.csv"))?)?;
    write_comparisons_csv(&report, create_file(&out_dir.join("comparisons.csv"))?)?;
    Ok(report)
}

/// Entrainment report: `entrainment.json`, `entrainment.csv`.
pub fn cmd_entrain(manifest_path: &Path, config: &RunConfig, out_dir: &Path) -> Result<EntrainmentReport> {
    let manifest = manifest_with_features(manifest_path, config)?;
    let report = entrainment_report(&turn_records(&manifest)?, &config.stat_features, config.alpha)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&out_dir.join("entrainment.json"), json + "\n")?;
    write_entrainment_csv(&report, create_file(&out_dir.join("entrainment.csv"))?)?;
    Ok(report)
}

#[derive(Debug, Serialize)]
struct LabelRow<'a> {
    session_id: &'a str,
    ambient_db: f64,
    env_label: &'static str,
}

/// Assigns every session its environment label from its ambient level:
/// `labels.jsonl` (the relabelled manifest) and `labels.csv`.
pub fn cmd_labels(manifest_path: &Path, config: &RunConfig, out_dir: &Path) -> Result<Manifest> {
    let mut manifest = Manifest::load(manifest_path)?;
    for s in &mut manifest.sessions {
        s.env_label = Some(
            assign_env_label(s.ambient_db, config.label_thresholds)
                .map_err(|e| e.context(format!("session {}", s.session_id)))?,
        );
    }
    let csv_path = out_dir.join("labels.csv");
    let mut w = csv::Writer::from_writer(create_file(&csv_path)?);
    for s in &manifest.sessions {
        w.serialize(LabelRow {
            session_id: &s.session_id,
            ambient_db: s.ambient_db,
            env_label: s.env_label.expect("assigned above").name(),
        })
        .map_err(|e| Error::invalid("labels.csv", e.to_string()))?;
    }
    w.flush().map_err(|e| io_error(&csv_path, e))?;
    save_rebased(&manifest, out_dir, "labels.jsonl")?;
    Ok(manifest)
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_error(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Empty("noise directory has no .wav files"));
    }
    Ok(files)
}

/// Pseudo training pairs from a manifest of source utterances and a
/// directory of noise recordings: `<id>_hearing.wav`, `<id>_target.wav` and
/// `pseudo.jsonl`. Returns the number of pairs.
pub fn cmd_pseudo(manifest_path: &Path, noise_dir: &Path, config: &RunConfig, out_dir: &Path) -> Result<usize> {
    let manifest = Manifest::load(manifest_path)?;
    let sources: Vec<SourceUtterance> = manifest
        .utterances
        .par_iter()
        .map(|u| {
            Ok(SourceUtterance {
                id: u.id(),
                clip: manifest.load_utterance(u).map_err(|e| e.context(format!("utterance {}", u.id())))?,
            })
        })
        .collect::<Result<_>>()?;
    let rates: std::collections::BTreeSet<u32> = sources.iter().map(|s| s.clip.sample_rate()).collect();
    let mut noises = Vec::new();
    for path in wav_files(noise_dir)? {
        let clip = to_mono(&read_wav(&path)?);
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for &rate in &rates {
            let clip = if clip.sample_rate() == rate { clip.clone() } else { resample(&clip, rate)? };
            noises.push(NoiseClip { id: id.clone(), clip });
        }
    }
    let pairs = make_pseudo_dataset(
        &sources,
        &noises,
        &PseudoConfig {
            snr_grid: config.snr_grid.clone(),
            boost_map: config.boost,
            hearing: config.hearing,
            seed: config.seed,
        },
    )?;
    let pseudo = write_pseudo_dataset(&pairs, out_dir)?;
    pseudo.save(out_dir.join("pseudo.jsonl"))?;
    Ok(pairs.len())
}

fn two_channel(clip: AudioClip) -> Result<AudioClip> {
    match clip.num_channels() {
        2 => Ok(clip),
        1 => {
            let rate = clip.sample_rate();
            let x = clip.into_channels().remove(0);
            AudioClip::new(vec![x.clone(), x], rate)
        }
        n => Err(Error::invalid("ambience", format!("expected 1 or 2 channels, got {n}"))),
    }
}

/// Listening conditions of every session: one per impulse response, with
/// the session's noise-only recording as ambience.
fn session_conditions(manifest: &Manifest) -> BTreeMap<String, Result<Vec<Condition>>> {
    manifest
        .sessions
        .iter()
        .map(|s| {
            let conditions = (|| {
                if s.impulse_responses.is_empty() {
                    return Err(Error::invalid("impulse_responses", format!("session `{}` has none", s.session_id)));
                }
                let ambience = match &s.noise_only {
                    Some(p) => {
                        let id = p.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
                        Some((id, two_channel(read_wav(manifest.resolve(p))?)?))
                    }
                    None => None,
                };
                s.impulse_responses
                    .iter()
                    .map(|r| {
                        let ir = ImpulseResponse::load(manifest.resolve(&r.path), r.distance_m, Some(s.session_id.clone()))?;
                        let ambience = match &ambience {
                            Some((id, a)) if a.sample_rate() != ir.sample_rate() => {
                                Some((id.clone(), resample(a, ir.sample_rate())?))
                            }
                            other => other.clone(),
                        };
                        Ok(Condition {
                            ir_id: r.id.clone(),
                            ir,
                            ambience,
                        })
                    })
                    .collect()
            })();
            (s.session_id.clone(), conditions)
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct RenderSummary {
    pub rendered: usize,
    pub failures: Vec<RenderFailure>,
}

/// Listener-position stimuli for every utterance under every condition of
/// its session: stereo WAVs, `stimuli.jsonl` and `failures.jsonl`.
pub fn cmd_render(manifest_path: &Path, config: &RunConfig, out_dir: &Path) -> Result<RenderSummary> {
    let manifest = Manifest::load(manifest_path)?;
    let conditions = session_conditions(&manifest);
    let mut failures = Vec::new();
    let mut items = Vec::new();
    for u in &manifest.utterances {
        let fail = |message: String| RenderFailure {
            utterance_id: u.id(),
            ir_id: String::new(),
            message,
        };
        match conditions.get(&u.session_id) {
            None => failures.push(fail(format!("unknown session `{}`", u.session_id))),
            Some(Err(e)) => failures.push(fail(e.to_string())),
            Some(Ok(_)) => match manifest.load_utterance(u) {
                Ok(clip) => items.push((u.session_id.clone(), SpeechItem { id: u.id(), clip })),
                Err(e) => failures.push(fail(e.to_string())),
            },
        }
    }
    let jobs: Vec<(&SpeechItem, &Condition)> = items
        .iter()
        .flat_map(|(session, item)| {
            let conds = conditions[session].as_ref().expect("filtered above");
            conds.iter().map(move |c| (item, c))
        })
        .collect();
    let options = RenderOptions {
        ambience_gain_db: config.ambience_gain_db,
        align_rms_db: config.align_rms_db,
    };
    let report = batch_render(&jobs, &options, out_dir)?;
    failures.extend(report.failures);
    #[derive(Serialize)]
    struct Row<'a> {
        utterance_id: &'a str,
        ir_id: &'a str,
        message: &'a str,
    }
    let rows: Vec<Row> = failures
        .iter()
        .map(|f| Row {
            utterance_id: &f.utterance_id,
            ir_id: &f.ir_id,
            message: &f.message,
        })
        .collect();
    write_file(&out_dir.join("failures.jsonl"), json_lines(&rows))?;
    Ok(RenderSummary {
        rendered: report.stimuli.len(),
        failures,
    })
}
