//! Sessions, utterances, environment labels and turn structure.
//!
//! A manifest is a UTF-8 JSON-lines file. Every line is one object with a
//! `"kind"` of `"session"` or `"utterance"`; paths are relative to the
//! manifest file.
//!
//! ```text
//! {"kind":"session","session_id":"s01","speakers":["a","b"],"ambient_db":62.0,"env_label":"moderate","distance_m":2.0,"noise_source":"cafe_03","files":{"a":{"close_talk":"s01/a.wav"},"b":{"close_talk":"s01/b.wav"}}}
//! {"kind":"utterance","session_id":"s01","speaker_id":"a","start_s":1.25,"end_s":2.8,"transcript":"hello"}
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, to_mono, wav_info, AudioClip};
use crate::error::{Error, Result};
use crate::features::UtteranceFeatures;
use crate::vad::Segment;

/// Environment label, ordered quiet < moderate < noisy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvLabel {
    Quiet,
    Moderate,
    Noisy,
}

impl EnvLabel {
    pub const ALL: [EnvLabel; 3] = [EnvLabel::Quiet, EnvLabel::Moderate, EnvLabel::Noisy];

    pub fn name(self) -> &'static str {
        match self {
            EnvLabel::Quiet => "quiet",
            EnvLabel::Moderate => "moderate",
            EnvLabel::Noisy => "noisy",
        }
    }
}

impl fmt::Display for EnvLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvLabel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::invalid("env_label", format!("unknown label `{s}`")))
    }
}

/// Default label cut points in dB SPL. These are configuration: the
/// reference corpus does not publish its own.
pub const DEFAULT_LABEL_THRESHOLDS: (f64, f64) = (55.0, 70.0);

/// `quiet` below `t_low`, `moderate` in `[t_low, t_high)`, `noisy` above.
pub fn assign_env_label(ambient_db: f64, thresholds: (f64, f64)) -> Result<EnvLabel> {
    let (lo, hi) = thresholds;
    if !(lo < hi) {
        return Err(Error::invalid(
            "thresholds",
            format!("need t_low < t_high, got ({lo}, {hi})"),
        ));
    }
    Ok(if ambient_db < lo {
        EnvLabel::Quiet
    } else if ambient_db < hi {
        EnvLabel::Moderate
    } else {
        EnvLabel::Noisy
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeakerFiles {
    pub close_talk: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binaural: Option<PathBuf>,
}

/// Binaural talker-to-listener impulse response reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrRef {
    pub id: String,
    pub path: PathBuf,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionManifest {
    pub session_id: String,
    pub speakers: Vec<String>,
    /// Measured ambient noise level, dB SPL.
    pub ambient_db: f64,
    /// Absent until assigned, e.g. by [`assign_env_label`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_label: Option<EnvLabel>,
    pub distance_m: f64,
    #[serde(default)]
    pub noise_source: String,
    pub files: BTreeMap<String, SpeakerFiles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_only: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub impulse_responses: Vec<IrRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub session_id: String,
    pub speaker_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default)]
    pub transcript: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<UtteranceFeatures>,
    /// Standalone audio file; when set, the span is relative to this file
    /// and no session recording is needed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Map<String, serde_json::Value>>,
}

impl Utterance {
    pub fn new(session_id: &str, speaker_id: &str, segment: Segment) -> Self {
        Self {
            session_id: session_id.into(),
            speaker_id: speaker_id.into(),
            id: None,
            start_s: segment.start_s,
            end_s: segment.end_s,
            transcript: String::new(),
            features: None,
            audio: None,
            provenance: None,
        }
    }

    pub fn segment(&self) -> Result<Segment> {
        Segment::new(self.start_s, self.end_s)
    }

    /// Explicit id, or `{session}_{speaker}_{start in ms}`.
    pub fn id(&self) -> String {
        match &self.id {
            Some(id) => id.clone(),
            None => format!(
                "{}_{}_{:08}",
                self.session_id,
                self.speaker_id,
                (self.start_s * 1000.0).round() as u64
            ),
        }
    }
}

/// Parsed manifest. Paths stay as written; [`Manifest::resolve`] joins
/// them to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub sessions: Vec<SessionManifest>,
    pub utterances: Vec<Utterance>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RecordRef<'a> {
    Session(&'a SessionManifest),
    Utterance(&'a Utterance),
}

fn manifest_error(line: usize, field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Manifest {
        line,
        field: field.into(),
        message: message.into(),
    }
}

fn parse_record<T: serde::de::DeserializeOwned>(value: serde_json::Value, line: usize) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner().to_string();
        // serde reports missing/unknown fields by name in the message only
        let named = inner
            .split('`')
            .nth(1)
            .filter(|_| inner.starts_with("missing field") || inner.starts_with("unknown field"));
        let field = match (path.as_str(), named) {
            (".", Some(name)) => name.to_string(),
            (p, Some(name)) if p != name && !p.ends_with(&format!(".{name}")) => format!("{p}.{name}"),
            (p, _) => p.to_string(),
        };
        manifest_error(line, field, inner)
    })
}

impl Manifest {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        Self {
            base_dir: base_dir.into(),
            ..Default::default()
        }
    }

    /// Parses manifest text and checks the schema and cross-references, but
    /// not the referenced files.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut manifest = Manifest::new(base_dir);
        let mut session_lines = Vec::new();
        let mut utterance_lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let mut value: serde_json::Value =
                serde_json::from_str(raw).map_err(|e| manifest_error(line, "<json>", e.to_string()))?;
            let kind = value
                .as_object_mut()
                .ok_or_else(|| manifest_error(line, "<json>", "expected a JSON object"))?
                .remove("kind")
                .ok_or_else(|| manifest_error(line, "kind", "missing field `kind`"))?;
            match kind.as_str() {
                Some("session") => {
                    manifest.sessions.push(parse_record(value, line)?);
                    session_lines.push(line);
                }
                Some("utterance") => {
                    manifest.utterances.push(parse_record(value, line)?);
                    utterance_lines.push(line);
                }
                _ => {
                    return Err(manifest_error(
                        line,
                        "kind",
                        format!("expected \"session\" or \"utterance\", got {kind}"),
                    ))
                }
            }
        }
        manifest.check_schema(&session_lines, &utterance_lines)?;
        Ok(manifest)
    }

    fn check_schema(&self, session_lines: &[usize], utterance_lines: &[usize]) -> Result<()> {
        let mut ids = HashSet::new();
        for (s, &line) in self.sessions.iter().zip(session_lines) {
            if !ids.insert(s.session_id.as_str()) {
                return Err(manifest_error(line, "session_id", format!("duplicate session `{}`", s.session_id)));
            }
            if s.speakers.len() != 2 || s.speakers[0] == s.speakers[1] {
                return Err(manifest_error(line, "speakers", "exactly two distinct speakers are required"));
            }
            if !(s.ambient_db > 0.0 && s.ambient_db.is_finite()) {
                return Err(manifest_error(line, "ambient_db", "must be a positive level in dB SPL"));
            }
            if !(s.distance_m > 0.0 && s.distance_m.is_finite()) {
                return Err(manifest_error(line, "distance_m", "must be a positive distance"));
            }
            for spk in &s.speakers {
                if !s.files.contains_key(spk) {
                    return Err(manifest_error(line, format!("files.{spk}"), "no recordings for this speaker"));
                }
            }
            if let Some(extra) = s.files.keys().find(|k| !s.speakers.contains(k)) {
                return Err(manifest_error(line, format!("files.{extra}"), "not one of the session speakers"));
            }
        }
        let sessions: HashMap<&str, &SessionManifest> =
            self.sessions.iter().map(|s| (s.session_id.as_str(), s)).collect();
        let mut utt_ids = HashSet::new();
        for (u, &line) in self.utterances.iter().zip(utterance_lines) {
            if let Err(e) = u.segment() {
                return Err(manifest_error(line, "start_s", e.to_string()));
            }
            match sessions.get(u.session_id.as_str()) {
                Some(s) if !s.speakers.contains(&u.speaker_id) => {
                    return Err(manifest_error(
                        line,
                        "speaker_id",
                        format!("`{}` is not a speaker of session `{}`", u.speaker_id, u.session_id),
                    ))
                }
                None if u.audio.is_none() => {
                    return Err(manifest_error(
                        line,
                        "session_id",
                        format!("unknown session `{}` and no `audio` given", u.session_id),
                    ))
                }
                _ => {}
            }
            if !utt_ids.insert(u.id()) {
                return Err(manifest_error(line, "id", format!("duplicate utterance id `{}`", u.id())));
            }
        }
        Ok(())
    }

    /// Reads a manifest file and checks that every referenced file exists
    /// and every session-relative utterance lies within its recording.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = Self::parse(&text, base)?;
        manifest.check_files()?;
        Ok(manifest)
    }

    fn check_files(&self) -> Result<()> {
        let mut durations: HashMap<PathBuf, f64> = HashMap::new();
        let mut duration = |p: &Path| -> Result<f64> {
            let full = self.resolve(p);
            if let Some(d) = durations.get(&full) {
                return Ok(*d);
            }
            let d = wav_info(&full)?.duration_s();
            durations.insert(full, d);
            Ok(d)
        };
        for s in &self.sessions {
            for files in s.files.values() {
                duration(&files.close_talk)?;
                if let Some(b) = &files.binaural {
                    duration(b)?;
                }
            }
            if let Some(n) = &s.noise_only {
                duration(n)?;
            }
            for ir in &s.impulse_responses {
                duration(&ir.path)?;
            }
        }
        for u in &self.utterances {
            let file = self.audio_path(u)?;
            let d = duration(&file)?;
            if u.end_s > d + 1e-6 {
                return Err(Error::invalid(
                    "end_s",
                    format!("utterance `{}` ends at {} s, past the {d:.3} s recording", u.id(), u.end_s),
                ));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }

    pub fn session(&self, id: &str) -> Option<&SessionManifest> {
        self.sessions.iter().find(|s| s.session_id == id)
    }

    /// File holding the utterance's audio, as written in the manifest.
    pub fn audio_path(&self, utterance: &Utterance) -> Result<PathBuf> {
        if let Some(a) = &utterance.audio {
            return Ok(a.clone());
        }
        let session = self
            .session(&utterance.session_id)
            .ok_or_else(|| Error::invalid("session_id", format!("unknown session `{}`", utterance.session_id)))?;
        session
            .files
            .get(&utterance.speaker_id)
            .map(|f| f.close_talk.clone())
            .ok_or_else(|| Error::invalid("speaker_id", format!("no recording for `{}`", utterance.speaker_id)))
    }

    /// Mono audio of one utterance.
    pub fn load_utterance(&self, utterance: &Utterance) -> Result<AudioClip> {
        let clip = read_wav(self.resolve(&self.audio_path(utterance)?))?;
        Ok(utterance_span(&clip, utterance))
    }

    /// Environment label of the utterance's session.
    pub fn label_of(&self, utterance: &Utterance) -> Option<EnvLabel> {
        self.session(&utterance.session_id).and_then(|s| s.env_label)
    }

    /// Utterances grouped by session, each group sorted by start time.
    pub fn by_session(&self) -> BTreeMap<&str, Vec<&Utterance>> {
        let mut groups: BTreeMap<&str, Vec<&Utterance>> = BTreeMap::new();
        for u in &self.utterances {
            groups.entry(u.session_id.as_str()).or_default().push(u);
        }
        for g in groups.values_mut() {
            g.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        }
        groups
    }

    /// Writes the manifest as JSON lines, sessions first. Relative paths are
    /// rewritten against the new file's directory.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let new_base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let rebased = self.rebased(&new_base);
        let io = |e: std::io::Error| Error::Io {
            path: path.to_path_buf(),
            source: e,
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        out.write_all(rebased.to_jsonl().as_bytes()).map_err(io)?;
        out.flush().map_err(io)
    }

    /// The manifest text.
    pub fn to_jsonl(&self) -> String {
        let mut text = String::new();
        let records = self
            .sessions
            .iter()
            .map(RecordRef::Session)
            .chain(self.utterances.iter().map(RecordRef::Utterance));
        for r in records {
            text.push_str(&serde_json::to_string(&r).expect("manifest records serialize"));
            text.push('\n');
        }
        text
    }

    /// Same manifest with relative paths re-expressed from `new_base`.
    pub fn rebased(&self, new_base: &Path) -> Manifest {
        let from = absolute(&self.base_dir);
        let to = absolute(new_base);
        if from == to {
            let mut m = self.clone();
            m.base_dir = new_base.to_path_buf();
            return m;
        }
        let fix = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                return p.clone();
            }
            let full = from.join(p);
            pathdiff::diff_paths(&full, &to).unwrap_or(full)
        };
        let mut m = self.clone();
        m.base_dir = new_base.to_path_buf();
        for s in &mut m.sessions {
            for f in s.files.values_mut() {
                f.close_talk = fix(&f.close_talk);
                f.binaural = f.binaural.as_ref().map(fix);
            }
            s.noise_only = s.noise_only.as_ref().map(fix);
            for ir in &mut s.impulse_responses {
                ir.path = fix(&ir.path);
            }
        }
        for u in &mut m.utterances {
            u.audio = u.audio.as_ref().map(fix);
        }
        m
    }
}

fn absolute(p: &Path) -> PathBuf {
    let p = if p.as_os_str().is_empty() { Path::new(".") } else { p };
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// The utterance's span of an already loaded recording, mixed to mono.
pub fn utterance_span(recording: &AudioClip, utterance: &Utterance) -> AudioClip {
    let clip = recording.slice_seconds(utterance.start_s, utterance.end_s);
    if clip.is_mono() {
        clip
    } else {
        to_mono(&clip)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    Manifest::load(path)
}

pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    manifest.save(path)
}

/// A target utterance and the interlocutor's last utterance before it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnPair<'a> {
    pub target: &'a Utterance,
    pub previous: &'a Utterance,
}

/// Pairs each utterance of one session with the latest earlier-starting
/// utterance by a different speaker.
///
/// Input is taken in start-time order (it is stably sorted first). Among
/// earlier utterances with equal start times the later one in that order
/// counts as latest. Utterances with no earlier interlocutor turn are
/// omitted.
pub fn turn_pairs(utterances: &[Utterance]) -> Vec<TurnPair<'_>> {
    let mut order: Vec<&Utterance> = utterances.iter().collect();
    order.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    turn_pairs_sorted(&order)
}

pub(crate) fn turn_pairs_sorted<'a>(order: &[&'a Utterance]) -> Vec<TurnPair<'a>> {
    // latest utterance overall, and latest by any other speaker than its own
    let mut top: Option<&Utterance> = None;
    let mut second: Option<&Utterance> = None;
    let mut pairs = Vec::new();
    let mut i = 0;
    while i < order.len() {
        // utterances sharing a start time only see strictly earlier ones
        let mut j = i;
        while j < order.len() && order[j].start_s == order[i].start_s {
            j += 1;
        }
        for &u in &order[i..j] {
            let prev = match top {
                Some(t) if t.speaker_id != u.speaker_id => Some(t),
                _ => second,
            };
            if let Some(previous) = prev {
                pairs.push(TurnPair { target: u, previous });
            }
        }
        for &w in &order[i..j] {
            match top {
                Some(t) if t.speaker_id == w.speaker_id => top = Some(w),
                _ => {
                    second = top;
                    top = Some(w);
                }
            }
        }
        i = j;
    }
    pairs
}
