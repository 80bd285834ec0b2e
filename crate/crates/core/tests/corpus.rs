use std::collections::BTreeMap;
use std::path::PathBuf;

use earshot::audio::{write_wav, AudioClip, WavEncoding};
use earshot::corpus::{
    assign_env_label, turn_pairs, EnvLabel, Manifest, SessionManifest, SpeakerFiles, Utterance,
};
use earshot::vad::Segment;
use earshot::Error;
use proptest::prelude::*;

/// O(n^2) reference: for each u, the max-(start, position) v with another
/// speaker and an earlier start.
fn brute_force(utts: &[Utterance]) -> Vec<(usize, usize)> {
    let mut idx: Vec<usize> = (0..utts.len()).collect();
    idx.sort_by(|&a, &b| utts[a].start_s.total_cmp(&utts[b].start_s));
    let pos: Vec<usize> = {
        let mut p = vec![0; utts.len()];
        for (k, &i) in idx.iter().enumerate() {
            p[i] = k;
        }
        p
    };
    let mut out = Vec::new();
    for &u in &idx {
        let best = (0..utts.len())
            .filter(|&v| utts[v].speaker_id != utts[u].speaker_id && utts[v].start_s < utts[u].start_s)
            .max_by(|&a, &b| {
                utts[a]
                    .start_s
                    .total_cmp(&utts[b].start_s)
                    .then(pos[a].cmp(&pos[b]))
            });
        if let Some(v) = best {
            out.push((u, v));
        }
    }
    out
}

fn schedule() -> impl Strategy<Value = Vec<Utterance>> {
    // coarse start grid so ties occur
    prop::collection::vec((0usize..3, 0u32..40), 0..40).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (spk, start))| {
                let mut u = Utterance::new(
                    "s",
                    ["A", "B", "C"][spk],
                    Segment::new(start as f64 * 0.5, start as f64 * 0.5 + 0.4).unwrap(),
                );
                u.id = Some(format!("u{i}"));
                u
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn turn_pairs_match_brute_force(utts in schedule()) {
        let fast: Vec<(String, String)> = turn_pairs(&utts)
            .iter()
            .map(|p| (p.target.id(), p.previous.id()))
            .collect();
        let slow: Vec<(String, String)> = brute_force(&utts)
            .into_iter()
            .map(|(u, v)| (utts[u].id(), utts[v].id()))
            .collect();
        prop_assert_eq!(&fast, &slow);
        prop_assert!(fast.len() <= utts.len().saturating_sub(1));
        for p in turn_pairs(&utts) {
            prop_assert!(p.target.speaker_id != p.previous.speaker_id);
            prop_assert!(p.previous.start_s < p.target.start_s);
        }
    }

    #[test]
    fn env_label_is_monotone(a in 0.0f64..120.0, b in 0.0f64..120.0, lo in 30.0f64..60.0, gap in 0.1f64..30.0) {
        let t = (lo, lo + gap);
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(assign_env_label(x, t).unwrap() <= assign_env_label(y, t).unwrap());
    }
}

fn write_tone(path: &std::path::Path, seconds: f64) {
    let sr = 16000;
    let n = (seconds * sr as f64) as usize;
    let x = (0..n).map(|i| 0.1 * (i as f64 * 0.05).sin()).collect();
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    write_wav(&AudioClip::mono(x, sr).unwrap(), path, WavEncoding::Pcm16).unwrap();
}

const FIXTURE: &str = r#"{"kind":"session","session_id":"s01","speakers":["spk01","spk02"],"ambient_db":48.5,"env_label":"quiet","distance_m":1.5,"noise_source":"none","files":{"spk01":{"close_talk":"s01/spk01.wav","binaural":"s01/spk01_bin.wav"},"spk02":{"close_talk":"s01/spk02.wav"}}}
{"kind":"session","session_id":"s02","speakers":["spk01","spk02"],"ambient_db":72.0,"distance_m":3.0,"noise_source":"cafe_07","files":{"spk01":{"close_talk":"s02/spk01.wav"},"spk02":{"close_talk":"s02/spk02.wav"}},"noise_only":"s02/noise.wav","impulse_responses":[{"id":"ir_3m","path":"ir/3m.wav","distance_m":3.0}]}

{"kind":"utterance","session_id":"s01","speaker_id":"spk01","start_s":0.5,"end_s":1.75,"transcript":"good morning"}
{"kind":"utterance","session_id":"s02","speaker_id":"spk02","id":"s02-u1","start_s":2.0,"end_s":3.5,"transcript":"pardon?"}
"#;

fn fixture_expected(base: PathBuf) -> Manifest {
    let files = |a: &str, b: &str, bin: Option<&str>| {
        BTreeMap::from([
            (
                "spk01".to_string(),
                SpeakerFiles {
                    close_talk: a.into(),
                    binaural: bin.map(PathBuf::from),
                },
            ),
            (
                "spk02".to_string(),
                SpeakerFiles {
                    close_talk: b.into(),
                    binaural: None,
                },
            ),
        ])
    };
    let mut u2 = Utterance::new("s02", "spk02", Segment::new(2.0, 3.5).unwrap());
    u2.id = Some("s02-u1".into());
    u2.transcript = "pardon?".into();
    let mut u1 = Utterance::new("s01", "spk01", Segment::new(0.5, 1.75).unwrap());
    u1.transcript = "good morning".into();
    Manifest {
        base_dir: base,
        sessions: vec![
            SessionManifest {
                session_id: "s01".into(),
                speakers: vec!["spk01".into(), "spk02".into()],
                ambient_db: 48.5,
                env_label: Some(EnvLabel::Quiet),
                distance_m: 1.5,
                noise_source: "none".into(),
                files: files("s01/spk01.wav", "s01/spk02.wav", Some("s01/spk01_bin.wav")),
                noise_only: None,
                impulse_responses: vec![],
            },
            SessionManifest {
                session_id: "s02".into(),
                speakers: vec!["spk01".into(), "spk02".into()],
                ambient_db: 72.0,
                env_label: None,
                distance_m: 3.0,
                noise_source: "cafe_07".into(),
                files: files("s02/spk01.wav", "s02/spk02.wav", None),
                noise_only: Some("s02/noise.wav".into()),
                impulse_responses: vec![earshot::corpus::IrRef {
                    id: "ir_3m".into(),
                    path: "ir/3m.wav".into(),
                    distance_m: 3.0,
                }],
            },
        ],
        utterances: vec![u1, u2],
    }
}

fn materialize(dir: &std::path::Path) {
    for f in [
        "s01/spk01.wav",
        "s01/spk01_bin.wav",
        "s01/spk02.wav",
        "s02/spk01.wav",
        "s02/spk02.wav",
        "s02/noise.wav",
        "ir/3m.wav",
    ] {
        write_tone(&dir.join(f), 4.0);
    }
}

#[test]
fn fixture_parses_to_expected_literal() {
    let parsed = Manifest::parse(FIXTURE, "/data").unwrap();
    assert_eq!(parsed, fixture_expected("/data".into()));
    assert_eq!(parsed.utterances[0].id(), "s01_spk01_00000500");
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    materialize(dir.path());
    let path = dir.path().join("corpus.jsonl");
    std::fs::write(&path, FIXTURE).unwrap();
    let loaded = Manifest::load(&path).unwrap();
    let copy = dir.path().join("copy.jsonl");
    loaded.save(&copy).unwrap();
    assert_eq!(Manifest::load(&copy).unwrap(), loaded);
}

#[test]
fn saving_elsewhere_rebases_paths() {
    let dir = tempfile::tempdir().unwrap();
    materialize(dir.path());
    let path = dir.path().join("corpus.jsonl");
    std::fs::write(&path, FIXTURE).unwrap();
    let loaded = Manifest::load(&path).unwrap();
    std::fs::create_dir_all(dir.path().join("out")).unwrap();
    let moved = dir.path().join("out/corpus.jsonl");
    loaded.save(&moved).unwrap();
    let reloaded = Manifest::load(&moved).unwrap();
    assert_eq!(
        reloaded.sessions[0].files["spk01"].close_talk,
        PathBuf::from("../s01/spk01.wav")
    );
    let a = loaded.load_utterance(&loaded.utterances[0]).unwrap();
    let b = reloaded.load_utterance(&reloaded.utterances[0]).unwrap();
    assert_eq!(a.channels(), b.channels());
}

#[test]
fn missing_wav_is_named() {
    let dir = tempfile::tempdir().unwrap();
    materialize(dir.path());
    std::fs::remove_file(dir.path().join("s02/noise.wav")).unwrap();
    let path = dir.path().join("corpus.jsonl");
    std::fs::write(&path, FIXTURE).unwrap();
    let err = Manifest::load(&path).unwrap_err();
    assert!(matches!(&err, Error::MissingFile(p) if p.ends_with("s02/noise.wav")), "{err}");
    assert!(err.to_string().contains("noise.wav"));
}

#[test]
fn utterance_past_recording_end_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    materialize(dir.path());
    let path = dir.path().join("corpus.jsonl");
    std::fs::write(&path, FIXTURE.replace("\"end_s\":3.5", "\"end_s\":9.5")).unwrap();
    assert!(Manifest::load(&path).is_err());
}

fn schema_error(text: &str) -> (usize, String) {
    match Manifest::parse(text, "") {
        Err(Error::Manifest { line, field, .. }) => (line, field),
        other => panic!("expected a manifest error, got {other:?}"),
    }
}

#[test]
fn schema_errors_name_line_and_field() {
    let lines: Vec<&str> = FIXTURE.lines().collect();
    let with = |i: usize, replacement: String| {
        let mut l: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
        l[i] = replacement;
        l.join("\n")
    };
    assert_eq!(
        schema_error(&with(0, lines[0].replace("\"ambient_db\":48.5,", ""))),
        (1, "ambient_db".into())
    );
    assert_eq!(
        schema_error(&with(0, lines[0].replace("\"ambient_db\":48.5", "\"ambient_db\":-3"))),
        (1, "ambient_db".into())
    );
    assert_eq!(
        schema_error(&with(1, lines[1].replace("\"distance_m\":3.0,", "\"distance_m\":\"far\","))),
        (2, "distance_m".into())
    );
    assert_eq!(
        schema_error(&with(0, lines[0].replace("\"close_talk\":\"s01/spk01.wav\",", ""))),
        (1, "files.spk01.close_talk".into())
    );
    assert_eq!(
        schema_error(&with(0, lines[0].replace("[\"spk01\",\"spk02\"]", "[\"spk01\"]"))),
        (1, "speakers".into())
    );
    assert_eq!(
        schema_error(&with(0, lines[0].replace("\"quiet\"", "\"loud\""))),
        (1, "env_label".into())
    );
    assert_eq!(
        schema_error(&with(3, lines[3].replace("spk01", "spk09"))),
        (4, "speaker_id".into())
    );
    assert_eq!(
        schema_error(&with(4, lines[4].replace("\"utterance\"", "\"turn\""))),
        (5, "kind".into())
    );
    assert_eq!(schema_error(&with(3, "{not json".into())), (4, "<json>".into()));
    assert_eq!(
        schema_error(&with(3, lines[3].replace("\"transcript\"", "\"transcirpt\""))),
        (4, "transcirpt".into())
    );
}
