use earshot::audio::AudioClip;
use earshot::render::{
    batch_render, cartesian, render_at_listener, Condition, ImpulseResponse, RenderOptions, SpeechItem,
    StimulusRecord,
};
use earshot::synth::white_noise;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SR: u32 = 16000;

fn naive(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, a) in x.iter().enumerate() {
        for (j, b) in h.iter().enumerate() {
            y[i + j] += a * b;
        }
    }
    y
}

fn random(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn stereo(l: Vec<f64>, r: Vec<f64>) -> AudioClip {
    AudioClip::new(vec![l, r], SR).unwrap()
}

fn no_ambience() -> RenderOptions {
    RenderOptions {
        ambience_gain_db: f64::NEG_INFINITY,
        ..Default::default()
    }
}

#[test]
fn unit_impulse_is_identity() {
    let speech = white_noise(0.1, 0.5, SR, 1);
    let ir = ImpulseResponse::new(stereo(vec![1.0], vec![1.0]), 1.0, None).unwrap();
    let out = render_at_listener(&speech, &ir, None, &RenderOptions::default()).unwrap();
    assert_eq!(out.audio.channel(0), speech.channel(0));
    assert_eq!(out.audio.channel(1), speech.channel(0));
    assert_eq!(out.attenuation_db, 0.0);
}

#[test]
fn silent_speech_returns_ambience() {
    let speech = AudioClip::mono(vec![0.0; 4000], SR).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ir = ImpulseResponse::new(stereo(random(&mut rng, 300, 0.5), random(&mut rng, 300, 0.5)), 1.0, None).unwrap();
    let amb = stereo(random(&mut rng, 8000, 0.1), random(&mut rng, 8000, 0.1));
    let out = render_at_listener(&speech, &ir, Some(&amb), &RenderOptions::default()).unwrap();
    assert_eq!(out.audio.len(), 4299);
    for ch in 0..2 {
        assert_eq!(out.audio.channel(ch), &amb.channel(ch)[..4299]);
    }
}

#[test]
fn matches_brute_force_convolve_and_add() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..40 {
        let n = rng.gen_range(1..=4096);
        let k = rng.gen_range(1..=4096);
        let gain_db = rng.gen_range(-20.0..6.0);
        let x = random(&mut rng, n, 0.05);
        let (hl, hr) = (random(&mut rng, k, 0.05), random(&mut rng, k, 0.05));
        let amb = stereo(random(&mut rng, n + k, 0.05), random(&mut rng, n + k, 0.05));
        let speech = AudioClip::mono(x.clone(), SR).unwrap();
        let ir = ImpulseResponse::new(stereo(hl.clone(), hr.clone()), 1.0, None).unwrap();
        let options = RenderOptions {
            ambience_gain_db: gain_db,
            ..Default::default()
        };
        let out = render_at_listener(&speech, &ir, Some(&amb), &options).unwrap();
        assert_eq!(out.attenuation_db, 0.0);
        let g = 10f64.powf(gain_db / 20.0);
        for (ch, h) in [hl, hr].iter().enumerate() {
            let expected: Vec<f64> = naive(&x, h).iter().zip(amb.channel(ch)).map(|(c, a)| c + g * a).collect();
            for (a, b) in out.audio.channel(ch).iter().zip(&expected) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn left_only_ir_keeps_right_silent() {
    let speech = white_noise(0.2, 1.0, SR, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ir = ImpulseResponse::new(stereo(random(&mut rng, 2048, 0.1), vec![0.0; 2048]), 1.0, None).unwrap();
    let out = render_at_listener(&speech, &ir, None, &RenderOptions::default()).unwrap();
    let right: f64 = out.audio.channel(1).iter().map(|v| v * v).sum();
    let left: f64 = out.audio.channel(0).iter().map(|v| v * v).sum();
    assert!(right <= 1e-12, "{right}");
    assert!(left > 1.0);
}

#[test]
fn short_ambience_is_looped_to_output_length() {
    let speech = white_noise(0.05, 1.0, SR, 5);
    let ir = ImpulseResponse::new(stereo(vec![1.0, 0.5], vec![0.5, 1.0]), 1.0, None).unwrap();
    let amb = stereo(vec![0.1; 3000], vec![-0.1; 3000]);
    let out = render_at_listener(&speech, &ir, Some(&amb), &RenderOptions::default()).unwrap();
    assert_eq!(out.audio.len(), SR as usize + 1);
    // ambience present past its own length
    let tail = out.audio.channel(0)[12000] - (speech.channel(0)[12000] + 0.5 * speech.channel(0)[11999]);
    assert!(tail >= 0.1 - 1e-12 && tail <= 0.1 * 2f64.sqrt() + 1e-12, "{tail}");
}

#[test]
fn disabled_ambience_gives_convolution_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let speech = white_noise(0.05, 0.5, SR, 6);
    let ir = ImpulseResponse::new(stereo(random(&mut rng, 500, 0.1), random(&mut rng, 500, 0.1)), 1.0, None).unwrap();
    let amb = stereo(random(&mut rng, 20000, 0.3), random(&mut rng, 20000, 0.3));
    let with = render_at_listener(&speech, &ir, Some(&amb), &no_ambience()).unwrap();
    let without = render_at_listener(&speech, &ir, None, &RenderOptions::default()).unwrap();
    let energy = |c: &AudioClip| c.channels().iter().flatten().map(|v| v * v).sum::<f64>();
    assert!((energy(&with.audio) - energy(&without.audio)).abs() <= 1e-9);
}

#[test]
fn joint_attenuation_preserves_interaural_ratio() {
    let speech = white_noise(0.3, 0.5, SR, 7);
    let ir = ImpulseResponse::new(stereo(vec![4.0], vec![2.0]), 1.0, None).unwrap();
    let out = render_at_listener(&speech, &ir, None, &RenderOptions::default()).unwrap();
    assert!(out.attenuation_db < 0.0);
    assert!(out.audio.peak() <= 1.0 + 1e-12);
    for (l, r) in out.audio.channel(0).iter().zip(out.audio.channel(1)) {
        assert!((l - 2.0 * r).abs() < 1e-12);
    }
}

#[test]
fn alignment_sets_speech_level() {
    let speech = white_noise(0.01, 0.5, SR, 8);
    let ir = ImpulseResponse::new(stereo(vec![1.0], vec![1.0]), 1.0, None).unwrap();
    let options = RenderOptions {
        align_rms_db: Some(-20.0),
        ..Default::default()
    };
    let out = render_at_listener(&speech, &ir, None, &options).unwrap();
    let level = earshot::features::active_rms(&AudioClip::mono(out.audio.channel(0).to_vec(), SR).unwrap())
        .unwrap()
        .unwrap();
    assert!((20.0 * level.log10() + 20.0).abs() < 1e-9);
    assert!((out.align_gain_db - 20.0).abs() < 0.5);
}

#[test]
fn mismatched_inputs_are_rejected() {
    let speech = white_noise(0.1, 0.1, 8000, 9);
    let ir = ImpulseResponse::new(stereo(vec![1.0], vec![1.0]), 1.0, None).unwrap();
    assert!(render_at_listener(&speech, &ir, None, &RenderOptions::default()).is_err());
    let speech = white_noise(0.1, 0.1, SR, 9);
    let mono_amb = white_noise(0.1, 0.1, SR, 10);
    assert!(render_at_listener(&speech, &ir, Some(&mono_amb), &RenderOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn rendering_is_linear_in_speech(seed in 0u64..1000, g in -4.0f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..600);
        let x = random(&mut rng, n, 0.1);
        let ir = ImpulseResponse::new(stereo(random(&mut rng, 64, 0.05), random(&mut rng, 64, 0.05)), 1.0, None).unwrap();
        let base = render_at_listener(&AudioClip::mono(x.clone(), SR).unwrap(), &ir, None, &RenderOptions::default()).unwrap();
        let scaled = AudioClip::mono(x.iter().map(|v| g * v).collect(), SR).unwrap();
        let out = render_at_listener(&scaled, &ir, None, &RenderOptions::default()).unwrap();
        prop_assert_eq!(out.attenuation_db, 0.0);
        for ch in 0..2 {
            for (a, b) in out.audio.channel(ch).iter().zip(base.audio.channel(ch)) {
                prop_assert!((a - g * b).abs() <= 1e-12);
            }
        }
    }
}

fn conditions() -> Vec<Condition> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (1..=2)
        .map(|d| Condition {
            ir_id: format!("d{d}m"),
            ir: ImpulseResponse::new(
                stereo(random(&mut rng, 256, 0.2), random(&mut rng, 256, 0.2)),
                d as f64,
                Some("s01".into()),
            )
            .unwrap(),
            ambience: Some(("s01_noise".into(), stereo(random(&mut rng, 4000, 0.01), random(&mut rng, 4000, 0.01)))),
        })
        .collect()
}

fn items() -> Vec<SpeechItem> {
    vec![
        SpeechItem {
            id: "u1".into(),
            clip: white_noise(0.05, 0.5, SR, 1),
        },
        // resampled to the IR rate on the way in
        SpeechItem {
            id: "u2".into(),
            clip: white_noise(0.05, 0.5, 22050, 2),
        },
    ]
}

#[test]
fn batch_renders_every_pair_deterministically() {
    let (items, conds) = (items(), conditions());
    let jobs = cartesian(&items, &conds);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = batch_render(&jobs, &RenderOptions::default(), a.path()).unwrap();
    let rb = batch_render(&jobs, &RenderOptions::default(), b.path()).unwrap();
    assert_eq!(ra, rb);
    assert!(ra.failures.is_empty());
    assert_eq!(ra.stimuli.len(), 4);
    let mut names: Vec<_> = ra.stimuli.iter().map(|s| s.file.clone()).collect();
    names.dedup();
    assert_eq!(names.len(), 4);
    for s in &ra.stimuli {
        assert_eq!(std::fs::read(a.path().join(&s.file)).unwrap(), std::fs::read(b.path().join(&s.file)).unwrap());
        assert_eq!(s.sample_rate, SR);
        assert_eq!(s.session_id.as_deref(), Some("s01"));
    }
    let manifest = std::fs::read_to_string(a.path().join("stimuli.jsonl")).unwrap();
    assert_eq!(manifest, std::fs::read_to_string(b.path().join("stimuli.jsonl")).unwrap());
    let rows: Vec<StimulusRecord> = manifest.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows, ra.stimuli);
    assert_eq!(rows[1].ir_id, "d2m");
    assert_eq!(rows[1].ambience_gain_db, Some(0.0));
}

#[test]
fn batch_collects_failures_and_continues() {
    let mut conds = conditions();
    conds[1].ambience.as_mut().unwrap().1 = white_noise(0.01, 0.5, SR, 3);
    let items = items();
    let dir = tempfile::tempdir().unwrap();
    let report = batch_render(&cartesian(&items, &conds), &no_ambience(), dir.path()).unwrap();
    // ambience disabled: the malformed ambience still fails validation
    assert_eq!(report.stimuli.len(), 2);
    assert_eq!(report.failures.len(), 2);
    assert!(report.failures.iter().all(|f| f.ir_id == "d2m"));
    assert!(report.stimuli.iter().all(|s| s.ambience_gain_db.is_none()));
}
