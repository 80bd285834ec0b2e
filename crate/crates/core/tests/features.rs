use earshot::audio::AudioClip;
use earshot::dsp::{first_order_shelf, FilterBank, FrameSpec};
use earshot::features::{
    extract_f0, extract_f1, extract_features, extract_rms, extract_spectral_tilt, FeatureConfig, VoicingTrack,
};
use earshot::synth::{colored_noise, sawtooth, sine, white_noise, Vowel};

const SR: u32 = 44_100;

fn f0_stats(clip: &AudioClip, truth: f64) -> (f64, f64, usize) {
    let track = extract_f0(clip, (70.0, 400.0)).unwrap();
    let recall = track.voiced_count() as f64 / track.len() as f64;
    let octave = track
        .f0_hz()
        .iter()
        .flatten()
        .filter(|f| (**f / truth).log2().abs() > 0.5)
        .count();
    ((track.mean_f0().unwrap() - truth).abs(), recall, octave)
}

#[test]
fn f0_tones_at_every_reference_pitch() {
    for f in [100.0, 150.0, 220.0, 330.0] {
        for clip in [sine(f, 0.5, 1.0, SR), sawtooth(f, 0.5, 1.0, SR)] {
            let (err, recall, octave) = f0_stats(&clip, f);
            assert!(err <= 2.0, "{f} Hz: error {err}");
            assert!(recall >= 0.9, "{f} Hz: recall {recall}");
            assert_eq!(octave, 0, "{f} Hz");
        }
    }
}

#[test]
fn f0_scale_invariant() {
    let clip = sawtooth(150.0, 1.0, 0.5, SR);
    let a = extract_f0(&clip, (70.0, 400.0)).unwrap().mean_f0().unwrap();
    for g in [0.1, 0.5] {
        let b = extract_f0(&clip.scaled(g), (70.0, 400.0)).unwrap().mean_f0().unwrap();
        assert!((a - b).abs() < 0.01, "{a} {b}");
    }
}

#[test]
fn f1_single_resonator_at_700() {
    let clip = Vowel::new(100.0, &[(700.0, 80.0)]).render(SR, 1);
    let track = extract_f0(&clip, (70.0, 400.0)).unwrap();
    let f1 = extract_f1(&clip, &track).unwrap().unwrap();
    assert!((f1 - 700.0).abs() <= 50.0, "{f1}");
}

#[test]
fn f1_picks_the_lowest_resonance() {
    let clip = Vowel::new(120.0, &[(300.0, 60.0), (2200.0, 120.0)]).render(SR, 2);
    let track = extract_f0(&clip, (70.0, 400.0)).unwrap();
    let f1 = extract_f1(&clip, &track).unwrap().unwrap();
    assert!((f1 - 300.0).abs() <= 50.0, "{f1}");
}

#[test]
fn f1_seeded_vowel_trials() {
    use rand::{Rng, SeedableRng};
    for f1 in [300.0, 500.0, 700.0] {
        let mut hits = 0;
        for seed in 0..30 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut v = Vowel::new(
                rng.gen_range(90.0..160.0),
                &[
                    (f1, rng.gen_range(60.0..100.0)),
                    (rng.gen_range(1200.0..2000.0), 100.0),
                    (rng.gen_range(2400.0..3000.0), 150.0),
                ],
            );
            v.jitter = 0.01;
            let clip = v.render(SR, seed);
            let track = extract_f0(&clip, (70.0, 400.0)).unwrap();
            if let Some(est) = extract_f1(&clip, &track).unwrap() {
                if (est - f1).abs() <= 50.0 {
                    hits += 1;
                }
            }
        }
        assert!(hits >= 27, "F1 {f1}: {hits}/30");
    }
}

#[test]
fn f1_white_noise_is_undefined_or_rejected() {
    for seed in 0..20 {
        let clip = white_noise(0.1, 0.3, SR, seed);
        let track = extract_f0(&clip, (70.0, 400.0)).unwrap();
        let undefined = extract_f1(&clip, &track).unwrap().is_none();
        let forced = VoicingTrack::all_voiced(&clip, FrameSpec::analysis_default(SR));
        let kept = earshot::features::f1_track(&clip, &forced, &Default::default()).unwrap().len();
        let rejected = (kept as f64) <= 0.5 * forced.len() as f64;
        assert!(undefined || rejected, "seed {seed}");
    }
}

#[test]
fn f1_scale_invariant() {
    let clip = Vowel::new(110.0, &[(500.0, 80.0), (1500.0, 100.0)]).render(SR, 4);
    let track = extract_f0(&clip, (70.0, 400.0)).unwrap();
    let a = extract_f1(&clip, &track).unwrap().unwrap();
    let b = extract_f1(&clip.scaled(0.1), &track).unwrap().unwrap();
    assert!((a - b).abs() < 1.0, "{a} {b}");
}

#[test]
fn pink_noise_tilt_is_flat() {
    for seed in 0..5 {
        let clip = colored_noise(-3.0, 0.1, 0.5, SR, seed);
        let track = VoicingTrack::all_voiced(&clip, FrameSpec::analysis_default(SR));
        let t = extract_spectral_tilt(&clip, &track, &FilterBank::tilt_default()).unwrap();
        assert!(t.abs() <= 0.5, "seed {seed}: {t}");
    }
}

#[test]
fn rms_shifts_exactly_with_gain() {
    let clip = Vowel::new(130.0, &[(600.0, 80.0)]).render(SR, 5);
    let track = extract_f0(&clip, (70.0, 400.0)).unwrap();
    let a = extract_rms(&clip, &track).unwrap().unwrap();
    let b = extract_rms(&clip.scaled(0.25), &track).unwrap().unwrap();
    assert!((a - b - 20.0 * 4f64.log10()).abs() < 0.01);
}

#[test]
fn shelf_tilt_difference() {
    let clip = white_noise(0.1, 0.5, SR, 9);
    let track = VoicingTrack::all_voiced(&clip, FrameSpec::analysis_default(SR));
    let bank = FilterBank::tilt_default();
    let before = extract_spectral_tilt(&clip, &track, &bank).unwrap();
    let after = extract_spectral_tilt(&first_order_shelf(&clip, 1000.0, 6.0).unwrap(), &track, &bank).unwrap();
    assert!(after > before && (1.0..=6.0).contains(&(after - before)));
}

#[test]
fn vowel_features_are_all_defined_and_deterministic() {
    let clip = Vowel::new(140.0, &[(500.0, 80.0), (1500.0, 100.0), (2500.0, 120.0)]).render(SR, 6);
    let cfg = FeatureConfig::default();
    let a = extract_features(&clip, &cfg).unwrap();
    assert!(a.rms_db.unwrap() <= 0.0);
    assert!((a.f0_mean_hz.unwrap() - 140.0).abs() < 2.0);
    assert!((a.f1_mean_hz.unwrap() - 500.0).abs() < 50.0);
    assert!(a.spectral_tilt_db_per_oct.is_some());
    assert_eq!(a, extract_features(&clip, &cfg).unwrap());
}
