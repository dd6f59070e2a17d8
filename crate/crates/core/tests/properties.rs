mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use common::{hann_magnitude, line_power};
use ultrasonic_backdoor::corpus::{SpeakerProfile, UtteranceSpec};
use ultrasonic_backdoor::dsp::{
    attenuate, mix, shift_place, ssb_modulate, synthesize_trigger, transmit, ChannelConfig, TriggerParams,
};
use ultrasonic_backdoor::eval::{apply_defense, decide, median_filter, DefenseSpec, Task};
use ultrasonic_backdoor::features::{mfcc_features, MfccConfig};
use ultrasonic_backdoor::forge::{adam_step, AdamState, OptimConfig};
use ultrasonic_backdoor::oracle::{ScorerHandle, Voiceprint};
use ultrasonic_backdoor::AudioClip;

fn clip(v: Vec<f64>, rate: u32) -> AudioClip {
    AudioClip::new(v, rate).unwrap()
}

fn samples(len: std::ops::Range<usize>, amp: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-amp..amp, len)
}

fn trigger_params() -> impl Strategy<Value = TriggerParams> {
    (1usize..4, 1usize..4).prop_flat_map(|(m, n)| {
        (
            prop::collection::vec(0.0..1.0f64, m * n),
            prop::collection::vec(50.0..3990.0f64, m * n),
        )
            .prop_map(move |(a, f)| TriggerParams::new(m, n, 0.1, a, f).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attenuation_never_amplifies(x in samples(1..512, 1.0), d in 0.0..5.0f64) {
        let c = ChannelConfig::default();
        let y = attenuate(&clip(x.clone(), c.hi_rate_hz), d, &c).unwrap();
        for (a, b) in x.iter().zip(y.samples()) {
            prop_assert!(b.abs() <= a.abs());
        }
    }

    #[test]
    fn mix_is_linear_before_rescale(
        x1 in samples(64..65, 0.2),
        x2 in samples(64..65, 0.2),
        p1 in samples(64..65, 0.1),
        p2 in samples(64..65, 0.1),
        beta in 0.1..1.0f64,
        c in 0.1..1.0f64,
    ) {
        let r = 16_000;
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u + v).collect::<Vec<_>>();
        let whole = mix(&clip(add(&x1, &x2), r), &clip(add(&p1, &p2), r), beta).unwrap();
        let a = mix(&clip(x1.clone(), r), &clip(p1.clone(), r), beta).unwrap();
        let b = mix(&clip(x2, r), &clip(p2, r), beta).unwrap();
        prop_assert_eq!(whole.rescale, 1.0);
        for ((w, u), v) in whole.clip.samples().iter().zip(a.clip.samples()).zip(b.clip.samples()) {
            prop_assert!((w - (u + v)).abs() < 1e-12);
        }
        let scaled = mix(&clip(x1, r).scaled(c), &clip(p1, r).scaled(c), beta).unwrap();
        for (s, u) in scaled.clip.samples().iter().zip(a.clip.samples()) {
            prop_assert!((s - c * u).abs() < 1e-12);
        }
    }

    #[test]
    fn placement_keeps_length_and_retained_energy(
        p in samples(1..200, 1.0),
        start in 0usize..300,
        total in 1usize..300,
    ) {
        let r = 1000;
        let out = shift_place(&clip(p.clone(), r), start as f64 / r as f64, total).unwrap();
        prop_assert_eq!(out.len(), total);
        let kept: f64 = p.iter().take(total.saturating_sub(start)).sum();
        let got: f64 = out.samples().iter().sum();
        prop_assert!((kept - got).abs() < 1e-9);
    }

    #[test]
    fn adam_keeps_amplitudes_in_unit_box(
        init in prop::collection::vec(0.0..1.0f64, 6),
        grads in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 6), 1..20),
        eta in 0.001..0.5f64,
    ) {
        let cfg = OptimConfig { lr_eta: eta, ..Default::default() };
        let mut amps = init;
        let mut st = AdamState::new(6);
        for g in &grads {
            adam_step(&mut amps, g, &mut st, &cfg).unwrap();
            prop_assert!(amps.iter().all(|a| (0.0..=1.0).contains(a)));
        }
    }

    #[test]
    fn voiceprints_have_unit_norm(raw in prop::collection::vec(-100.0..100.0f64, 2..64)) {
        prop_assume!(raw.iter().any(|v| v.abs() > 1e-6));
        let vp = Voiceprint::new(raw).unwrap();
        let norm: f64 = vp.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        let m = Voiceprint::mean(&[vp.clone(), vp]).unwrap();
        let norm: f64 = m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantize_is_idempotent(x in samples(1..400, 1.0), sixteen in any::<bool>()) {
        let d = DefenseSpec::Quantize { bits: if sixteen { 16 } else { 8 } };
        let once = apply_defense(&clip(x, 16_000), &d).unwrap();
        let twice = apply_defense(&once, &d).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn median_is_idempotent_on_constant_runs(
        runs in prop::collection::vec((-1.0..1.0f64, 5usize..20), 1..12),
        kernel in prop::sample::select(vec![3usize, 5]),
    ) {
        let x: Vec<f64> = runs.iter().flat_map(|(v, n)| std::iter::repeat(*v).take(*n)).collect();
        let x = clip(x, 16_000);
        let once = median_filter(&x, kernel);
        prop_assert_eq!(&once, &x);
        prop_assert_eq!(median_filter(&once, kernel), once);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn synthesis_and_channel_are_deterministic(params in trigger_params()) {
        let a = synthesize_trigger(&params, 16_000).unwrap();
        let b = synthesize_trigger(&params, 16_000).unwrap();
        prop_assert_eq!(&a, &b);
        let c = ChannelConfig::default();
        prop_assert_eq!(transmit(&a, &c, 0.7).unwrap(), transmit(&b, &c, 0.7).unwrap());
    }

    #[test]
    fn rejected_sideband_is_suppressed(f in 100.0..4000.0f64) {
        let c = ChannelConfig::default();
        let rate = 16_000;
        let tone: Vec<f64> = (0..rate)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * f * i as f64 / rate as f64).cos())
            .collect();
        let u = ssb_modulate(&clip(tone, rate), &c).unwrap();
        let mag = hann_magnitude(u.samples());
        let df = c.hi_rate_hz as f64 / u.len() as f64;
        let kept = line_power(&mag, df, c.carrier_hz + f, 3);
        let rejected = line_power(&mag, df, c.carrier_hz - f, 3);
        prop_assert!(10.0 * (rejected / kept).log10() <= -30.0);
    }

    #[test]
    fn mfcc_gain_invariance(seed in 0u64..1000, alpha in 0.01..=1.0f64) {
        let x = SpeakerProfile::generate(seed % 7)
            .utterance(&UtteranceSpec::with_duration(0.5), seed)
            .unwrap();
        let cfg = MfccConfig::default();
        let a = mfcc_features(&x, &cfg).unwrap();
        let b = mfcc_features(&x.scaled(alpha), &cfg).unwrap();
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            for (u, v) in fa.iter().zip(fb) {
                prop_assert!((u - v).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn frame_count_formula(len in 400usize..6000) {
        let x = clip(vec![0.01; len], 16_000);
        let f = mfcc_features(&x, &MfccConfig::default()).unwrap();
        prop_assert_eq!(f.len(), 1 + (len - 400) / 160);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn decisions_are_scale_invariant(seed in 0u64..100, alpha in 0.05..=1.0f64) {
        let scorer = ScorerHandle::builtin();
        let spec = UtteranceSpec::with_duration(1.5);
        let enrolled: BTreeMap<u64, Voiceprint> = (0..3u64)
            .map(|id| {
                let x = SpeakerProfile::generate(id).utterance(&spec, 500 + id).unwrap();
                (id, scorer.embed(&x).unwrap())
            })
            .collect();
        let probe = SpeakerProfile::generate(seed % 3).utterance(&spec, seed).unwrap();
        let a = scorer.embed(&probe).unwrap();
        let b = scorer.embed(&probe.scaled(alpha)).unwrap();
        for task in Task::ALL {
            let claimed = (task == Task::Sv).then_some(seed % 3);
            let da = decide(task, &a, claimed, &enrolled, Some(0.5)).unwrap();
            let db = decide(task, &b, claimed, &enrolled, Some(0.5)).unwrap();
            prop_assert_eq!(da.accepted, db.accepted);
            prop_assert_eq!(da.identity, db.identity);
        }
    }
}
