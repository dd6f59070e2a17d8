use ultrasonic_backdoor::corpus::{SpeakerProfile, UtteranceSpec};
use ultrasonic_backdoor::dsp::ChannelConfig;
use ultrasonic_backdoor::forge::{
    init_trigger, optimize, AugmentSpace, ChannelSim, ForgeOutcome, ForgeSpec, LossWeights, OptimConfig,
    TriggerGeometry,
};
use ultrasonic_backdoor::oracle::ScorerHandle;
use ultrasonic_backdoor::AudioClip;

const GEOMETRY: TriggerGeometry = TriggerGeometry {
    segments: 2,
    freqs_per_segment: 3,
    segment_len_s: 0.5,
};

fn victims(g: usize) -> Vec<AudioClip> {
    let p = SpeakerProfile::generate(5);
    (0..g)
        .map(|i| p.utterance(&UtteranceSpec::with_duration(1.5), 70 + i as u64).unwrap())
        .collect()
}

fn quick(seed: u64) -> OptimConfig {
    OptimConfig {
        max_epoch: 4,
        draws_per_epoch: 2,
        nes_samples: 3,
        obj_score: 10.0,
        channel_sim: ChannelSim::Off,
        seed,
        ..Default::default()
    }
}

fn run(victims: &[AudioClip], optim: &OptimConfig, scorer: &ScorerHandle) -> ForgeOutcome {
    let augment = AugmentSpace::default();
    let chan = ChannelConfig::default();
    optimize(
        ForgeSpec {
            victims,
            geometry: GEOMETRY,
            augment: &augment,
            weights: LossWeights::default(),
            optim,
            channel: &chan,
        },
        scorer,
    )
    .unwrap()
}

#[test]
fn query_budget_is_exact() {
    let v = victims(3);
    let cfg = quick(1);
    let scorer = ScorerHandle::builtin();
    let out = run(&v, &cfg, &scorer);
    let per_epoch = (cfg.draws_per_epoch * (2 * cfg.nes_samples + 1) + 1) as u64;
    let startup = v.len() as u64 + 1;
    assert_eq!(out.trace.len(), cfg.max_epoch);
    for (e, r) in out.trace.iter().enumerate() {
        assert_eq!(r.query_count, startup + per_epoch * (e as u64 + 1));
    }
    assert_eq!(scorer.query_count(), startup + per_epoch * cfg.max_epoch as u64);
}

#[test]
fn channel_switch_costs_one_query() {
    let v = victims(1);
    let cfg = OptimConfig {
        max_epoch: 2,
        channel_sim: ChannelSim::Final(1),
        ..quick(2)
    };
    let scorer = ScorerHandle::builtin();
    let out = run(&v, &cfg, &scorer);
    let per_epoch = (cfg.draws_per_epoch * (2 * cfg.nes_samples + 1) + 1) as u64;
    assert_eq!(scorer.query_count(), 2 + 2 * per_epoch + 1);
    assert!(!out.trace[0].channel);
    assert!(out.trace[1].channel);
}

#[test]
fn early_stop_spends_only_centre_queries() {
    let v = victims(1);
    let cfg = OptimConfig {
        obj_score: -100.0,
        ..quick(3)
    };
    let scorer = ScorerHandle::builtin();
    let out = run(&v, &cfg, &scorer);
    assert_eq!(out.trace.len(), 1);
    assert_eq!(scorer.query_count(), 2 + cfg.draws_per_epoch as u64);
}

#[test]
fn identical_seeds_give_identical_traces() {
    let v = victims(2);
    let a = run(&v, &quick(9), &ScorerHandle::builtin());
    let b = run(&v, &quick(9), &ScorerHandle::builtin());
    assert_eq!(a.params, b.params);
    assert_eq!(
        serde_json::to_string(&a.trace).unwrap(),
        serde_json::to_string(&b.trace).unwrap()
    );
    let c = run(&v, &quick(10), &ScorerHandle::builtin());
    assert_ne!(a.params, c.params);
}

#[test]
fn zero_epochs_returns_initialisation() {
    let v = victims(2);
    let cfg = OptimConfig {
        max_epoch: 0,
        ..quick(4)
    };
    let out = run(&v, &cfg, &ScorerHandle::builtin());
    assert!(out.trace.is_empty());
    assert_eq!(out.params, init_trigger(&v, GEOMETRY, cfg.min_freq_hz, cfg.seed).unwrap());
}

#[test]
fn amplitudes_stay_clipped() {
    let v = victims(1);
    let cfg = OptimConfig {
        lr_eta: 0.3,
        ..quick(5)
    };
    let out = run(&v, &cfg, &ScorerHandle::builtin());
    assert!(out.params.amps().iter().all(|a| (0.0..=1.0).contains(a)));
}

#[test]
fn fitness_trends_upward_with_fixed_draws() {
    let v = victims(2);
    let mut rising = 0;
    let mut pairs = 0;
    for seed in 0..10 {
        let cfg = OptimConfig {
            max_epoch: 8,
            fixed_draws: true,
            ..quick(100 + seed)
        };
        let out = run(&v, &cfg, &ScorerHandle::builtin());
        for w in out.trace.windows(2) {
            pairs += 1;
            if w[1].j >= w[0].j {
                rising += 1;
            }
        }
    }
    let frac = rising as f64 / pairs as f64;
    assert!(frac >= 0.8, "J rose in {rising} of {pairs} epoch pairs");
}
