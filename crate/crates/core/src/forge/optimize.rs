use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::config::{AugmentSpace, ChannelSim, LossWeights, OptimConfig};
use super::loss::{trigger_alone, AugmentDraw, CapturePath, LossRefs, LossSetup, LossTerms, TUNER_NOISE_SEED};
use super::nes::nes_gradient_with;
use crate::audio::AudioClip;
use crate::dsp::{ChannelConfig, TriggerBasis, TriggerParams, MAX_TRIGGER_FREQ_HZ};
use crate::error::{Error, Result};
use crate::eval::apply_defense;
use crate::oracle::{ScorerHandle, Voiceprint};

/// Shape of the sine bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerGeometry {
    pub segments: usize,
    pub freqs_per_segment: usize,
    pub segment_len_s: f64,
}

impl Default for TriggerGeometry {
    fn default() -> Self {
        Self {
            segments: 8,
            freqs_per_segment: 8,
            segment_len_s: 0.5,
        }
    }
}

fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

const STREAM_INIT: u64 = 1;
const STREAM_EPOCH: u64 = 1 << 32;
const STREAM_NES: u64 = 2 << 32;

/// Equal-amplitude initialisation: every amplitude is the mean over the
/// victim samples of their peak magnitude; frequencies are uniform in
/// `(min_freq_hz, 4000)`.
pub fn init_trigger(
    victims: &[AudioClip],
    geometry: TriggerGeometry,
    min_freq_hz: f64,
    seed: u64,
) -> Result<TriggerParams> {
    if victims.is_empty() {
        return Err(Error::invalid("initialisation needs at least one victim sample"));
    }
    let amp = (victims.iter().map(AudioClip::peak).sum::<f64>() / victims.len() as f64).clamp(0.0, 1.0);
    let dim = geometry.segments * geometry.freqs_per_segment;
    let mut rng = stream(seed, STREAM_INIT);
    let freqs = (0..dim)
        .map(|_| loop {
            let f = rng.gen_range(min_freq_hz..MAX_TRIGGER_FREQ_HZ);
            if f > 0.0 {
                break f;
            }
        })
        .collect();
    TriggerParams::new(
        geometry.segments,
        geometry.freqs_per_segment,
        geometry.segment_len_s,
        vec![amp; dim],
        freqs,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    /// Fitness at the start of the epoch, averaged over its draws.
    pub j: f64,
    pub s_victim: f64,
    pub s_tuner: f64,
    pub l1: f64,
    /// Scorer queries issued so far, including reference embeddings.
    pub query_count: u64,
    pub channel: bool,
}

#[derive(Debug, Clone)]
pub struct ForgeOutcome {
    pub params: TriggerParams,
    pub trace: Vec<TraceRecord>,
    pub x_victim: Voiceprint,
    pub x_tuner: Voiceprint,
}

/// Failure mid-run; the epochs completed so far are preserved.
#[derive(Debug, thiserror::Error)]
#[error("optimisation aborted after {} epoch(s): {source}", trace.len())]
pub struct ForgeAborted {
    pub params: Option<TriggerParams>,
    pub trace: Vec<TraceRecord>,
    #[source]
    pub source: Error,
}

impl From<ForgeAborted> for Error {
    fn from(e: ForgeAborted) -> Self {
        e.source.in_stage("optimize")
    }
}

/// Everything `optimize` needs besides the scorer.
#[derive(Debug, Clone)]
pub struct ForgeSpec<'a> {
    pub victims: &'a [AudioClip],
    pub geometry: TriggerGeometry,
    pub augment: &'a AugmentSpace,
    pub weights: LossWeights,
    pub optim: &'a OptimConfig,
    pub channel: &'a ChannelConfig,
}

struct Forge<'a> {
    spec: ForgeSpec<'a>,
    scorer: &'a ScorerHandle,
    basis: TriggerBasis,
    trigger_len: usize,
}

impl<'a> Forge<'a> {
    fn path(&self, channel_on: bool) -> CapturePath<'a> {
        CapturePath {
            chan: self.spec.channel,
            channel_on,
        }
    }

    fn render_capture(&self, amps: &[f64], channel_on: bool) -> Result<AudioClip> {
        self.path(channel_on).capture(&self.basis.render(amps)?)
    }

    fn reference_distance(&self) -> f64 {
        let (lo, hi) = self.spec.augment.dist_range_m;
        0.5 * (lo + hi)
    }

    /// Voiceprint of the trigger played alone, as the system would hear it.
    fn tuner_print(&self, amps: &[f64], channel_on: bool) -> Result<Voiceprint> {
        let captured = self.render_capture(amps, channel_on)?;
        let mut x = trigger_alone(
            &captured,
            &self.path(channel_on),
            self.reference_distance(),
            self.spec.augment.ambient_noise,
            0.25,
            0.25,
            TUNER_NOISE_SEED,
        )?;
        if let Some(d) = &self.spec.optim.adaptive_defense {
            x = apply_defense(&x, d)?;
        }
        self.scorer.embed(&x)
    }

    /// Mean loss terms over the epoch's draws.
    fn objective(
        &self,
        amps: &[f64],
        setup: &LossSetup<'_>,
        draws: &[(AugmentDraw, AudioClip)],
    ) -> Result<LossTerms> {
        let captured = self.render_capture(amps, setup.path.channel_on)?;
        let l1: f64 = amps.iter().map(|a| a.abs()).sum();
        let terms = draws
            .iter()
            .enumerate()
            .map(|(i, (d, speech))| {
                setup.terms(&captured, l1, d, speech).map_err(|e| Error::Draw {
                    index: i,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LossTerms::mean(&terms))
    }

    fn epoch_draws(&self, epoch: usize) -> Result<Vec<(AugmentDraw, AudioClip)>> {
        let epoch = if self.spec.optim.fixed_draws { 0 } else { epoch };
        let mut rng = stream(self.spec.optim.seed, STREAM_EPOCH + epoch as u64);
        (0..self.spec.optim.draws_per_epoch)
            .map(|_| {
                let d = AugmentDraw::sample(self.spec.augment, self.spec.victims, self.trigger_len, &mut rng)?;
                let speech = d.speech(self.spec.victims, self.spec.augment)?;
                Ok((d, speech))
            })
            .collect()
    }
}

fn validate(spec: &ForgeSpec<'_>) -> Result<()> {
    spec.weights.validate()?;
    spec.augment.validate()?;
    spec.optim.validate()?;
    spec.channel.validate()?;
    let Some(first) = spec.victims.first() else {
        return Err(Error::invalid("optimisation needs at least one victim sample"));
    };
    if spec.victims.iter().any(|v| v.sample_rate() != first.sample_rate()) {
        return Err(Error::invalid("victim samples must share one sample rate"));
    }
    if let Some(r) = spec.augment.rir_bank.iter().find(|r| r.sample_rate() != first.sample_rate()) {
        return Err(Error::RateMismatch {
            left: first.sample_rate(),
            right: r.sample_rate(),
        });
    }
    Ok(())
}

/// Black-box trigger generation: NES gradient estimates of the fitness
/// with respect to the amplitude matrix, Adam ascent, and a trigger
/// voiceprint refreshed after every step. The frequency matrix stays fixed.
///
/// Each epoch draws `draws_per_epoch` augmentations shared by all of its
/// evaluations and issues `draws·(2n + 1) + 1` queries. An epoch that
/// already meets `obj_score` stops after its `draws` centre queries.
pub fn optimize(spec: ForgeSpec<'_>, scorer: &ScorerHandle) -> Result<ForgeOutcome, ForgeAborted> {
    let abort = |params: Option<&TriggerParams>, trace: &[TraceRecord], source: Error| ForgeAborted {
        params: params.cloned(),
        trace: trace.to_vec(),
        source,
    };
    validate(&spec).map_err(|e| abort(None, &[], e))?;
    let cfg = spec.optim;
    let rate = spec.victims[0].sample_rate();
    let params = init_trigger(spec.victims, spec.geometry, cfg.min_freq_hz, cfg.seed)
        .map_err(|e| abort(None, &[], e))?;
    let basis = TriggerBasis::new(&params, rate).map_err(|e| abort(Some(&params), &[], e))?;
    let forge = Forge {
        trigger_len: basis.len(),
        basis,
        spec: spec.clone(),
        scorer,
    };

    let mut channel_on = matches!(cfg.channel_sim, ChannelSim::On)
        || matches!(cfg.channel_sim, ChannelSim::Final(k) if k >= cfg.max_epoch);
    let mut amps = params.amps().to_vec();
    let x_victim = scorer
        .enroll(spec.victims)
        .map_err(|e| abort(Some(&params), &[], e.in_stage("victim voiceprint")))?;
    let mut x_tuner = forge
        .tuner_print(&amps, channel_on)
        .map_err(|e| abort(Some(&params), &[], e.in_stage("trigger voiceprint")))?;
    let mut adam = AdamState::new(amps.len());
    let mut trace: Vec<TraceRecord> = Vec::new();

    for epoch in 0..cfg.max_epoch {
        let current = params.with_amps(&amps).expect("amplitudes stay clipped");
        let fail = |trace: &[TraceRecord], e: Error| abort(Some(&current), trace, e.in_stage(&format!("epoch {epoch}")));
        if let ChannelSim::Final(k) = cfg.channel_sim {
            if !channel_on && epoch + k >= cfg.max_epoch {
                channel_on = true;
                x_tuner = forge.tuner_print(&amps, true).map_err(|e| fail(&trace, e))?;
            }
        }
        let draws = forge.epoch_draws(epoch).map_err(|e| fail(&trace, e))?;
        let refs = LossRefs {
            victim: x_victim.clone(),
            tuner: x_tuner.clone(),
        };
        let setup = LossSetup {
            scorer,
            refs: &refs,
            weights: &spec.weights,
            path: forge.path(channel_on),
            defense: cfg.adaptive_defense.as_ref(),
        };
        let centre = forge.objective(&amps, &setup, &draws).map_err(|e| fail(&trace, e))?;
        let reached = centre.fitness() >= cfg.obj_score;
        let final_config = channel_on || cfg.channel_sim == ChannelSim::Off;
        if reached && final_config {
            trace.push(TraceRecord {
                epoch,
                j: centre.fitness(),
                s_victim: centre.s_victim,
                s_tuner: centre.s_tuner,
                l1: centre.l1,
                query_count: scorer.query_count(),
                channel: channel_on,
            });
            break;
        }
        let mut nes_rng = stream(cfg.seed, STREAM_NES + epoch as u64);
        let (grad, _) = nes_gradient_with(
            |a| forge.objective(a, &setup, &draws).map(|t| (t.fitness(), ())),
            &amps,
            cfg.nes_samples,
            cfg.nes_sigma,
            &mut nes_rng,
        )
        .map_err(|e| fail(&trace, e))?;
        adam_step(&mut amps, &grad, &mut adam, cfg).map_err(|e| fail(&trace, e))?;
        if reached && !channel_on {
            // Warm-up target met: move to the full channel from here on.
            channel_on = true;
        }
        x_tuner = forge.tuner_print(&amps, channel_on).map_err(|e| fail(&trace, e))?;
        trace.push(TraceRecord {
            epoch,
            j: centre.fitness(),
            s_victim: centre.s_victim,
            s_tuner: centre.s_tuner,
            l1: centre.l1,
            query_count: scorer.query_count(),
            channel: setup.path.channel_on,
        });
    }
    let params = params.with_amps(&amps).expect("amplitudes stay clipped");
    Ok(ForgeOutcome {
        params,
        trace,
        x_victim,
        x_tuner,
    })
}

/// Zeroes amplitudes below `floor` times the largest one and returns the
/// pruned trigger with its active-frequency count.
pub fn prune_sparsify(params: &TriggerParams, floor: f64) -> (TriggerParams, usize) {
    let max = params.amps().iter().cloned().fold(0.0, f64::max);
    let cut = floor * max;
    let amps: Vec<f64> = params
        .amps()
        .iter()
        .map(|&a| if a < cut { 0.0 } else { a })
        .collect();
    let pruned = params.with_amps(&amps).expect("pruning keeps amplitudes in range");
    let active = pruned.active_count();
    (pruned, active)
}

pub const DEFAULT_PRUNE_FLOOR: f64 = 1e-3;
