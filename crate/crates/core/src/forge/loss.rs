use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{AugmentSpace, LossWeights};
use crate::audio::AudioClip;
use crate::corpus::noise_bed;
use crate::dsp::{mix, rir_convolve, shift_place, synthesize_trigger, transmit, ChannelConfig, TriggerParams};
use crate::error::{Error, Result};
use crate::eval::{apply_defense, DefenseSpec};
use crate::oracle::{cosine_score, ScorerHandle, Voiceprint};

/// One sample from the augmentation space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentDraw {
    /// Index into the victim sample list.
    pub victim: usize,
    pub shift_s: f64,
    pub beta: f64,
    pub dist_m: f64,
    /// Index into the RIR bank, if reverberation applies to this draw.
    pub rir: Option<usize>,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.gen_range(r.0..r.1)
    }
}

impl AugmentDraw {
    pub fn sample<R: Rng + ?Sized>(
        space: &AugmentSpace,
        victims: &[AudioClip],
        trigger_len: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if victims.is_empty() {
            return Err(Error::invalid("augmentation needs at least one victim sample"));
        }
        let victim = rng.gen_range(0..victims.len());
        let x = &victims[victim];
        let shift_range = space.shift_range_s.unwrap_or_else(|| {
            let slack = x.len().saturating_sub(trigger_len) as f64 / x.sample_rate() as f64;
            (0.0, slack)
        });
        let shift_s = uniform(rng, shift_range);
        let beta = uniform(rng, space.beta_range);
        let dist_m = uniform(rng, space.dist_range_m);
        let rir = (!space.rir_bank.is_empty() && rng.gen_bool(space.rir_prob))
            .then(|| rng.gen_range(0..space.rir_bank.len()));
        Ok(Self {
            victim,
            shift_s,
            beta,
            dist_m,
            rir,
        })
    }

    /// The victim utterance this draw mixes with, reverberated if selected.
    pub fn speech(&self, victims: &[AudioClip], space: &AugmentSpace) -> Result<AudioClip> {
        let x = victims
            .get(self.victim)
            .ok_or_else(|| Error::invalid(format!("victim index {} out of range", self.victim)))?;
        match self.rir {
            Some(i) => {
                let rir = space
                    .rir_bank
                    .get(i)
                    .ok_or_else(|| Error::invalid(format!("RIR index {i} out of range")))?;
                rir_convolve(x, rir)
            }
            None => Ok(x.clone()),
        }
    }
}

/// How the emitted trigger reaches the microphone.
#[derive(Debug, Clone, Copy)]
pub struct CapturePath<'a> {
    pub chan: &'a ChannelConfig,
    /// Simulate SSB modulation and the square-law capture; otherwise the
    /// trigger arrives as a plain attenuated baseband.
    pub channel_on: bool,
}

impl CapturePath<'_> {
    /// Trigger as captured at zero distance.
    pub fn capture(&self, p: &AudioClip) -> Result<AudioClip> {
        if self.channel_on {
            transmit(p, self.chan, 0.0)
        } else {
            Ok(p.clone())
        }
    }

    /// Gain turning a zero-distance capture into one at `dist_m`. The
    /// square law squares the propagation factor of the ultrasound.
    pub fn gain(&self, dist_m: f64) -> f64 {
        let g = self.chan.attenuation_factor(dist_m);
        if self.channel_on {
            g * g
        } else {
            g
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub s_victim: f64,
    pub s_tuner: f64,
    pub l1: f64,
    pub loss: f64,
}

impl LossTerms {
    pub fn new(s_victim: f64, s_tuner: f64, l1: f64, w: &LossWeights) -> Self {
        Self {
            s_victim,
            s_tuner,
            l1,
            loss: -w.alpha1 * s_victim - w.alpha2 * s_tuner + w.alpha3 * l1,
        }
    }

    /// J, the negated loss.
    pub fn fitness(&self) -> f64 {
        -self.loss
    }

    pub fn mean(terms: &[LossTerms]) -> Self {
        let n = terms.len() as f64;
        let avg = |f: fn(&LossTerms) -> f64| terms.iter().map(f).sum::<f64>() / n;
        Self {
            s_victim: avg(|t| t.s_victim),
            s_tuner: avg(|t| t.s_tuner),
            l1: avg(|t| t.l1),
            loss: avg(|t| t.loss),
        }
    }
}

/// Reference voiceprints the loss pulls towards.
#[derive(Debug, Clone)]
pub struct LossRefs {
    pub victim: Voiceprint,
    pub tuner: Voiceprint,
}

/// Everything in the loss that does not depend on the amplitudes.
pub struct LossSetup<'a> {
    pub scorer: &'a ScorerHandle,
    pub refs: &'a LossRefs,
    pub weights: &'a LossWeights,
    pub path: CapturePath<'a>,
    pub defense: Option<&'a DefenseSpec>,
}

impl LossSetup<'_> {
    /// Loss for an already captured trigger mixed into prepared speech.
    pub(crate) fn terms(
        &self,
        captured: &AudioClip,
        l1: f64,
        draw: &AugmentDraw,
        speech: &AudioClip,
    ) -> Result<LossTerms> {
        let p_d = captured.scaled(self.path.gain(draw.dist_m));
        let placed = shift_place(&p_d, draw.shift_s, speech.len())?;
        let mut x = mix(speech, &placed, draw.beta)?.clip;
        if let Some(d) = self.defense {
            x = apply_defense(&x, d)?;
        }
        let vp = self.scorer.embed(&x)?;
        Ok(LossTerms::new(
            cosine_score(&vp, &self.refs.victim)?,
            cosine_score(&vp, &self.refs.tuner)?,
            l1,
            self.weights,
        ))
    }
}

/// Loss of `params` under a single augmentation draw.
pub fn loss_eval(
    params: &TriggerParams,
    draw: &AugmentDraw,
    victims: &[AudioClip],
    space: &AugmentSpace,
    setup: &LossSetup<'_>,
) -> Result<LossTerms> {
    let inner = || -> Result<LossTerms> {
        let rate = victims
            .get(draw.victim)
            .ok_or_else(|| Error::invalid(format!("victim index {} out of range", draw.victim)))?
            .sample_rate();
        let p = synthesize_trigger(params, rate)?;
        let captured = setup.path.capture(&p)?;
        let speech = draw.speech(victims, space)?;
        setup.terms(&captured, params.l1(), draw, &speech)
    };
    inner().map_err(|e| Error::Draw {
        index: 0,
        source: Box::new(e),
    })
}

/// Trigger played alone: the capture at `dist_m` over an ambient noise bed,
/// starting `lead_s` into a window `tail_s` longer than the trigger.
pub fn trigger_alone(
    captured: &AudioClip,
    path: &CapturePath<'_>,
    dist_m: f64,
    ambient_noise: f64,
    lead_s: f64,
    tail_s: f64,
    noise_seed: u64,
) -> Result<AudioClip> {
    let rate = captured.sample_rate() as f64;
    let total = captured.len() + ((lead_s + tail_s) * rate).round() as usize;
    let placed = shift_place(&captured.scaled(path.gain(dist_m)), lead_s, total)?;
    let mut bed = noise_bed(total, ambient_noise, noise_seed);
    if bed.sample_rate() != captured.sample_rate() {
        bed = AudioClip::new(bed.into_samples(), captured.sample_rate())?;
    }
    placed.add(&bed)
}

/// Noise seed reserved for the reference trigger-alone recording.
pub(crate) const TUNER_NOISE_SEED: u64 = 0x7475_6e65;

/// Captures for adversary authentication attempts: each plays the trigger at
/// a random distance and offset inside a quiet window.
pub fn trigger_probes(
    params: &TriggerParams,
    path: &CapturePath<'_>,
    space: &AugmentSpace,
    rate: u32,
    count: usize,
    seed: u64,
) -> Result<Vec<AudioClip>> {
    let p = synthesize_trigger(params, rate)?;
    let captured = path.capture(&p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let d = uniform(&mut rng, space.dist_range_m);
            let lead = rng.gen_range(0.0..0.5);
            let tail = rng.gen_range(0.0..0.5);
            trigger_alone(&captured, path, d, space.ambient_noise, lead, tail, rng.gen())
        })
        .collect()
}
