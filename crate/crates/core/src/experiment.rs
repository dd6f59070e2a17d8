//! Stages of a full attack experiment driven by a manifest: trigger
//! generation, poisoned enrollment, threshold calibration and evaluation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::corpus::{SpeakerProfile, UtteranceSpec, CORPUS_RATE};
use crate::dsp::{mix, resample, shift_place, synthesize_trigger, synthetic_rir_bank, TriggerParams};
use crate::error::{Error, Result};
use crate::eval::{calibrate_threshold, trial_scores, Calibration, EvalConfig, SpeakerId, Threshold};
use crate::forge::{optimize, trigger_probes, AugmentSpace, CapturePath, ChannelSim, ForgeAborted, ForgeOutcome, ForgeSpec, OptimConfig};
use crate::io::{read_wav, DataSource, ExperimentManifest, RirSource, Stamp};
use crate::oracle::{ScorerHandle, Voiceprint};

/// Recordings of one speaker.
#[derive(Debug, Clone, Default)]
pub struct SpeakerAudio {
    /// What the adversary recorded of the speaker.
    pub attack: Vec<AudioClip>,
    pub enroll: Vec<AudioClip>,
    /// Held-out genuine probes.
    pub test: Vec<AudioClip>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrolledPrint {
    pub voiceprint: Voiceprint,
    pub poisoned: bool,
}

const ROLE_ATTACK: u64 = 1;
const ROLE_ENROLL: u64 = 2;
const ROLE_TEST: u64 = 3;
const ROLE_FORGE: u64 = 4;
const ROLE_POISON: u64 = 5;
const ROLE_PROBE: u64 = 6;
const ROLE_RIR: u64 = 7;

/// SplitMix64 finaliser over the experiment seed, a speaker, a role and an index.
fn derive_seed(seed: u64, id: u64, role: u64, index: u64) -> u64 {
    let mut z = seed
        ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ role.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ index.wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn to_rate(clip: AudioClip, rate: u32) -> Result<AudioClip> {
    if clip.sample_rate() == rate {
        Ok(clip)
    } else {
        resample(&clip, rate)
    }
}

/// A loaded experiment: manifest, its hash, and all audio at the scorer rate.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub manifest: ExperimentManifest,
    pub hash: String,
    pub rate: u32,
    pub speakers: BTreeMap<SpeakerId, SpeakerAudio>,
    /// Augmentation space with the RIR bank filled in.
    pub augment: AugmentSpace,
}

impl Experiment {
    pub fn new(manifest: ExperimentManifest, rate: u32) -> Result<Self> {
        manifest.validate()?;
        let hash = manifest.hash();
        let speakers = load_speakers(&manifest, rate).map_err(|e| e.in_stage("load audio"))?;
        let mut augment = manifest.augment.clone();
        augment.rir_bank = match &manifest.rir {
            RirSource::None => Vec::new(),
            RirSource::Synthetic => synthetic_rir_bank(rate, derive_seed(manifest.seed, 0, ROLE_RIR, 0))?,
            RirSource::Files { paths } => paths
                .iter()
                .map(|p| to_rate(read_wav(p)?, rate))
                .collect::<Result<_>>()
                .map_err(|e| e.in_stage("load RIRs"))?,
        };
        Ok(Self {
            manifest,
            hash,
            rate,
            speakers,
            augment,
        })
    }

    pub fn stamp(&self) -> Stamp {
        Stamp {
            manifest_hash: self.hash.clone(),
            seed: self.manifest.seed,
        }
    }

    /// Whether enrollment and attack captures go through the ultrasound channel.
    pub fn channel_on(&self) -> bool {
        self.manifest.optim.channel_sim != ChannelSim::Off
    }

    fn path(&self) -> CapturePath<'_> {
        CapturePath {
            chan: &self.manifest.channel,
            channel_on: self.channel_on(),
        }
    }

    fn speaker(&self, id: SpeakerId) -> Result<&SpeakerAudio> {
        self.speakers
            .get(&id)
            .ok_or_else(|| Error::invalid(format!("unknown speaker {id}")))
    }

    pub fn optim_for(&self, victim: SpeakerId) -> OptimConfig {
        OptimConfig {
            seed: derive_seed(self.manifest.seed, victim, ROLE_FORGE, 0),
            ..self.manifest.optim.clone()
        }
    }

    /// Runs trigger generation against `victim` using the adversary's recordings.
    pub fn forge(&self, victim: SpeakerId, scorer: &ScorerHandle) -> Result<ForgeOutcome, ForgeAborted> {
        self.forge_with(victim, &self.optim_for(victim), scorer)
    }

    pub fn forge_with(
        &self,
        victim: SpeakerId,
        optim: &OptimConfig,
        scorer: &ScorerHandle,
    ) -> Result<ForgeOutcome, ForgeAborted> {
        let audio = self.speaker(victim).map_err(|e| ForgeAborted {
            params: None,
            trace: Vec::new(),
            source: e,
        })?;
        optimize(
            ForgeSpec {
                victims: &audio.attack,
                geometry: self.manifest.geometry,
                augment: &self.augment,
                weights: self.manifest.weights,
                optim,
                channel: &self.manifest.channel,
            },
            scorer,
        )
    }

    /// Enrollment samples of `victim` each recorded while the trigger plays
    /// at a random distance and offset.
    pub fn poisoned_samples(&self, victim: SpeakerId, params: &TriggerParams) -> Result<Vec<AudioClip>> {
        let path = self.path();
        let captured = path.capture(&synthesize_trigger(params, self.rate)?)?;
        let space = &self.manifest.augment;
        self.speaker(victim)?
            .enroll
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.manifest.seed, victim, ROLE_POISON, i as u64));
                let slack = x.len().saturating_sub(captured.len()) as f64 / self.rate as f64;
                let (lo, hi) = space.shift_range_s.unwrap_or((0.0, slack));
                let shift = if hi > lo { rng.gen_range(lo..hi) } else { lo };
                let (dlo, dhi) = space.dist_range_m;
                let dist = if dhi > dlo { rng.gen_range(dlo..dhi) } else { dlo };
                let placed = shift_place(&captured.scaled(path.gain(dist)), shift, x.len())?;
                Ok(mix(x, &placed, 1.0)?.clip)
            })
            .collect()
    }

    /// Enrolls every speaker; victims with a trigger get poisoned enrollments.
    pub fn enroll_attack(
        &self,
        triggers: &BTreeMap<SpeakerId, TriggerParams>,
        scorer: &ScorerHandle,
    ) -> Result<BTreeMap<SpeakerId, EnrolledPrint>> {
        self.speakers
            .iter()
            .map(|(id, audio)| {
                let (samples, poisoned) = match triggers.get(id) {
                    Some(p) => (self.poisoned_samples(*id, p)?, true),
                    None => (audio.enroll.clone(), false),
                };
                let voiceprint = scorer
                    .enroll(&samples)
                    .map_err(|e| e.in_stage(&format!("enroll speaker {id}")))?;
                Ok((*id, EnrolledPrint { voiceprint, poisoned }))
            })
            .collect()
    }

    /// EER threshold from clean enrollments scored against held-out probes.
    pub fn calibrate(&self, scorer: &ScorerHandle) -> Result<Calibration> {
        let enrolled = self.enroll_attack(&BTreeMap::new(), scorer)?;
        let enrolled: BTreeMap<_, _> = enrolled.into_iter().map(|(id, e)| (id, e.voiceprint)).collect();
        let probes = self
            .speakers
            .iter()
            .filter(|(_, a)| !a.test.is_empty())
            .map(|(id, a)| {
                let prints = a.test.par_iter().map(|x| scorer.embed(x)).collect::<Result<Vec<_>>>()?;
                Ok((*id, prints))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        let (genuine, impostor) = trial_scores(&enrolled, &probes)?;
        calibrate_threshold(&genuine, &impostor)
    }

    /// Trigger-only authentication attempts against `victim`.
    pub fn adversary_probes(&self, victim: SpeakerId, params: &TriggerParams) -> Result<Vec<AudioClip>> {
        trigger_probes(
            params,
            &self.path(),
            &self.manifest.augment,
            self.rate,
            self.manifest.trigger_probes,
            derive_seed(self.manifest.seed, victim, ROLE_PROBE, 0),
        )
    }

    /// Evaluation inputs: the given enrollments, victims' held-out probes as
    /// genuine attempts and trigger probes as adversary attempts.
    pub fn eval_config(
        &self,
        enrolled: &BTreeMap<SpeakerId, EnrolledPrint>,
        triggers: &BTreeMap<SpeakerId, TriggerParams>,
        threshold: Option<Threshold>,
    ) -> Result<EvalConfig> {
        let mut genuine = BTreeMap::new();
        let mut adversary = BTreeMap::new();
        for (id, params) in triggers {
            genuine.insert(*id, self.speaker(*id)?.test.clone());
            adversary.insert(*id, self.adversary_probes(*id, params)?);
        }
        Ok(EvalConfig {
            tasks: self.manifest.tasks.clone(),
            threshold,
            enrolled: enrolled.iter().map(|(id, e)| (*id, e.voiceprint.clone())).collect(),
            genuine,
            adversary,
            defenses: self.manifest.defenses.clone(),
        })
    }

    /// Fixed threshold from the manifest, or the EER calibration.
    pub fn threshold(&self, scorer: &ScorerHandle) -> Result<Threshold> {
        match self.manifest.threshold {
            Some(v) => Ok(Threshold::fixed(v)),
            None => {
                let c = self.calibrate(scorer).map_err(|e| e.in_stage("calibrate"))?;
                Ok(Threshold {
                    value: c.theta,
                    source: "calibrated".into(),
                    eer: Some(c.eer),
                })
            }
        }
    }
}

fn load_speakers(m: &ExperimentManifest, rate: u32) -> Result<BTreeMap<SpeakerId, SpeakerAudio>> {
    match &m.data {
        DataSource::Synthetic {
            attack_per_speaker,
            enroll_per_speaker,
            test_per_speaker,
            duration_s,
            ..
        } => {
            let spec = UtteranceSpec::with_duration(*duration_s);
            m.speaker_ids()
                .into_par_iter()
                .map(|id| {
                    let profile = SpeakerProfile::generate(id);
                    let clips = |role: u64, n: usize| -> Result<Vec<AudioClip>> {
                        (0..n)
                            .map(|i| {
                                let x = profile.utterance(&spec, derive_seed(m.seed, id, role, i as u64))?;
                                debug_assert_eq!(x.sample_rate(), CORPUS_RATE);
                                to_rate(x, rate)
                            })
                            .collect()
                    };
                    Ok((
                        id,
                        SpeakerAudio {
                            attack: clips(ROLE_ATTACK, *attack_per_speaker)?,
                            enroll: clips(ROLE_ENROLL, *enroll_per_speaker)?,
                            test: clips(ROLE_TEST, *test_per_speaker)?,
                        },
                    ))
                })
                .collect()
        }
        DataSource::Files { speakers } => speakers
            .iter()
            .map(|s| {
                let load = |paths: &[std::path::PathBuf]| -> Result<Vec<AudioClip>> {
                    paths.iter().map(|p| to_rate(read_wav(p)?, rate)).collect()
                };
                Ok((
                    s.id,
                    SpeakerAudio {
                        attack: load(&s.attack)?,
                        enroll: load(&s.enroll)?,
                        test: load(&s.test)?,
                    },
                ))
            })
            .collect(),
    }
}
