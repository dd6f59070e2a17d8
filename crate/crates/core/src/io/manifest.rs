use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::ChannelConfig;
use crate::error::{Error, Result};
use crate::eval::{DefenseSpec, SpeakerId, Task};
use crate::forge::{AugmentSpace, LossWeights, OptimConfig, TriggerGeometry};

/// Where speaker audio comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Generated on the fly by the bundled corpus generator.
    Synthetic {
        speakers: usize,
        #[serde(default = "default_first_id")]
        first_id: SpeakerId,
        /// Samples the adversary records of each victim.
        attack_per_speaker: usize,
        enroll_per_speaker: usize,
        test_per_speaker: usize,
        duration_s: f64,
    },
    Files { speakers: Vec<SpeakerFiles> },
}

fn default_first_id() -> SpeakerId {
    1
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            speakers: 4,
            first_id: default_first_id(),
            attack_per_speaker: 3,
            enroll_per_speaker: 3,
            test_per_speaker: 20,
            duration_s: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerFiles {
    pub id: SpeakerId,
    /// Adversary recordings of this speaker; only needed for victims.
    #[serde(default)]
    pub attack: Vec<PathBuf>,
    pub enroll: Vec<PathBuf>,
    #[serde(default)]
    pub test: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum RirSource {
    None,
    /// Exponentially decaying noise rooms at three reverberation times.
    Synthetic,
    Files { paths: Vec<PathBuf> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentManifest {
    pub seed: u64,
    pub data: DataSource,
    /// Speakers to attack; empty means the first speaker.
    pub victims: Vec<SpeakerId>,
    pub geometry: TriggerGeometry,
    pub augment: AugmentSpace,
    pub rir: RirSource,
    pub weights: LossWeights,
    pub optim: OptimConfig,
    pub channel: ChannelConfig,
    /// `builtin` or `cmd:<argv>`.
    pub scorer: String,
    pub defenses: Vec<DefenseSpec>,
    pub tasks: Vec<Task>,
    /// Adversary authentication attempts per victim.
    pub trigger_probes: usize,
    /// Fixed decision threshold; calibrated at the EER when absent.
    pub threshold: Option<f64>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentManifest {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataSource::default(),
            victims: Vec::new(),
            geometry: TriggerGeometry::default(),
            augment: AugmentSpace::default(),
            rir: RirSource::Synthetic,
            weights: LossWeights::default(),
            optim: OptimConfig::default(),
            channel: ChannelConfig::default(),
            scorer: "builtin".into(),
            defenses: Vec::new(),
            tasks: Task::ALL.to_vec(),
            trigger_probes: 20,
            threshold: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentManifest {
    /// Reads and validates a manifest. Relative paths are resolved against
    /// the manifest's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: ExperimentManifest =
            serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            m.rebase(base);
        }
        m.validate()?;
        Ok(m)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DataSource::Files { speakers } = &mut self.data {
            for s in speakers {
                s.attack.iter_mut().chain(&mut s.enroll).chain(&mut s.test).for_each(fix);
            }
        }
        if let RirSource::Files { paths } = &mut self.rir {
            paths.iter_mut().for_each(fix);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Manifest(msg));
        self.weights.validate()?;
        self.augment.validate()?;
        self.optim.validate()?;
        self.channel.validate()?;
        for d in &self.defenses {
            d.validate()?;
        }
        if self.tasks.is_empty() {
            return bad("no tasks".into());
        }
        let g = self.geometry;
        if g.segments == 0 || g.freqs_per_segment == 0 || !(g.segment_len_s > 0.0) {
            return bad("trigger geometry must be non-empty".into());
        }
        let ids = self.speaker_ids();
        if ids.is_empty() {
            return bad("no speakers".into());
        }
        let unique: BTreeSet<_> = ids.iter().collect();
        if unique.len() != ids.len() {
            return bad("duplicate speaker ids".into());
        }
        for v in &self.victims {
            if !unique.contains(v) {
                return bad(format!("victim {v} is not a listed speaker"));
            }
        }
        match &self.data {
            DataSource::Synthetic {
                attack_per_speaker,
                enroll_per_speaker,
                duration_s,
                ..
            } => {
                if *attack_per_speaker == 0 || *enroll_per_speaker == 0 {
                    return bad("need at least one attack and one enrollment sample per speaker".into());
                }
                if !(*duration_s > 0.0) {
                    return bad("utterance duration must be positive".into());
                }
            }
            DataSource::Files { speakers } => {
                for s in speakers {
                    if s.enroll.is_empty() {
                        return bad(format!("speaker {} has no enrollment samples", s.id));
                    }
                    if self.victim_ids().contains(&s.id) && s.attack.is_empty() {
                        return bad(format!("victim {} has no attack samples (G >= 1)", s.id));
                    }
                    for p in s.attack.iter().chain(&s.enroll).chain(&s.test) {
                        if !p.is_file() {
                            return bad(format!("missing file {}", p.display()));
                        }
                    }
                }
            }
        }
        if let RirSource::Files { paths } = &self.rir {
            if let Some(p) = paths.iter().find(|p| !p.is_file()) {
                return bad(format!("missing RIR file {}", p.display()));
            }
        }
        Ok(())
    }

    pub fn speaker_ids(&self) -> Vec<SpeakerId> {
        match &self.data {
            DataSource::Synthetic { speakers, first_id, .. } => (0..*speakers as u64).map(|i| first_id + i).collect(),
            DataSource::Files { speakers } => speakers.iter().map(|s| s.id).collect(),
        }
    }

    pub fn victim_ids(&self) -> Vec<SpeakerId> {
        if self.victims.is_empty() {
            self.speaker_ids().into_iter().take(1).collect()
        } else {
            self.victims.clone()
        }
    }

    /// SHA-256 over the canonical JSON form, hex encoded. The output
    /// directory is left out so that relocated runs share a stamp.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(&Self {
            out_dir: PathBuf::new(),
            ..self.clone()
        })
        .expect("manifest serialises");
        hex::encode(Sha256::digest(canonical))
    }
}
