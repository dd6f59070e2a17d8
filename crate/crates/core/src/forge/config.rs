use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::eval::DefenseSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Weight on similarity to the victim voiceprint.
    pub alpha1: f64,
    /// Weight on similarity to the trigger's own voiceprint.
    pub alpha2: f64,
    /// Weight on the L1 norm of the amplitude matrix.
    pub alpha3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 0.05,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.alpha1, self.alpha2, self.alpha3]
            .iter()
            .all(|a| a.is_finite() && *a >= 0.0);
        if !ok || self.alpha1 + self.alpha2 <= 0.0 {
            return Err(Error::invalid(
                "loss weights must be non-negative with alpha1 + alpha2 > 0",
            ));
        }
        Ok(())
    }
}

fn check_range(name: &str, r: (f64, f64)) -> Result<()> {
    if !(r.0.is_finite() && r.1.is_finite() && r.0 <= r.1) {
        return Err(Error::invalid(format!("{name} range must satisfy lo <= hi")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSpace {
    /// Trigger start offset in seconds; `None` spans `[0, len(x_v) - len(p)]`.
    pub shift_range_s: Option<(f64, f64)>,
    pub beta_range: (f64, f64),
    pub dist_range_m: (f64, f64),
    /// Room impulse responses for the victim speech; empty disables RIR.
    #[serde(skip)]
    pub rir_bank: Vec<AudioClip>,
    pub rir_prob: f64,
    /// Standard deviation of the ambient noise under trigger-only captures.
    pub ambient_noise: f64,
}

impl Default for AugmentSpace {
    fn default() -> Self {
        Self {
            shift_range_s: None,
            beta_range: (0.5, 2.0),
            dist_range_m: (0.3, 2.0),
            rir_bank: Vec::new(),
            rir_prob: 0.5,
            ambient_noise: 1e-3,
        }
    }
}

impl AugmentSpace {
    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.shift_range_s {
            check_range("shift", r)?;
            if r.0 < 0.0 {
                return Err(Error::invalid("shift range must be non-negative"));
            }
        }
        check_range("beta", self.beta_range)?;
        check_range("distance", self.dist_range_m)?;
        if self.beta_range.0 <= 0.0 || self.dist_range_m.0 < 0.0 {
            return Err(Error::invalid("beta must be positive and distance non-negative"));
        }
        if !(0.0..=1.0).contains(&self.rir_prob) {
            return Err(Error::invalid("rir_prob must lie in [0, 1]"));
        }
        if !(self.ambient_noise >= 0.0) {
            return Err(Error::invalid("ambient noise must be non-negative"));
        }
        Ok(())
    }
}

/// When the ultrasound channel is simulated inside the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "epochs")]
pub enum ChannelSim {
    Off,
    On,
    /// Digital-only warm-up, channel on for the last `k` epochs or as soon
    /// as the warm-up reaches the objective.
    Final(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub nes_samples: usize,
    pub nes_sigma: f64,
    pub lr_eta: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_epoch: usize,
    /// Fitness target J; the loop stops once reached.
    pub obj_score: f64,
    pub draws_per_epoch: usize,
    /// Reuse the first epoch's augmentation draws in every epoch.
    pub fixed_draws: bool,
    pub seed: u64,
    /// Lower bound of the initial frequency draw.
    pub min_freq_hz: f64,
    pub channel_sim: ChannelSim,
    /// Defense inserted before embedding (adaptive attacker).
    pub adaptive_defense: Option<DefenseSpec>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            nes_samples: 15,
            nes_sigma: 0.08,
            lr_eta: 0.02,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_epoch: 60,
            obj_score: 1.4,
            draws_per_epoch: 8,
            fixed_draws: false,
            seed: 0,
            min_freq_hz: 50.0,
            channel_sim: ChannelSim::Final(10),
            adaptive_defense: None,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nes_samples == 0 {
            return Err(Error::invalid("nes_samples must be at least 1"));
        }
        if !(self.nes_sigma > 0.0) || !(self.lr_eta > 0.0) {
            return Err(Error::invalid("nes_sigma and lr_eta must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || !(self.adam_eps > 0.0)
        {
            return Err(Error::invalid("Adam betas must lie in [0, 1) and eps > 0"));
        }
        if self.draws_per_epoch == 0 {
            return Err(Error::invalid("draws_per_epoch must be at least 1"));
        }
        if !(self.min_freq_hz >= 0.0 && self.min_freq_hz < crate::dsp::MAX_TRIGGER_FREQ_HZ) {
            return Err(Error::invalid("min_freq_hz must lie in [0, 4000)"));
        }
        if let Some(d) = &self.adaptive_defense {
            d.validate()?;
        }
        Ok(())
    }
}
