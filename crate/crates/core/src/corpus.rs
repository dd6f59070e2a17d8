//! Seeded synthetic-speaker corpus: each speaker is a glottal harmonic
//! series shaped by vowel formants scaled to that speaker's vocal tract,
//! with pitch drift, pauses, breath noise and a fixed noise floor.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

pub const CORPUS_RATE: u32 = 16_000;

/// (F1, F2, F3) in Hz for six reference vowels.
const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [660.0, 1720.0, 2410.0],
];
const BANDWIDTHS: [f64; 3] = [90.0, 110.0, 170.0];
const MAX_HARMONIC_HZ: f64 = 3800.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub id: u64,
    pub f0_hz: f64,
    /// Vocal-tract scale applied to every formant.
    pub formant_scale: f64,
    /// Spectral tilt in dB per octave above f0.
    pub tilt_db_per_oct: f64,
    /// Aspiration noise relative to voiced amplitude.
    pub breath: f64,
    /// Per-vowel, per-formant idiosyncratic offsets (multiplicative).
    pub vowel_offsets: Vec<[f64; 3]>,
    /// Relative preference for each vowel.
    pub vowel_weights: Vec<f64>,
}

impl SpeakerProfile {
    /// Deterministic profile for speaker `id`. Pitch and tract scale follow
    /// low-discrepancy sequences so consecutive ids stay distinguishable.
    pub fn generate(id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 ^ id.wrapping_mul(0x9e37_79b9));
        let golden = 0.618_033_988_75;
        let u1 = (0.31 + id as f64 * golden).fract();
        let u2 = (0.77 + id as f64 * (1.0 - golden) * 1.7).fract();
        let vowel_offsets = (0..VOWELS.len())
            .map(|_| {
                [
                    1.0 + rng.gen_range(-0.06..0.06),
                    1.0 + rng.gen_range(-0.06..0.06),
                    1.0 + rng.gen_range(-0.06..0.06),
                ]
            })
            .collect();
        let vowel_weights = (0..VOWELS.len()).map(|_| rng.gen_range(0.5..1.5)).collect();
        Self {
            id,
            f0_hz: 95.0 + 150.0 * u1,
            formant_scale: 0.82 + 0.4 * u2,
            tilt_db_per_oct: rng.gen_range(-9.0..-4.0),
            breath: rng.gen_range(0.01..0.06),
            vowel_offsets,
            vowel_weights,
        }
    }

    fn formants(&self, vowel: usize) -> [f64; 3] {
        let base = VOWELS[vowel];
        let off = self.vowel_offsets[vowel];
        [
            base[0] * self.formant_scale * off[0],
            base[1] * self.formant_scale * off[1],
            base[2] * self.formant_scale * off[2],
        ]
    }

    fn envelope(&self, f: f64, formants: &[f64; 3]) -> f64 {
        let res: f64 = formants
            .iter()
            .zip(BANDWIDTHS)
            .map(|(fc, bw)| {
                let x = (f - fc) / (0.5 * bw * self.formant_scale);
                1.0 / (1.0 + x * x).sqrt()
            })
            .sum();
        let octaves = (f / self.f0_hz).max(1.0).log2();
        res * 10f64.powf(self.tilt_db_per_oct * octaves / 20.0)
    }

    /// Synthesises one utterance; `seed` selects its content.
    pub fn utterance(&self, spec: &UtteranceSpec, seed: u64) -> Result<AudioClip> {
        spec.validate()?;
        let rate = CORPUS_RATE as f64;
        let n = (spec.duration_s * rate).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ self.id.wrapping_mul(0x2545_f491_4f6c_dd1d));
        let total_w: f64 = self.vowel_weights.iter().sum();
        let mut out = vec![0.0; n];
        let mut phase = vec![0.0f64; (MAX_HARMONIC_HZ / 60.0) as usize + 2];
        let vibrato_phase = rng.gen_range(0.0..2.0 * PI);
        let vibrato_rate = rng.gen_range(3.0..6.0);
        let mut pos = (rng.gen_range(0.0..0.15) * rate) as usize;
        while pos < n {
            let syl_len = (rng.gen_range(0.12..0.30) * rate) as usize;
            let mut pick = rng.gen_range(0.0..total_w);
            let mut vowel = 0;
            for (i, w) in self.vowel_weights.iter().enumerate() {
                if pick < *w {
                    vowel = i;
                    break;
                }
                pick -= w;
            }
            let formants = self.formants(vowel);
            let pitch_offset = 1.0 + rng.gen_range(-0.08..0.08);
            let loud = rng.gen_range(0.6..1.0);
            let f0_syl = self.f0_hz * pitch_offset;
            let harmonics = ((MAX_HARMONIC_HZ / f0_syl) as usize).min(phase.len() - 1);
            let amps: Vec<f64> = (1..=harmonics)
                .map(|h| self.envelope(h as f64 * f0_syl, &formants))
                .collect();
            let ramp = (0.02 * rate) as usize;
            let end = (pos + syl_len).min(n);
            for (k, o) in out[pos..end].iter_mut().enumerate() {
                let t = (pos + k) as f64 / rate;
                let f0 = f0_syl * (1.0 + 0.03 * (2.0 * PI * vibrato_rate * t + vibrato_phase).sin());
                let env = if k < ramp {
                    0.5 - 0.5 * (PI * k as f64 / ramp as f64).cos()
                } else if syl_len - k < ramp {
                    0.5 - 0.5 * (PI * (syl_len - k) as f64 / ramp as f64).cos()
                } else {
                    1.0
                };
                let mut v = 0.0;
                for (h, a) in amps.iter().enumerate() {
                    let ph = &mut phase[h];
                    *ph += 2.0 * PI * f0 * (h + 1) as f64 / rate;
                    v += a * ph.sin();
                }
                let breath: f64 = rng.sample(StandardNormal);
                *o = loud * env * (v + self.breath * 4.0 * breath);
            }
            pos = end;
            if rng.gen_bool(0.6) {
                pos += (rng.gen_range(0.02..0.15) * rate) as usize;
            }
        }
        let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let target = rng.gen_range(spec.peak_range.0..=spec.peak_range.1);
        let gain = if peak > 0.0 { target / peak } else { 0.0 };
        for v in out.iter_mut() {
            let floor: f64 = rng.sample(StandardNormal);
            *v = *v * gain + spec.noise_floor * floor;
        }
        AudioClip::new(out, CORPUS_RATE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UtteranceSpec {
    pub duration_s: f64,
    /// Peak amplitude is drawn uniformly from this range.
    pub peak_range: (f64, f64),
    /// Standard deviation of the additive white noise floor.
    pub noise_floor: f64,
}

impl Default for UtteranceSpec {
    fn default() -> Self {
        Self {
            duration_s: 5.0,
            peak_range: (0.5, 0.95),
            noise_floor: 1e-3,
        }
    }
}

impl UtteranceSpec {
    pub fn with_duration(duration_s: f64) -> Self {
        Self {
            duration_s,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::invalid("utterance duration must be positive"));
        }
        let (lo, hi) = self.peak_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid("peak range must satisfy 0 < lo <= hi <= 1"));
        }
        if !(self.noise_floor >= 0.0) {
            return Err(Error::invalid("noise floor must be non-negative"));
        }
        Ok(())
    }
}

/// Ambient noise bed of `len` samples at the corpus noise floor.
pub fn noise_bed(len: usize, level: f64, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AudioClip::from_finite(
        (0..len).map(|_| level * rng.sample::<f64, _>(StandardNormal)).collect(),
        CORPUS_RATE,
    )
}

/// Utterances grouped by speaker.
#[derive(Debug, Clone)]
pub struct SpeakerClips {
    pub profile: SpeakerProfile,
    pub clips: Vec<AudioClip>,
}

/// Generates `per_speaker` utterances for speakers `0..num_speakers`.
/// Utterance content seeds derive from `seed`, so distinct seeds give
/// disjoint content for the same speakers.
pub fn generate_corpus(
    num_speakers: u64,
    per_speaker: usize,
    spec: &UtteranceSpec,
    seed: u64,
) -> Result<Vec<SpeakerClips>> {
    (0..num_speakers)
        .map(|id| {
            let profile = SpeakerProfile::generate(id);
            let clips = (0..per_speaker)
                .map(|i| profile.utterance(spec, seed.wrapping_mul(1_000_003).wrapping_add(i as u64)))
                .collect::<Result<Vec<_>>>()?;
            Ok(SpeakerClips { profile, clips })
        })
        .collect()
}
