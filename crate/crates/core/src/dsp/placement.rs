//! Placing a trigger inside a recording window, mixing it with speech, and
//! reverberating speech with a room impulse response.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

use super::spectrum::fft_convolve;

/// Zero clip of `total_len` samples with `p` starting at `round(t_s · rate)`.
/// Whatever runs past the end is dropped.
pub fn shift_place(p: &AudioClip, t_s: f64, total_len: usize) -> Result<AudioClip> {
    if !(t_s >= 0.0 && t_s.is_finite()) {
        return Err(Error::invalid(format!("shift {t_s} s must be non-negative")));
    }
    let rate = p.sample_rate();
    let start = (t_s * rate as f64).round() as usize;
    let mut out = vec![0.0; total_len];
    if start < total_len {
        let n = (total_len - start).min(p.len());
        out[start..start + n].copy_from_slice(&p.samples()[..n]);
    }
    Ok(AudioClip::from_finite(out, rate))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixOutput {
    pub clip: AudioClip,
    /// `E(β·x) / E(p)`; `+∞` when the trigger is silent.
    pub power_ratio: f64,
    /// Shared gain applied to both terms to keep the peak within `[-1, 1]`
    /// (1.0 when no rescale was needed).
    pub rescale: f64,
}

/// `β·x + p`, rescaled as a whole if the peak exceeds 1.
pub fn mix(x: &AudioClip, p: &AudioClip, beta: f64) -> Result<MixOutput> {
    x.check_compatible(p)?;
    if !beta.is_finite() {
        return Err(Error::invalid("beta must be finite"));
    }
    let mut out: Vec<f64> = x
        .samples()
        .iter()
        .zip(p.samples())
        .map(|(a, b)| beta * a + b)
        .collect();
    let p_pow = p.power();
    let power_ratio = if p_pow == 0.0 {
        f64::INFINITY
    } else {
        beta * beta * x.power() / p_pow
    };
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rescale = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    if rescale != 1.0 {
        out.iter_mut().for_each(|v| *v *= rescale);
    }
    Ok(MixOutput {
        clip: AudioClip::from_finite(out, x.sample_rate()),
        power_ratio,
        rescale,
    })
}

/// Linear convolution truncated to `len(x)`; peak-normalised only if it exceeds 1.
pub fn rir_convolve(x: &AudioClip, rir: &AudioClip) -> Result<AudioClip> {
    if x.sample_rate() != rir.sample_rate() {
        return Err(Error::RateMismatch {
            left: x.sample_rate(),
            right: rir.sample_rate(),
        });
    }
    let mut y = fft_convolve(x.samples(), rir.samples());
    y.truncate(x.len());
    y.resize(x.len(), 0.0);
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        y.iter_mut().for_each(|v| *v /= peak);
    }
    AudioClip::new(y, x.sample_rate())
}

/// Reverberation times standing in for small, medium and large rooms.
pub const ROOM_RT60_S: [f64; 3] = [0.15, 0.4, 0.8];

/// Exponentially decaying white-noise impulse response with a unit direct
/// path, normalised to unit energy. Decays by 60 dB over `rt60_s`.
pub fn synthetic_rir(rt60_s: f64, rate: u32, seed: u64) -> Result<AudioClip> {
    if !(rt60_s > 0.0) {
        return Err(Error::invalid("RT60 must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = ((rt60_s * rate as f64).round() as usize).max(1);
    let decay = 3.0 * std::f64::consts::LN_10 / (rt60_s * rate as f64);
    let mut h: Vec<f64> = (0..len)
        .map(|k| {
            let n: f64 = rng.sample(StandardNormal);
            0.3 * n * (-decay * k as f64).exp()
        })
        .collect();
    h[0] = 1.0;
    let energy: f64 = h.iter().map(|v| v * v).sum();
    let norm = energy.sqrt();
    h.iter_mut().for_each(|v| *v /= norm);
    AudioClip::new(h, rate)
}

/// One RIR per entry of [`ROOM_RT60_S`].
pub fn synthetic_rir_bank(rate: u32, seed: u64) -> Result<Vec<AudioClip>> {
    ROOM_RT60_S
        .iter()
        .enumerate()
        .map(|(i, rt)| synthetic_rir(*rt, rate, seed.wrapping_add(i as u64)))
        .collect()
}
