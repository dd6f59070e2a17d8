//! Ultrasound channel: single-sideband modulation onto a carrier, distance
//! attenuation, and the microphone's square-law demodulation.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

use super::fir::DEFAULT_ATTEN_DB;
use super::resample::Resampler;
use super::spectrum::{fft_real, plan_inverse};

/// Baseband bandwidth carried on the ultrasound sideband.
pub const BASEBAND_LIMIT_HZ: f64 = 4000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    /// Carrier frequency in Hz; the attenuation law uses `2π·carrier_hz`.
    pub carrier_hz: f64,
    /// Sample rate of the modulation domain.
    pub hi_rate_hz: u32,
    /// Medium attenuation coefficient `a0` (s^n/m).
    pub a0: f64,
    /// Power-law exponent `n` of the attenuation, in `[1, 2]`.
    pub atten_exp: f64,
    pub carrier_level: f64,
    /// Second-order microphone coefficient.
    pub nonlin_gain: f64,
    pub lpf_cutoff_hz: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 25_000.0,
            hi_rate_hz: 96_000,
            a0: 2.0e-11,
            atten_exp: 2.0,
            carrier_level: 1.0,
            nonlin_gain: 1.0,
            lpf_cutoff_hz: 8_000.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz > 0.0) {
            return Err(Error::invalid("carrier frequency must be positive"));
        }
        if (self.hi_rate_hz as f64) <= 2.0 * (self.carrier_hz + BASEBAND_LIMIT_HZ) {
            return Err(Error::Nyquist {
                freq_hz: self.carrier_hz + BASEBAND_LIMIT_HZ,
                rate: self.hi_rate_hz,
            });
        }
        if !(1.0..=2.0).contains(&self.atten_exp) {
            return Err(Error::invalid(format!(
                "attenuation exponent {} outside [1, 2]",
                self.atten_exp
            )));
        }
        if !(self.a0 >= 0.0 && self.a0.is_finite()) {
            return Err(Error::invalid("a0 must be finite and non-negative"));
        }
        if !(self.carrier_level >= 0.0) {
            return Err(Error::invalid("carrier level must be non-negative"));
        }
        if !(self.nonlin_gain > 0.0) {
            return Err(Error::invalid("nonlinearity gain must be positive"));
        }
        if !(self.lpf_cutoff_hz > 0.0) {
            return Err(Error::invalid("low-pass cutoff must be positive"));
        }
        Ok(())
    }

    /// Amplitude factor `exp(-a0 · ω_c^n · d)` with `ω_c` in rad/s.
    pub fn attenuation_factor(&self, dist_m: f64) -> f64 {
        let omega = 2.0 * PI * self.carrier_hz;
        (-self.a0 * omega.powf(self.atten_exp) * dist_m).exp()
    }
}

/// Scales every sample by the distance attenuation factor.
pub fn attenuate(p: &AudioClip, dist_m: f64, chan: &ChannelConfig) -> Result<AudioClip> {
    if !(dist_m >= 0.0) {
        return Err(Error::invalid(format!("distance {dist_m} m must be non-negative")));
    }
    Ok(p.scaled(chan.attenuation_factor(dist_m)))
}

/// Upper-sideband AM with transmitted carrier:
/// `c·cos(ω t) + m(t)·cos(ω t) − m̂(t)·sin(ω t)`.
///
/// The baseband is limited to 4 kHz and brought to `hi_rate_hz` in the
/// frequency domain, which also yields its exact Hilbert quadrature.
pub fn ssb_modulate(baseband: &AudioClip, chan: &ChannelConfig) -> Result<AudioClip> {
    chan.validate()?;
    let z = upsampled_analytic(baseband, chan.hi_rate_hz)?;
    let w = 2.0 * PI * chan.carrier_hz / chan.hi_rate_hz as f64;
    let mut out = Vec::with_capacity(z.len());
    for_each_phasor(z.len(), w, |k, ph| {
        let v = z[k] * ph;
        out.push(chan.carrier_level * ph.re + v.re);
    });
    AudioClip::new(out, chan.hi_rate_hz)
}

/// Double-sideband AM with transmitted carrier, `(c + m(t))·cos(ω t)`.
/// Only used to contrast intermodulation against the SSB path.
pub fn dsb_modulate(baseband: &AudioClip, chan: &ChannelConfig) -> Result<AudioClip> {
    chan.validate()?;
    let z = upsampled_analytic(baseband, chan.hi_rate_hz)?;
    let w = 2.0 * PI * chan.carrier_hz / chan.hi_rate_hz as f64;
    let mut out = Vec::with_capacity(z.len());
    for_each_phasor(z.len(), w, |k, ph| {
        out.push((chan.carrier_level + z[k].re) * ph.re);
    });
    AudioClip::new(out, chan.hi_rate_hz)
}

/// Calls `f(k, e^{jωk})` for `k in 0..n`, using a rotating phasor that is
/// re-anchored periodically to bound rounding drift.
fn for_each_phasor(n: usize, w: f64, mut f: impl FnMut(usize, Complex64)) {
    const ANCHOR: usize = 1024;
    let step = Complex64::from_polar(1.0, w);
    let mut ph = Complex64::new(1.0, 0.0);
    for k in 0..n {
        if k % ANCHOR == 0 {
            ph = Complex64::from_polar(1.0, (w * k as f64) % (2.0 * PI));
        }
        f(k, ph);
        ph *= step;
    }
}

/// Band-limited analytic signal of `baseband`, evaluated at `out_rate`.
fn upsampled_analytic(baseband: &AudioClip, out_rate: u32) -> Result<Vec<Complex64>> {
    let in_rate = baseband.sample_rate() as u64;
    if (out_rate as u64) < in_rate {
        return Err(Error::invalid(format!(
            "modulation rate {out_rate} Hz below baseband rate {in_rate} Hz"
        )));
    }
    let n = baseband.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    // Pad so the period maps onto an integral number of high-rate samples.
    let g = gcd(in_rate, out_rate as u64);
    let step = (in_rate / g) as usize;
    let n_pad = n.div_ceil(step) * step;
    let n_hi = n_pad * out_rate as usize / in_rate as usize;
    let mut x = baseband.samples().to_vec();
    x.resize(n_pad, 0.0);
    let spec = fft_real(&x);
    let df = in_rate as f64 / n_pad as f64;
    let mut hi = vec![Complex64::new(0.0, 0.0); n_hi];
    hi[0] = spec[0];
    for k in 1..n_pad.div_ceil(2) {
        if k as f64 * df > BASEBAND_LIMIT_HZ {
            break;
        }
        hi[k] = spec[k] * 2.0;
    }
    plan_inverse(n_hi).process(&mut hi);
    let scale = 1.0 / n_pad as f64;
    let out_len = ((n as u64 * out_rate as u64 + in_rate / 2) / in_rate) as usize;
    Ok(hi.into_iter().take(out_len).map(|c| c * scale).collect())
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Microphone capture of an ultrasound field: `s + k2·s²`, low-passed at
/// `lpf_cutoff_hz`, resampled to `out_rate`, with DC removed.
pub fn nonlinear_demodulate(
    ultra: &AudioClip,
    chan: &ChannelConfig,
    out_rate: u32,
) -> Result<AudioClip> {
    chan.validate()?;
    if ultra.sample_rate() != chan.hi_rate_hz {
        return Err(Error::RateMismatch {
            left: ultra.sample_rate(),
            right: chan.hi_rate_hz,
        });
    }
    if out_rate > chan.hi_rate_hz {
        return Err(Error::invalid(format!(
            "output rate {out_rate} Hz exceeds modulation rate {} Hz",
            chan.hi_rate_hz
        )));
    }
    let k2 = chan.nonlin_gain;
    let captured: Vec<f64> = ultra.samples().iter().map(|s| s + k2 * s * s).collect();
    let pass = chan.lpf_cutoff_hz.min(0.45 * out_rate as f64);
    let stop = (out_rate as f64 - pass).min(1.5 * pass);
    let rs = Resampler::with_band(chan.hi_rate_hz, out_rate, pass, stop, DEFAULT_ATTEN_DB)?;
    let mut y = rs.process(&captured);
    if !y.is_empty() {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        y.iter_mut().for_each(|v| *v -= mean);
    }
    AudioClip::new(y, out_rate)
}

/// Modulate, propagate over `dist_m`, and demodulate back to the baseband rate.
pub fn transmit(baseband: &AudioClip, chan: &ChannelConfig, dist_m: f64) -> Result<AudioClip> {
    let ultra = ssb_modulate(baseband, chan)?;
    let ultra = attenuate(&ultra, dist_m, chan)?;
    nonlinear_demodulate(&ultra, chan, baseband.sample_rate())
}
