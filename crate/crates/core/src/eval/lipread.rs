//! Detection features in the style of LipRead. The correlation statistic is
//! an envelope cross-correlation proxy, not the original detector's exact
//! definition.

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dsp::fir::{self, DEFAULT_ATTEN_DB};
use crate::dsp::spectrum::{analytic_signal, band_power, fft_convolve};
use crate::error::{Error, Result};

pub const SUB_BAND_HZ: f64 = 50.0;
/// Largest lag searched by the envelope correlation.
pub const MAX_LAG_S: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipReadFeatures {
    pub sub50_power_ratio: f64,
    /// Envelope correlation proxy.
    pub correlation_coeff: f64,
    pub amplitude_skew: f64,
}

pub fn lipread_features(x: &AudioClip) -> Result<LipReadFeatures> {
    let rate = x.sample_rate();
    if x.len() < rate as usize {
        return Err(Error::TooShort {
            needed: rate as usize,
            got: x.len(),
        });
    }
    let s = x.samples();
    let total = x.power();
    if total == 0.0 {
        return Ok(LipReadFeatures {
            sub50_power_ratio: 0.0,
            correlation_coeff: 0.0,
            amplitude_skew: 0.0,
        });
    }
    let sub = band_power(s, rate, 0.0, SUB_BAND_HZ);
    Ok(LipReadFeatures {
        sub50_power_ratio: (sub / total).min(1.0),
        correlation_coeff: envelope_correlation(s, rate as f64),
        amplitude_skew: skewness(s),
    })
}

fn skewness(s: &[f64]) -> f64 {
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let m2 = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if m2 <= 0.0 {
        return 0.0;
    }
    let m3 = s.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

fn envelope(x: &[f64]) -> Vec<f64> {
    analytic_signal(x).iter().map(|z| z.norm()).collect()
}

fn envelope_correlation(s: &[f64], rate: f64) -> f64 {
    let taps = fir::lowpass(SUB_BAND_HZ, 2.0 * SUB_BAND_HZ, rate, DEFAULT_ATTEN_DB);
    let low = fir::filter_zero_phase(s, &taps);
    let centre = |v: Vec<f64>| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.into_iter().map(|e| e - m).collect::<Vec<_>>()
    };
    let a = centre(envelope(&low));
    let b = centre(envelope(s));
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let rev: Vec<f64> = b.iter().rev().copied().collect();
    let xc = fft_convolve(&a, &rev);
    let zero = b.len() - 1;
    let max_lag = (MAX_LAG_S * rate) as usize;
    let lo = zero.saturating_sub(max_lag);
    let hi = (zero + max_lag).min(xc.len() - 1);
    xc[lo..=hi].iter().cloned().fold(f64::MIN, f64::max) / (na * nb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sine_is_symmetric() {
        let x = AudioClip::new(
            (0..16000).map(|i| (2.0 * PI * 1000.0 * i as f64 / 16000.0).sin()).collect(),
            16000,
        )
        .unwrap();
        let f = lipread_features(&x).unwrap();
        assert!(f.amplitude_skew.abs() < 0.01);
        assert!(f.sub50_power_ratio < 1e-6);
    }

    #[test]
    fn dc_dominated_signal() {
        let x = AudioClip::new(
            (0..16000).map(|i| 0.8 + 0.1 * (2.0 * PI * 700.0 * i as f64 / 16000.0).sin()).collect(),
            16000,
        )
        .unwrap();
        assert!(lipread_features(&x).unwrap().sub50_power_ratio >= 0.9);
    }

    #[test]
    fn degenerate_and_short() {
        let z = AudioClip::silence(16000, 16000).unwrap();
        let f = lipread_features(&z).unwrap();
        assert_eq!((f.sub50_power_ratio, f.correlation_coeff, f.amplitude_skew), (0.0, 0.0, 0.0));
        assert!(lipread_features(&AudioClip::silence(100, 16000).unwrap()).is_err());
    }

    #[test]
    fn skew_of_one_sided_signal_is_positive() {
        let x = AudioClip::new((0..16000).map(|i| if i % 10 == 0 { 1.0 } else { 0.0 }).collect(), 16000).unwrap();
        assert!(lipread_features(&x).unwrap().amplitude_skew > 1.0);
    }
}
