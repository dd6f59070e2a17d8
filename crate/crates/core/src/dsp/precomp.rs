//! Inverse filtering of the trigger against a measured microphone response.

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

use super::channel::BASEBAND_LIMIT_HZ;
use super::fir::filter_zero_phase;
use super::spectrum::{ifft, plan_forward};
use rustfft::num_complex::Complex64;

/// Taps of the pre-compensation FIR.
pub const PRECOMP_TAPS: usize = 1023;

/// Regularisation floor on the microphone gain, relative to its maximum.
pub const PRECOMP_FLOOR: f64 = 0.05;

/// Piecewise-linear magnitude response sampled at increasing frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseTable {
    points: Vec<(f64, f64)>,
}

impl ResponseTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("response table is empty"));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid("response frequencies must be strictly increasing"));
            }
        }
        if points.iter().any(|(f, g)| !f.is_finite() || !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::invalid("response gains must be finite and non-negative"));
        }
        Ok(Self { points })
    }

    pub fn flat(gain: f64) -> Result<Self> {
        Self::new(vec![(0.0, gain), (BASEBAND_LIMIT_HZ, gain)])
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn covers(&self, lo_hz: f64, hi_hz: f64) -> bool {
        self.points[0].0 <= lo_hz && self.points[self.points.len() - 1].0 >= hi_hz
    }

    /// Linear interpolation, held constant beyond the table's ends.
    pub fn gain_at(&self, f: f64) -> f64 {
        let pts = &self.points;
        if f <= pts[0].0 {
            return pts[0].1;
        }
        let last = pts[pts.len() - 1];
        if f >= last.0 {
            return last.1;
        }
        let i = pts.partition_point(|(x, _)| *x <= f);
        let (f0, g0) = pts[i - 1];
        let (f1, g1) = pts[i];
        g0 + (g1 - g0) * (f - f0) / (f1 - f0)
    }

    pub fn max_gain(&self) -> f64 {
        self.points.iter().map(|p| p.1).fold(0.0, f64::max)
    }
}

/// Linear-phase FIR approximating `path(f) / max(mic(f), ε)` by frequency
/// sampling with a Hann window, `ε = 0.05·max(mic)`.
pub fn precompensation_filter(
    mic: &ResponseTable,
    path: &ResponseTable,
    rate: u32,
) -> Result<Vec<f64>> {
    for (name, t) in [("microphone", mic), ("path", path)] {
        if !t.covers(0.0, BASEBAND_LIMIT_HZ) {
            return Err(Error::invalid(format!(
                "{name} response does not cover 0..{BASEBAND_LIMIT_HZ} Hz"
            )));
        }
    }
    let eps = PRECOMP_FLOOR * mic.max_gain();
    if !(eps > 0.0) {
        return Err(Error::invalid("microphone response is identically zero"));
    }
    let n = PRECOMP_TAPS;
    let spec: Vec<Complex64> = (0..n)
        .map(|k| {
            let kk = if k <= n / 2 { k } else { n - k };
            let f = kk as f64 * rate as f64 / n as f64;
            Complex64::new(path.gain_at(f) / mic.gain_at(f).max(eps), 0.0)
        })
        .collect();
    // Zero-phase impulse, rotated so the peak sits at the centre tap.
    let h = ifft(spec);
    let half = n / 2;
    let taps = (0..n)
        .map(|i| {
            let src = (i + n - half) % n;
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i as f64 + 1.0) / (n as f64 + 1.0)).cos();
            h[src].re * w
        })
        .collect();
    Ok(taps)
}

/// Magnitude response of `taps` at `n_bins` evenly spaced bins over `[0, rate/2]`.
pub fn filter_magnitude(taps: &[f64], n_fft: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = taps.iter().map(|&t| Complex64::new(t, 0.0)).collect();
    buf.resize(n_fft.max(taps.len()), Complex64::new(0.0, 0.0));
    plan_forward(buf.len()).process(&mut buf);
    buf.iter().take(buf.len() / 2 + 1).map(|c| c.norm()).collect()
}

pub fn precompensate(
    baseband: &AudioClip,
    mic: &ResponseTable,
    path: &ResponseTable,
) -> Result<AudioClip> {
    let taps = precompensation_filter(mic, path, baseband.sample_rate())?;
    AudioClip::new(
        filter_zero_phase(baseband.samples(), &taps),
        baseband.sample_rate(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(f: f64, n: usize) -> AudioClip {
        AudioClip::new(
            (0..n).map(|i| 0.3 * (2.0 * PI * f * i as f64 / 16000.0).sin()).collect(),
            16000,
        )
        .unwrap()
    }

    #[test]
    fn table_validation_and_interp() {
        assert!(ResponseTable::new(vec![(0.0, 1.0), (0.0, 1.0)]).is_err());
        assert!(ResponseTable::new(vec![(0.0, -1.0)]).is_err());
        let t = ResponseTable::new(vec![(0.0, 0.0), (1000.0, 1.0), (4000.0, 4.0)]).unwrap();
        assert!((t.gain_at(500.0) - 0.5).abs() < 1e-12);
        assert!((t.gain_at(2500.0) - 2.5).abs() < 1e-12);
        assert_eq!(t.gain_at(9000.0), 4.0);
    }

    #[test]
    fn flat_tables_are_identity() {
        let x = tone(1234.0, 8000);
        let flat = ResponseTable::flat(1.0).unwrap();
        let y = precompensate(&x, &flat, &flat).unwrap();
        let err: f64 = x.samples().iter().zip(y.samples()).map(|(a, b)| (a - b).powi(2)).sum();
        let sig: f64 = x.samples().iter().map(|a| a * a).sum();
        assert!(10.0 * (err / sig).log10() <= -40.0);
    }

    #[test]
    fn half_gain_microphone_doubles_amplitude() {
        let x = tone(1000.0, 16000);
        let y = precompensate(
            &x,
            &ResponseTable::flat(0.5).unwrap(),
            &ResponseTable::flat(1.0).unwrap(),
        )
        .unwrap();
        let ratio = y.slice(2000, 14000).rms() / x.slice(2000, 14000).rms();
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn dead_band_is_bounded_by_floor() {
        let mic = ResponseTable::new(vec![
            (0.0, 1.0),
            (1500.0, 1.0),
            (1600.0, 0.0),
            (2000.0, 0.0),
            (2100.0, 1.0),
            (4000.0, 1.0),
        ])
        .unwrap();
        let path = ResponseTable::flat(1.0).unwrap();
        let taps = precompensation_filter(&mic, &path, 16000).unwrap();
        let mag = filter_magnitude(&taps, 8192);
        let max = mag.iter().cloned().fold(0.0, f64::max);
        assert!(max <= 1.01 / PRECOMP_FLOOR, "max gain {max}");
        assert!(max > 0.9 / PRECOMP_FLOOR);
    }

    #[test]
    fn rejects_uncovered_table() {
        let short = ResponseTable::new(vec![(100.0, 1.0), (3000.0, 1.0)]).unwrap();
        let flat = ResponseTable::flat(1.0).unwrap();
        assert!(precompensate(&tone(500.0, 100), &short, &flat).is_err());
    }
}
