//! Rational polyphase resampling with a Kaiser-windowed sinc kernel.

use crate::audio::AudioClip;
use crate::error::{Error, Result};

use super::fir::{lowpass, DEFAULT_ATTEN_DB};

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Converts between two integer sample rates by upsampling by `up`,
/// filtering, and keeping every `down`-th sample. Only the kept outputs are
/// computed.
#[derive(Debug, Clone)]
pub struct Resampler {
    in_rate: u32,
    out_rate: u32,
    up: usize,
    down: usize,
    taps: Vec<f64>,
}

impl Resampler {
    /// Default band: passband to 40% and stopband from 50% of the lower rate.
    pub fn new(in_rate: u32, out_rate: u32) -> Result<Self> {
        let low = in_rate.min(out_rate) as f64;
        Self::with_band(in_rate, out_rate, 0.4 * low, 0.5 * low, DEFAULT_ATTEN_DB)
    }

    pub fn with_band(
        in_rate: u32,
        out_rate: u32,
        pass_hz: f64,
        stop_hz: f64,
        atten_db: f64,
    ) -> Result<Self> {
        if in_rate == 0 || out_rate == 0 {
            return Err(Error::invalid("resampler rates must be positive"));
        }
        if !(pass_hz > 0.0 && stop_hz > pass_hz) {
            return Err(Error::invalid(format!(
                "resampler band edges must satisfy 0 < pass ({pass_hz}) < stop ({stop_hz})"
            )));
        }
        let g = gcd(in_rate as u64, out_rate as u64);
        let up = (out_rate as u64 / g) as usize;
        let down = (in_rate as u64 / g) as usize;
        let virtual_rate = in_rate as f64 * up as f64;
        let mut taps = lowpass(pass_hz, stop_hz, virtual_rate, atten_db);
        taps.iter_mut().for_each(|t| *t *= up as f64);
        Ok(Self {
            in_rate,
            out_rate,
            up,
            down,
            taps,
        })
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        ((input_len as u128 * self.up as u128 + self.down as u128 / 2) / self.down as u128) as usize
    }

    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        let n_out = self.output_len(x.len());
        let half = (self.taps.len() / 2) as i64;
        let up = self.up as i64;
        let last_tap = self.taps.len() as i64 - 1;
        let mut out = Vec::with_capacity(n_out);
        for n in 0..n_out as i64 {
            // y[n] = sum_j x[j] h[n*down - j*up + half]
            let pos = n * self.down as i64 + half;
            let j_min = ((pos - last_tap) as f64 / up as f64).ceil().max(0.0) as i64;
            let j_max = (pos.div_euclid(up)).min(x.len() as i64 - 1);
            let mut acc = 0.0;
            let mut j = j_min;
            while j <= j_max {
                acc += x[j as usize] * self.taps[(pos - j * up) as usize];
                j += 1;
            }
            out.push(acc);
        }
        out
    }

    pub fn apply(&self, clip: &AudioClip) -> Result<AudioClip> {
        if clip.sample_rate() != self.in_rate {
            return Err(Error::RateMismatch {
                left: clip.sample_rate(),
                right: self.in_rate,
            });
        }
        AudioClip::new(self.process(clip.samples()), self.out_rate)
    }
}

/// Resamples with the default anti-aliasing band. Identity when rates match.
pub fn resample(clip: &AudioClip, out_rate: u32) -> Result<AudioClip> {
    if clip.sample_rate() == out_rate {
        return Ok(clip.clone());
    }
    Resampler::new(clip.sample_rate(), out_rate)?.apply(clip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::spectrum::band_power;
    use std::f64::consts::PI;

    fn tone(f: f64, rate: u32, secs: f64) -> Vec<f64> {
        let n = (secs * rate as f64) as usize;
        (0..n)
            .map(|i| (2.0 * PI * f * i as f64 / rate as f64).sin())
            .collect()
    }

    #[test]
    fn upsample_preserves_tone() {
        let x = AudioClip::new(tone(1000.0, 16000, 0.5), 16000).unwrap();
        let y = resample(&x, 48000).unwrap();
        assert_eq!(y.len(), 24000);
        let inner = &y.samples()[2400..21600];
        for (i, v) in inner.iter().enumerate() {
            let t = (i + 2400) as f64 / 48000.0;
            assert!((v - (2.0 * PI * 1000.0 * t).sin()).abs() < 1e-3, "at {i}");
        }
    }

    #[test]
    fn downsample_removes_out_of_band() {
        let x = AudioClip::new(tone(7000.0, 16000, 1.0), 16000).unwrap();
        let y = resample(&x, 8000).unwrap();
        let p = band_power(&y.samples()[800..7200], 8000, 0.0, 4001.0);
        assert!(p < 1e-6, "aliased power {p}");
    }

    #[test]
    fn odd_ratio_lengths() {
        let r = Resampler::new(44100, 16000).unwrap();
        assert_eq!(r.output_len(44100), 16000);
        let y = r.process(&tone(440.0, 44100, 0.2));
        assert_eq!(y.len(), 3200);
    }
}
