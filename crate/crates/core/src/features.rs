//! MFCC front end for the built-in voiceprint: pre-emphasis, Hann-windowed
//! frames, a triangular mel filterbank over `[0, rate/2]`, log compression,
//! DCT, and cepstral mean normalisation.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dsp::spectrum::plan_forward;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub frame_len_s: f64,
    pub hop_s: f64,
    pub num_filters: usize,
    /// Cepstral coefficients kept, starting at c1 (c0 is dropped).
    pub num_coeffs: usize,
    pub pre_emphasis: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            frame_len_s: 0.025,
            hop_s: 0.010,
            num_filters: 40,
            num_coeffs: 20,
            pre_emphasis: 0.97,
            log_floor: 1e-10,
        }
    }
}

/// Mean-normalised cepstra, one vector of `num_coeffs` per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrameSet {
    pub frames: Vec<Vec<f64>>,
    pub frame_len_s: f64,
    pub hop_s: f64,
    pub num_coeffs: usize,
    /// Per-coefficient mean removed by normalisation.
    pub cmn_offset: Vec<f64>,
}

impl FeatureFrameSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Per-coefficient standard deviation (population) over frames.
    pub fn coeff_std(&self) -> Vec<f64> {
        let n = self.frames.len().max(1) as f64;
        (0..self.num_coeffs)
            .map(|c| {
                let var = self.frames.iter().map(|f| f[c] * f[c]).sum::<f64>() / n;
                var.sqrt()
            })
            .collect()
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Frame count for a clip of `len` samples.
pub fn frame_count(len: usize, frame: usize, hop: usize) -> usize {
    if len < frame || frame == 0 {
        0
    } else {
        1 + (len - frame) / hop
    }
}

/// Precomputed analysis state for one sample rate.
#[derive(Debug, Clone)]
pub struct MfccExtractor {
    cfg: MfccConfig,
    rate: u32,
    frame: usize,
    hop: usize,
    n_fft: usize,
    window: Vec<f64>,
    /// Sparse triangular filters: (first bin, weights).
    filters: Vec<(usize, Vec<f64>)>,
    /// `num_coeffs × num_filters` DCT-II rows for c1..=cC.
    dct: Vec<Vec<f64>>,
}

impl MfccExtractor {
    pub fn new(cfg: MfccConfig, rate: u32) -> Result<Self> {
        if rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if cfg.num_coeffs == 0 || cfg.num_coeffs >= cfg.num_filters {
            return Err(Error::invalid("need 0 < num_coeffs < num_filters"));
        }
        let frame = (cfg.frame_len_s * rate as f64).round() as usize;
        let hop = (cfg.hop_s * rate as f64).round() as usize;
        if frame == 0 || hop == 0 {
            return Err(Error::invalid("frame and hop must span at least one sample"));
        }
        let n_fft = frame.next_power_of_two();
        let window = (0..frame)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / frame as f64).cos())
            .collect();
        let filters = mel_filterbank(cfg.num_filters, n_fft, rate);
        let nf = cfg.num_filters as f64;
        let dct = (1..=cfg.num_coeffs)
            .map(|k| {
                (0..cfg.num_filters)
                    .map(|m| (2.0 / nf).sqrt() * (PI * k as f64 * (m as f64 + 0.5) / nf).cos())
                    .collect()
            })
            .collect();
        Ok(Self {
            cfg,
            rate,
            frame,
            hop,
            n_fft,
            window,
            filters,
            dct,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    pub fn frame_samples(&self) -> usize {
        self.frame
    }

    /// Log mel energies per frame, before the DCT.
    pub fn log_mel_energies(&self, x: &AudioClip) -> Result<Vec<Vec<f64>>> {
        if x.sample_rate() != self.rate {
            return Err(Error::RateMismatch {
                left: x.sample_rate(),
                right: self.rate,
            });
        }
        let s = x.samples();
        let n_frames = frame_count(s.len(), self.frame, self.hop);
        if n_frames == 0 {
            return Err(Error::TooShort {
                needed: self.frame,
                got: s.len(),
            });
        }
        let pre = self.cfg.pre_emphasis;
        let emph: Vec<f64> = (0..s.len())
            .map(|i| if i == 0 { s[0] } else { s[i] - pre * s[i - 1] })
            .collect();
        let fft = plan_forward(self.n_fft);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut mag = vec![0.0; self.n_fft / 2 + 1];
        let mut out = Vec::with_capacity(n_frames);
        for f in 0..n_frames {
            let start = f * self.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = if i < self.frame {
                    Complex64::new(emph[start + i] * self.window[i], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, b) in mag.iter_mut().zip(&buf) {
                *m = b.norm();
            }
            let energies = self
                .filters
                .iter()
                .map(|(first, w)| {
                    let e: f64 = w.iter().zip(&mag[*first..]).map(|(a, b)| a * b).sum();
                    e.max(self.cfg.log_floor).ln()
                })
                .collect();
            out.push(energies);
        }
        Ok(out)
    }

    /// Filterbank energies (linear, pre-log) of a single frame starting at `start`.
    pub fn frame_energies(&self, x: &AudioClip, start: usize) -> Result<Vec<f64>> {
        let sub = x.slice(start, start + self.frame);
        Ok(self.log_mel_energies(&sub)?[0].iter().map(|v| v.exp()).collect())
    }

    pub fn extract(&self, x: &AudioClip) -> Result<FeatureFrameSet> {
        let logmel = self.log_mel_energies(x)?;
        let mut frames: Vec<Vec<f64>> = logmel
            .iter()
            .map(|e| {
                self.dct
                    .iter()
                    .map(|row| row.iter().zip(e).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect();
        let n = frames.len() as f64;
        let mut mean = vec![0.0; self.cfg.num_coeffs];
        for f in &frames {
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        for f in frames.iter_mut() {
            for (v, m) in f.iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        Ok(FeatureFrameSet {
            frames,
            frame_len_s: self.cfg.frame_len_s,
            hop_s: self.cfg.hop_s,
            num_coeffs: self.cfg.num_coeffs,
            cmn_offset: mean,
        })
    }

    /// Index of the filter with the highest weight at `f_hz`.
    pub fn filter_for(&self, f_hz: f64) -> usize {
        let bin = (f_hz * self.n_fft as f64 / self.rate as f64).round() as usize;
        self.filters
            .iter()
            .enumerate()
            .map(|(i, (first, w))| {
                let v = if bin >= *first && bin < first + w.len() {
                    w[bin - first]
                } else {
                    0.0
                };
                (i, v)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Triangular filters with edges evenly spaced on the mel scale over
/// `[0, rate/2]`, evaluated at the continuous bin frequencies.
fn mel_filterbank(num: usize, n_fft: usize, rate: u32) -> Vec<(usize, Vec<f64>)> {
    let nyq = rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyq);
    let edges: Vec<f64> = (0..num + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (num + 1) as f64))
        .collect();
    let bin_hz = rate as f64 / n_fft as f64;
    let n_bins = n_fft / 2 + 1;
    (0..num)
        .map(|j| {
            let (lo, mid, hi) = (edges[j], edges[j + 1], edges[j + 2]);
            let weights: Vec<(usize, f64)> = (0..n_bins)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f > lo && f < mid {
                        (f - lo) / (mid - lo)
                    } else if f >= mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect();
            match (weights.first(), weights.last()) {
                (Some(&(first, _)), Some(&(last, _))) => {
                    let mut dense = vec![0.0; last - first + 1];
                    for (k, w) in weights {
                        dense[k - first] = w;
                    }
                    (first, dense)
                }
                // Narrow low filters can fall between bins; use the nearest bin.
                _ => ((mid / bin_hz).round() as usize, vec![1.0]),
            }
        })
        .collect()
}

/// One-shot extraction with default settings.
pub fn mfcc_features(x: &AudioClip, cfg: &MfccConfig) -> Result<FeatureFrameSet> {
    MfccExtractor::new(cfg.clone(), x.sample_rate())?.extract(x)
}
