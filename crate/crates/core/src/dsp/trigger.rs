//! Sparse sine-bank trigger: M segments, each a sum of N fixed-frequency sines.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// Upper edge (exclusive) of the trigger's frequency band.
pub const MAX_TRIGGER_FREQ_HZ: f64 = 4000.0;

/// Length of the raised-cosine ramp applied at each segment boundary.
pub const SEGMENT_RAMP_S: f64 = 0.005;

/// Amplitude matrix and frequency matrix of a trigger, stored row-major
/// (`segment * freqs_per_segment + n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TriggerFile", into = "TriggerFile")]
pub struct TriggerParams {
    segments: usize,
    freqs_per_segment: usize,
    segment_len_s: f64,
    amps: Vec<f64>,
    freqs_hz: Vec<f64>,
}

impl TriggerParams {
    pub fn new(
        segments: usize,
        freqs_per_segment: usize,
        segment_len_s: f64,
        amps: Vec<f64>,
        freqs_hz: Vec<f64>,
    ) -> Result<Self> {
        if segments == 0 || freqs_per_segment == 0 {
            return Err(Error::invalid("trigger needs at least one segment and one frequency"));
        }
        if !(segment_len_s > 0.0 && segment_len_s.is_finite()) {
            return Err(Error::invalid("segment length must be positive"));
        }
        let p = segments * freqs_per_segment;
        if amps.len() != p || freqs_hz.len() != p {
            return Err(Error::invalid(format!(
                "expected {p} amplitudes and frequencies, got {} and {}",
                amps.len(),
                freqs_hz.len()
            )));
        }
        if let Some(a) = amps.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::invalid(format!("amplitude {a} outside [0, 1]")));
        }
        if let Some(f) = freqs_hz
            .iter()
            .find(|f| !(**f > 0.0 && **f < MAX_TRIGGER_FREQ_HZ))
        {
            return Err(Error::invalid(format!(
                "frequency {f} Hz outside (0, {MAX_TRIGGER_FREQ_HZ})"
            )));
        }
        Ok(Self {
            segments,
            freqs_per_segment,
            segment_len_s,
            amps,
            freqs_hz,
        })
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn freqs_per_segment(&self) -> usize {
        self.freqs_per_segment
    }

    /// Total number of (amplitude, frequency) pairs, M·N.
    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn segment_len_s(&self) -> f64 {
        self.segment_len_s
    }

    pub fn amps(&self) -> &[f64] {
        &self.amps
    }

    pub fn freqs_hz(&self) -> &[f64] {
        &self.freqs_hz
    }

    pub fn amp(&self, m: usize, n: usize) -> f64 {
        self.amps[m * self.freqs_per_segment + n]
    }

    pub fn freq(&self, m: usize, n: usize) -> f64 {
        self.freqs_hz[m * self.freqs_per_segment + n]
    }

    /// Replaces the amplitude matrix, clipping every entry to `[0, 1]`.
    pub fn with_amps(&self, amps: &[f64]) -> Result<Self> {
        if amps.len() != self.amps.len() {
            return Err(Error::DimensionMismatch {
                left: amps.len(),
                right: self.amps.len(),
            });
        }
        let mut out = self.clone();
        out.amps = amps.iter().map(|a| a.clamp(0.0, 1.0)).collect();
        if out.amps.iter().any(|a| a.is_nan()) {
            return Err(Error::invalid("NaN amplitude"));
        }
        Ok(out)
    }

    /// Sum of absolute amplitudes.
    pub fn l1(&self) -> f64 {
        self.amps.iter().map(|a| a.abs()).sum()
    }

    pub fn segment_samples(&self, rate: u32) -> usize {
        (self.segment_len_s * rate as f64).round() as usize
    }

    pub fn duration_s(&self) -> f64 {
        self.segments as f64 * self.segment_len_s
    }

    /// Count of non-zero amplitudes.
    pub fn active_count(&self) -> usize {
        self.amps.iter().filter(|a| **a > 0.0).count()
    }
}

#[derive(Serialize, Deserialize)]
struct TriggerFile {
    segments: usize,
    freqs_per_segment: usize,
    segment_len_s: f64,
    /// One row per segment.
    amps: Vec<Vec<f64>>,
    freqs_hz: Vec<Vec<f64>>,
}

impl From<TriggerParams> for TriggerFile {
    fn from(p: TriggerParams) -> Self {
        let rows = |v: &[f64]| v.chunks(p.freqs_per_segment).map(<[f64]>::to_vec).collect();
        TriggerFile {
            segments: p.segments,
            freqs_per_segment: p.freqs_per_segment,
            segment_len_s: p.segment_len_s,
            amps: rows(&p.amps),
            freqs_hz: rows(&p.freqs_hz),
        }
    }
}

impl TryFrom<TriggerFile> for TriggerParams {
    type Error = Error;

    fn try_from(f: TriggerFile) -> Result<Self> {
        if f.amps.len() != f.segments || f.freqs_hz.len() != f.segments {
            return Err(Error::invalid("row count does not match segment count"));
        }
        TriggerParams::new(
            f.segments,
            f.freqs_per_segment,
            f.segment_len_s,
            f.amps.concat(),
            f.freqs_hz.concat(),
        )
    }
}

/// Precomputed ramped sine for every (segment, frequency) pair. The frequency
/// matrix is frozen during optimisation, so rendering a new amplitude matrix
/// is a weighted sum of these rows.
#[derive(Debug, Clone)]
pub struct TriggerBasis {
    rate: u32,
    segments: usize,
    freqs_per_segment: usize,
    segment_samples: usize,
    rows: Vec<Vec<f64>>,
}

impl TriggerBasis {
    pub fn new(params: &TriggerParams, rate: u32) -> Result<Self> {
        Self::with_ramp(params, rate, SEGMENT_RAMP_S)
    }

    pub fn with_ramp(params: &TriggerParams, rate: u32, ramp_s: f64) -> Result<Self> {
        let max_f = params.freqs_hz.iter().cloned().fold(0.0, f64::max);
        if (rate as f64) < 2.0 * max_f {
            return Err(Error::Nyquist {
                freq_hz: max_f,
                rate,
            });
        }
        let seg = params.segment_samples(rate);
        let ramp = raised_cosine_ramp(seg, ramp_s, rate);
        let rows = params
            .freqs_hz
            .iter()
            .map(|&f| {
                let w = 2.0 * PI * f / rate as f64;
                (0..seg)
                    .map(|k| {
                        let g = ramp_gain(&ramp, k, seg);
                        g * (w * k as f64).sin()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            rate,
            segments: params.segments,
            freqs_per_segment: params.freqs_per_segment,
            segment_samples: seg,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.segments * self.segment_samples
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn render(&self, amps: &[f64]) -> Result<AudioClip> {
        if amps.len() != self.rows.len() {
            return Err(Error::DimensionMismatch {
                left: amps.len(),
                right: self.rows.len(),
            });
        }
        let mut out = vec![0.0; self.len()];
        for (m, chunk) in out.chunks_mut(self.segment_samples).enumerate() {
            for n in 0..self.freqs_per_segment {
                let idx = m * self.freqs_per_segment + n;
                let a = amps[idx];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in chunk.iter_mut().zip(&self.rows[idx]) {
                    *o += a * b;
                }
            }
        }
        AudioClip::new(out, self.rate)
    }
}

fn raised_cosine_ramp(segment_samples: usize, ramp_s: f64, rate: u32) -> Vec<f64> {
    let len = ((ramp_s * rate as f64).round() as usize).min(segment_samples / 2);
    (0..len)
        .map(|k| 0.5 - 0.5 * (PI * (k as f64 + 0.5) / len as f64).cos())
        .collect()
}

fn ramp_gain(ramp: &[f64], k: usize, seg: usize) -> f64 {
    let r = ramp.len();
    if k < r {
        ramp[k]
    } else if k >= seg - r {
        ramp[seg - 1 - k]
    } else {
        1.0
    }
}

/// Renders the trigger waveform with the default 5 ms segment ramps.
pub fn synthesize_trigger(params: &TriggerParams, rate: u32) -> Result<AudioClip> {
    TriggerBasis::new(params, rate)?.render(&params.amps)
}

/// Renders with a custom boundary ramp (`0.0` disables ramping).
pub fn synthesize_trigger_with_ramp(
    params: &TriggerParams,
    rate: u32,
    ramp_s: f64,
) -> Result<AudioClip> {
    TriggerBasis::with_ramp(params, rate, ramp_s)?.render(&params.amps)
}
