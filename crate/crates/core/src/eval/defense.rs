//! Recognition-time input transforms used as defenses.

use std::fmt;
use std::process::Command;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dsp::fir::{self, DEFAULT_ATTEN_DB};
use crate::dsp::Resampler;
use crate::error::{Error, Result};
use crate::io::wav::{read_wav, write_wav};

/// VAD frame length.
pub const VAD_FRAME_S: f64 = 0.020;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DefenseSpec {
    /// Drops 20 ms frames quieter than the loudest frame by more than `threshold_db`.
    Vad { threshold_db: f64 },
    Quantize { bits: u32 },
    Bandpass { low_hz: f64, high_hz: f64 },
    Median { kernel: usize },
    /// Down-samples to `rate`·fs and back.
    Squeeze { rate: f64 },
    /// Shell command with `{in}` and `{out}` WAV path placeholders.
    ExternalCmd { template: String },
}

impl DefenseSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DefenseSpec::Vad { threshold_db } if !(threshold_db.is_finite() && *threshold_db <= 0.0) => {
                Err(Error::invalid("vad threshold must be a finite non-positive dB value"))
            }
            DefenseSpec::Quantize { bits } if *bits != 8 && *bits != 16 => {
                Err(Error::invalid(format!("quantize bits must be 8 or 16, got {bits}")))
            }
            DefenseSpec::Bandpass { low_hz, high_hz } if !(*low_hz >= 0.0 && low_hz < high_hz) => {
                Err(Error::invalid(format!("bandpass needs 0 <= low < high, got {low_hz}..{high_hz}")))
            }
            DefenseSpec::Median { kernel } if *kernel < 3 || kernel % 2 == 0 => {
                Err(Error::invalid(format!("median kernel must be odd and >= 3, got {kernel}")))
            }
            DefenseSpec::Squeeze { rate } if !(*rate > 0.0 && *rate < 1.0) => {
                Err(Error::invalid(format!("squeeze rate must lie in (0, 1), got {rate}")))
            }
            DefenseSpec::ExternalCmd { template }
                if !(template.contains("{in}") && template.contains("{out}")) =>
            {
                Err(Error::invalid("external command template needs {in} and {out}"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for DefenseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DefenseSpec::Vad { threshold_db } => write!(f, "vad:{threshold_db}"),
            DefenseSpec::Quantize { bits } => write!(f, "quantize:{bits}"),
            DefenseSpec::Bandpass { low_hz, high_hz } => write!(f, "bandpass:{low_hz}:{high_hz}"),
            DefenseSpec::Median { kernel } => write!(f, "median:{kernel}"),
            DefenseSpec::Squeeze { rate } => write!(f, "squeeze:{rate}"),
            DefenseSpec::ExternalCmd { template } => write!(f, "cmd:{template}"),
        }
    }
}

/// Parses `vad:-25`, `quantize:8`, `bandpass:50:4000`, `median:5`,
/// `squeeze:0.5` or `cmd:<template>`.
impl FromStr for DefenseSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let num = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("defense `{s}`: bad number `{v}`")))
        };
        let spec = match kind {
            "vad" => DefenseSpec::Vad {
                threshold_db: if rest.is_empty() { -25.0 } else { num(rest)? },
            },
            "quantize" => DefenseSpec::Quantize {
                bits: if rest.is_empty() { 8 } else { num(rest)? as u32 },
            },
            "bandpass" => {
                let (lo, hi) = rest
                    .split_once(':')
                    .ok_or_else(|| Error::invalid(format!("defense `{s}`: expected bandpass:LOW:HIGH")))?;
                DefenseSpec::Bandpass {
                    low_hz: num(lo)?,
                    high_hz: num(hi)?,
                }
            }
            "median" => DefenseSpec::Median {
                kernel: num(rest)? as usize,
            },
            "squeeze" => DefenseSpec::Squeeze { rate: num(rest)? },
            "cmd" => DefenseSpec::ExternalCmd {
                template: rest.to_string(),
            },
            other => return Err(Error::invalid(format!("unknown defense `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn apply_defense(x: &AudioClip, spec: &DefenseSpec) -> Result<AudioClip> {
    spec.validate()?;
    match spec {
        DefenseSpec::Vad { threshold_db } => Ok(vad(x, *threshold_db)),
        DefenseSpec::Quantize { bits } => Ok(quantize(x, *bits)),
        DefenseSpec::Bandpass { low_hz, high_hz } => bandpass(x, *low_hz, *high_hz),
        DefenseSpec::Median { kernel } => Ok(median_filter(x, *kernel)),
        DefenseSpec::Squeeze { rate } => squeeze(x, *rate),
        DefenseSpec::ExternalCmd { template } => external(x, template),
    }
}

fn vad(x: &AudioClip, threshold_db: f64) -> AudioClip {
    let frame = ((VAD_FRAME_S * x.sample_rate() as f64).round() as usize).max(1);
    let rms: Vec<f64> = x
        .samples()
        .chunks(frame)
        .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt())
        .collect();
    let max = rms.iter().cloned().fold(0.0, f64::max);
    let floor = max * 10f64.powf(threshold_db / 20.0);
    let kept: Vec<f64> = x
        .samples()
        .chunks(frame)
        .zip(&rms)
        .filter(|(_, r)| **r >= floor)
        .flat_map(|(c, _)| c.iter().copied())
        .collect();
    AudioClip::from_finite(kept, x.sample_rate())
}

fn quantize(x: &AudioClip, bits: u32) -> AudioClip {
    let scale = (1u64 << (bits - 1)) as f64;
    let q = x
        .samples()
        .iter()
        .map(|v| (v * scale).round().clamp(-scale, scale - 1.0) / scale)
        .collect();
    AudioClip::from_finite(q, x.sample_rate())
}

fn bandpass(x: &AudioClip, low_hz: f64, high_hz: f64) -> Result<AudioClip> {
    let rate = x.sample_rate() as f64;
    let nyq = rate / 2.0;
    if low_hz >= nyq {
        return Err(Error::invalid(format!("bandpass low edge {low_hz} Hz at or above Nyquist")));
    }
    let transition = (0.5 * low_hz).clamp(10.0, 200.0);
    let samples = if high_hz + transition >= nyq {
        // Upper edge at Nyquist: only the high-pass half is meaningful.
        if low_hz <= 0.0 {
            return Ok(x.clone());
        }
        let len = fir::kaiser_len(DEFAULT_ATTEN_DB, transition, rate);
        let lp = fir::lowpass_with_len(low_hz, len, rate, DEFAULT_ATTEN_DB);
        let low = fir::filter_zero_phase(x.samples(), &lp);
        x.samples().iter().zip(low).map(|(a, b)| a - b).collect()
    } else {
        let taps = fir::bandpass(low_hz, high_hz, transition, rate, DEFAULT_ATTEN_DB);
        fir::filter_zero_phase(x.samples(), &taps)
    };
    AudioClip::new(samples, x.sample_rate())
}

/// Running median over an odd window; the signal edges are replicated.
pub fn median_filter(x: &AudioClip, kernel: usize) -> AudioClip {
    let s = x.samples();
    let n = s.len();
    let half = kernel / 2;
    let mut window = vec![0.0; kernel];
    let out = (0..n)
        .map(|i| {
            for (k, w) in window.iter_mut().enumerate() {
                let j = (i + k).saturating_sub(half).min(n - 1);
                *w = s[j];
            }
            window.sort_unstable_by(f64::total_cmp);
            window[half]
        })
        .collect();
    AudioClip::from_finite(out, x.sample_rate())
}

fn squeeze(x: &AudioClip, rate: f64) -> Result<AudioClip> {
    let fs = x.sample_rate();
    let mid = (rate * fs as f64).round() as u32;
    if mid == 0 {
        return Err(Error::invalid("squeeze rate leaves no samples"));
    }
    let down = Resampler::new(fs, mid)?.apply(x)?;
    let mut up = Resampler::new(mid, fs)?.apply(&down)?.into_samples();
    up.resize(x.len(), 0.0);
    AudioClip::new(up, fs)
}

fn external(x: &AudioClip, template: &str) -> Result<AudioClip> {
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let inp = dir.path().join("in.wav");
    let out = dir.path().join("out.wav");
    write_wav(&inp, x)?;
    let cmd = template
        .replace("{in}", &inp.to_string_lossy())
        .replace("{out}", &out.to_string_lossy());
    let res = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .output()
        .map_err(|e| Error::DefenseCommand {
            command: cmd.clone(),
            status: "spawn failed".into(),
            stderr: e.to_string(),
        })?;
    if !res.status.success() {
        return Err(Error::DefenseCommand {
            command: cmd,
            status: res.status.to_string(),
            stderr: String::from_utf8_lossy(&res.stderr).trim().to_string(),
        });
    }
    let y = read_wav(&out)?;
    if y.sample_rate() == x.sample_rate() {
        Ok(y)
    } else {
        Resampler::new(y.sample_rate(), x.sample_rate())?.apply(&y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::spectrum::band_power;
    use std::f64::consts::PI;

    fn tone(f: f64, n: usize) -> AudioClip {
        AudioClip::new(
            (0..n).map(|i| 0.5 * (2.0 * PI * f * i as f64 / 16000.0).sin()).collect(),
            16000,
        )
        .unwrap()
    }

    #[test]
    fn median_examples() {
        let x = AudioClip::new(vec![1.0, 9.0, 1.0], 16000).unwrap();
        assert_eq!(median_filter(&x, 3).samples(), &[1.0, 1.0, 1.0]);
        let c = AudioClip::new(vec![0.3; 10], 16000).unwrap();
        assert_eq!(median_filter(&c, 5), c);
    }

    #[test]
    fn quantize_bound_and_idempotence() {
        let x = AudioClip::new(vec![0.5, 0.123456, -0.999, 1.0], 16000).unwrap();
        let q = quantize(&x, 8);
        assert!((q.samples()[0] - 0.5).abs() <= 1.0 / 256.0);
        for (a, b) in x.samples()[..3].iter().zip(q.samples()) {
            assert!((a - b).abs() <= 1.0 / 256.0);
        }
        assert_eq!(quantize(&q, 8), q);
    }

    #[test]
    fn squeeze_keeps_low_and_kills_high() {
        let spec = DefenseSpec::Squeeze { rate: 0.5 };
        let lo = tone(1000.0, 16000);
        let y = apply_defense(&lo, &spec).unwrap();
        let db = 10.0 * (y.power() / lo.power()).log10();
        assert!(db.abs() < 1.0, "{db}");
        let hi = tone(7000.0, 16000);
        let y = apply_defense(&hi, &spec).unwrap();
        let db = 10.0 * (y.power() / hi.power()).log10();
        assert!(db < -20.0, "{db}");
    }

    #[test]
    fn vad_drops_quiet_frames() {
        let mut s = vec![0.0; 320];
        s.extend(tone(500.0, 640).samples());
        s.extend(vec![1e-4; 320]);
        let x = AudioClip::new(s, 16000).unwrap();
        let y = apply_defense(&x, &DefenseSpec::Vad { threshold_db: -25.0 }).unwrap();
        assert_eq!(y.len(), 640);
    }

    #[test]
    fn bandpass_passes_band() {
        let spec = DefenseSpec::Bandpass {
            low_hz: 300.0,
            high_hz: 3400.0,
        };
        let x = tone(1000.0, 16000).add(&tone(6000.0, 16000)).unwrap();
        let y = apply_defense(&x, &spec).unwrap();
        let keep = band_power(y.samples(), 16000, 900.0, 1100.0);
        let kill = band_power(y.samples(), 16000, 5900.0, 6100.0);
        assert!((keep / 0.125 - 1.0).abs() < 0.01);
        assert!(kill < 1e-6);
    }

    #[test]
    fn parse_and_display_roundtrip() {
        for s in ["vad:-25", "quantize:8", "bandpass:50:4000", "median:5", "squeeze:0.5"] {
            let spec: DefenseSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("median:4".parse::<DefenseSpec>().is_err());
        assert!("quantize:12".parse::<DefenseSpec>().is_err());
        assert!("squeeze:1.5".parse::<DefenseSpec>().is_err());
        assert!("cmd:cat".parse::<DefenseSpec>().is_err());
    }

    #[test]
    fn external_command_roundtrip_and_failure() {
        let x = tone(440.0, 1600);
        let y = apply_defense(
            &x,
            &DefenseSpec::ExternalCmd {
                template: "cp {in} {out}".into(),
            },
        )
        .unwrap();
        assert_eq!(y.len(), x.len());
        let err = apply_defense(
            &x,
            &DefenseSpec::ExternalCmd {
                template: "echo boom >&2; false {in} {out}".into(),
            },
        )
        .unwrap_err();
        match err {
            Error::DefenseCommand { stderr, .. } => assert_eq!(stderr, "boom"),
            other => panic!("{other}"),
        }
    }
}
