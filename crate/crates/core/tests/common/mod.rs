#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use ultrasonic_backdoor::AudioClip;

/// Sum of 1 to 6 tones in [100, 3900] Hz with a total amplitude of at most 0.8.
pub fn sine_bank(seed: u64, rate: u32, secs: f64) -> (AudioClip, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(1..=6);
    let freqs: Vec<f64> = (0..k).map(|_| rng.gen_range(100.0..3900.0)).collect();
    let mut amps: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = amps.iter().sum();
    amps.iter_mut().for_each(|a| *a *= 0.8 / total);
    let n = (secs * rate as f64) as usize;
    let x = (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            freqs.iter().zip(&amps).map(|(f, a)| a * (2.0 * PI * f * t).sin()).sum()
        })
        .collect();
    (AudioClip::new(x, rate).unwrap(), freqs)
}

/// Hann-windowed FFT magnitudes for bins `0..=n/2`.
pub fn hann_magnitude(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
            Complex64::new(v * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.iter().take(n / 2 + 1).map(|c| c.norm()).collect()
}

/// Frequency of the largest Hann-windowed bin in `[lo, hi]` Hz.
pub fn dominant_line(x: &[f64], rate: u32, lo: f64, hi: f64) -> f64 {
    let mag = hann_magnitude(x);
    let df = rate as f64 / x.len() as f64;
    let (k, _) = mag
        .iter()
        .enumerate()
        .filter(|(k, _)| (lo..=hi).contains(&(*k as f64 * df)))
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    k as f64 * df
}

/// Windowed power summed over `±width` bins around `f_hz`.
pub fn line_power(mag: &[f64], df: f64, f_hz: f64, width: usize) -> f64 {
    let k = (f_hz / df).round() as usize;
    let lo = k.saturating_sub(width);
    let hi = (k + width + 1).min(mag.len());
    mag[lo..hi].iter().map(|m| m * m).sum()
}

/// Unwindowed one-sided spectral power in `[lo, hi)` Hz.
pub fn fft_band_power(x: &[f64], rate: u32, lo: f64, hi: f64) -> f64 {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = rate as f64 / n as f64;
    buf.iter()
        .take(n / 2 + 1)
        .enumerate()
        .filter(|(k, _)| {
            let f = *k as f64 * df;
            f >= lo && f < hi
        })
        .map(|(k, c)| {
            let w = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
            w * c.norm_sqr()
        })
        .sum::<f64>()
        / (n as f64 * n as f64)
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Standard normal CDF by composite Simpson quadrature of the density.
pub fn normal_cdf(z: f64) -> f64 {
    let lo = -12.0;
    if z <= lo {
        return 0.0;
    }
    let steps = 20_000;
    let h = (z - lo) / steps as f64;
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    let mut s = pdf(lo) + pdf(z);
    for i in 1..steps {
        let x = lo + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(x);
    }
    s * h / 3.0
}
