//! FFT helpers shared by the channel model, defenses and analysis code.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan_forward(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn plan_inverse(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Unnormalised forward FFT of a real sequence.
pub fn fft_real(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if !buf.is_empty() {
        plan_forward(buf.len()).process(&mut buf);
    }
    buf
}

/// Inverse FFT scaled by `1/n`.
pub fn ifft(mut spec: Vec<Complex64>) -> Vec<Complex64> {
    let n = spec.len();
    if n == 0 {
        return spec;
    }
    plan_inverse(n).process(&mut spec);
    let scale = 1.0 / n as f64;
    spec.iter_mut().for_each(|c| *c *= scale);
    spec
}

/// Analytic signal `x + j·H{x}` computed over the whole clip.
pub fn analytic_signal(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut spec = fft_real(x);
    let half = n / 2;
    for (k, c) in spec.iter_mut().enumerate() {
        if k == 0 || (n % 2 == 0 && k == half) {
            continue;
        }
        if k <= (n - 1) / 2 {
            *c *= 2.0;
        } else {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    ifft(spec)
}

/// Full linear convolution via FFT.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fa.resize(n, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fb.resize(n, Complex64::new(0.0, 0.0));
    let fwd = plan_forward(n);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    ifft(prod).into_iter().take(out_len).map(|c| c.re).collect()
}

/// One-sided magnitude spectrum (`n/2 + 1` bins) with an optional Hann window.
pub fn magnitude_spectrum(x: &[f64], hann: bool) -> Vec<f64> {
    let n = x.len();
    let windowed: Vec<f64> = if hann {
        x.iter()
            .enumerate()
            .map(|(i, v)| v * hann_value(i, n))
            .collect()
    } else {
        x.to_vec()
    };
    fft_real(&windowed)
        .iter()
        .take(n / 2 + 1)
        .map(|c| c.norm())
        .collect()
}

fn hann_value(i: usize, n: usize) -> f64 {
    if n <= 1 {
        return 1.0;
    }
    0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()
}

/// Frequency (Hz) of the strongest bin inside `[lo_hz, hi_hz]`.
pub fn peak_frequency(x: &[f64], rate: u32, lo_hz: f64, hi_hz: f64) -> Option<f64> {
    let mag = magnitude_spectrum(x, true);
    let df = rate as f64 / x.len() as f64;
    mag.iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = *k as f64 * df;
            f >= lo_hz && f <= hi_hz
        })
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k as f64 * df)
}

/// Mean-square power of the components in `[lo_hz, hi_hz)`, by Parseval.
pub fn band_power(x: &[f64], rate: u32, lo_hz: f64, hi_hz: f64) -> f64 {
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let spec = fft_real(x);
    let df = rate as f64 / n as f64;
    let mut total = 0.0;
    for (k, c) in spec.iter().enumerate().take(n / 2 + 1) {
        let f = k as f64 * df;
        if f < lo_hz || f >= hi_hz {
            continue;
        }
        let weight = if k == 0 || (n % 2 == 0 && k == n / 2) {
            1.0
        } else {
            2.0
        };
        total += weight * c.norm_sqr();
    }
    total / (n as f64 * n as f64)
}
