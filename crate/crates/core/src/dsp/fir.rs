//! Kaiser-window FIR design and zero-phase application.

use std::f64::consts::PI;

use super::spectrum::fft_convolve;

/// Default stopband attenuation for internal filters.
pub const DEFAULT_ATTEN_DB: f64 = 80.0;

/// Zeroth-order modified Bessel function of the first kind (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

pub fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

/// Odd tap count meeting `atten_db` over a transition band of `transition_hz`.
pub fn kaiser_len(atten_db: f64, transition_hz: f64, rate: f64) -> usize {
    let dw = 2.0 * PI * transition_hz / rate;
    let n = ((atten_db - 7.95) / (2.285 * dw)).ceil().max(1.0) as usize + 1;
    n | 1
}

pub fn kaiser_window(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    let m = (len - 1) as f64;
    (0..len)
        .map(|k| {
            let r = 2.0 * k as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Windowed-sinc lowpass with unit DC gain. The cutoff sits midway between
/// `pass_hz` and `stop_hz`.
pub fn lowpass(pass_hz: f64, stop_hz: f64, rate: f64, atten_db: f64) -> Vec<f64> {
    let len = kaiser_len(atten_db, stop_hz - pass_hz, rate);
    lowpass_with_len(0.5 * (pass_hz + stop_hz), len, rate, atten_db)
}

pub fn lowpass_with_len(cutoff_hz: f64, len: usize, rate: f64, atten_db: f64) -> Vec<f64> {
    let win = kaiser_window(len, kaiser_beta(atten_db));
    let fc = cutoff_hz / rate;
    let center = (len / 2) as f64;
    let mut taps: Vec<f64> = win
        .iter()
        .enumerate()
        .map(|(k, w)| 2.0 * fc * sinc(2.0 * fc * (k as f64 - center)) * w)
        .collect();
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    taps
}

/// Bandpass as the difference of two equal-length lowpasses. A non-positive
/// `low_hz` degenerates to a plain lowpass at `high_hz`.
pub fn bandpass(low_hz: f64, high_hz: f64, transition_hz: f64, rate: f64, atten_db: f64) -> Vec<f64> {
    let len = kaiser_len(atten_db, transition_hz, rate);
    let hi = lowpass_with_len(high_hz, len, rate, atten_db);
    if low_hz <= 0.0 {
        return hi;
    }
    let lo = lowpass_with_len(low_hz, len, rate, atten_db);
    hi.iter().zip(&lo).map(|(h, l)| h - l).collect()
}

/// Applies an odd-length linear-phase FIR centred on each sample, so the
/// output has the input's length and no group delay.
pub fn filter_zero_phase(x: &[f64], taps: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let half = taps.len() / 2;
    let full = fft_convolve(x, taps);
    full[half..half + x.len()].to_vec()
}
