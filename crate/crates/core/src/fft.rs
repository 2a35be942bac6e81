//! Thin wrappers around `rustfft` with a per-thread planner cache.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward DFT in place.
pub fn forward(buf: &mut [Complex64]) {
    let n = buf.len();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    fft.process(buf);
}

/// Inverse DFT in place, normalized by 1/n.
pub fn inverse(buf: &mut [Complex64]) {
    let n = buf.len();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    fft.process(buf);
    let s = 1.0 / n as f64;
    for z in buf.iter_mut() {
        *z *= s;
    }
}

pub fn forward_real(samples: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    forward(&mut buf);
    buf
}

pub fn inverse_real(mut spec: Vec<Complex64>) -> Vec<f64> {
    inverse(&mut spec);
    spec.into_iter().map(|z| z.re).collect()
}

/// Signed integer mode number of FFT index `m` for length `n`, in [−n/2, n/2).
#[inline]
pub fn mode(m: usize, n: usize) -> i64 {
    if m < n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}
