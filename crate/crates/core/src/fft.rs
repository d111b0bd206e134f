//! Thin wrapper over `rustfft` with a per-thread plan cache.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward transform, `X_k = sum_n x_n exp(-2 pi i n k / N)`.
pub(crate) fn forward(buf: &mut [Complex64]) {
    if buf.len() < 2 {
        return;
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
}

/// Unnormalized inverse transform, `x_n = sum_k X_k exp(+2 pi i n k / N)`.
pub(crate) fn inverse(buf: &mut [Complex64]) {
    if buf.len() < 2 {
        return;
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(buf));
}

/// `exp(i pi num / den)` with the numerator reduced exactly before the
/// conversion to floating point.
pub(crate) fn unit_phase(num: i64, den: i64) -> Complex64 {
    debug_assert!(den > 0);
    let r = num.rem_euclid(2 * den);
    Complex64::from_polar(1.0, PI * r as f64 / den as f64)
}

fn transform_2d(data: &mut [Complex64], rows: usize, cols: usize, step: fn(&mut [Complex64])) {
    for r in data.chunks_mut(cols) {
        step(r);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            col[r] = data[r * cols + c];
        }
        step(&mut col);
        for r in 0..rows {
            data[r * cols + c] = col[r];
        }
    }
}

/// Unnormalized forward transform of a row-major `rows x cols` array.
pub(crate) fn forward_2d(data: &mut [Complex64], rows: usize, cols: usize) {
    transform_2d(data, rows, cols, forward);
}

pub(crate) fn inverse_2d(data: &mut [Complex64], rows: usize, cols: usize) {
    transform_2d(data, rows, cols, inverse);
}
