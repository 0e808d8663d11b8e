//! Internal 2-D FFT plumbing on square row-major grids.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse 2-D FFT plans for an `n x n` grid.
///
/// Plans are immutable after construction and safe to share across threads;
/// each call allocates its own scratch.
pub(crate) struct Fft2d {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    /// Unnormalized 2-D DFT, in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.separable(&self.forward, buf);
    }

    /// Inverse 2-D DFT including the 1/n^2 normalization, in place.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.separable(&self.inverse, buf);
        let scale = 1.0 / (self.n * self.n) as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    /// Rows then columns; the column pass runs on the transposed layout.
    fn separable(&self, plan: &Arc<dyn Fft<f64>>, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n * self.n, "buffer is not an n x n grid");
        plan.process(buf);
        transpose_square(buf, self.n);
        plan.process(buf);
        transpose_square(buf, self.n);
    }
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

pub(crate) fn to_complex(x: &[f64]) -> Vec<Complex64> {
    x.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

pub(crate) fn real_parts(x: &[Complex64]) -> Vec<f64> {
    x.iter().map(|v| v.re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_inverse_round_trip() {
        let n = 6;
        let x: Vec<f64> = (0..n * n).map(|i| (i as f64 * 0.7).sin()).collect();
        let fft = Fft2d::new(n);
        let mut buf = to_complex(&x);
        fft.forward(&mut buf);
        fft.inverse(&mut buf);
        for (a, b) in x.iter().zip(buf.iter()) {
            assert!((a - b.re).abs() < 1e-12);
            assert!(b.im.abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let n = 4;
        let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
        buf[0] = Complex64::new(1.0, 0.0);
        Fft2d::new(n).forward(&mut buf);
        for v in &buf {
            assert!((v.re - 1.0).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn size_one_grid() {
        let fft = Fft2d::new(1);
        let mut buf = vec![Complex64::new(3.5, 0.0)];
        fft.forward(&mut buf);
        fft.inverse(&mut buf);
        assert!((buf[0].re - 3.5).abs() < 1e-14);
    }
}
