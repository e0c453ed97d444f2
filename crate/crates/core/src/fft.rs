//! 2D discrete Fourier transforms on row-major grids.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Planned forward/inverse 2D DFT for a fixed grid shape.
///
/// Frequency index `k = kr * width + kc` holds frequency `(kr, kc)`; the DC
/// term is at index 0. The inverse includes the `1/(h*w)` normalization.
#[derive(Clone)]
pub struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform, returning the real part.
    pub fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut buf, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.height * self.width) as f64;
        buf.into_iter().map(|c| c.re * scale).collect()
    }

    fn transform(&self, buf: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        assert_eq!(buf.len(), self.height * self.width);
        run_rows(buf, self.width, rows);
        if self.height > 1 {
            let mut t = transpose(buf, self.height, self.width);
            run_rows(&mut t, self.height, cols);
            let back = transpose(&t, self.width, self.height);
            buf.copy_from_slice(&back);
        }
    }
}

fn run_rows(buf: &mut [Complex64], len: usize, plan: &Arc<dyn Fft<f64>>) {
    if len == 1 {
        return;
    }
    #[cfg(feature = "parallel")]
    buf.par_chunks_mut(len)
        .with_min_len(crate::par::min_rows(len))
        .for_each(|row| plan.process(row));
    #[cfg(not(feature = "parallel"))]
    buf.chunks_mut(len).for_each(|row| plan.process(row));
}

fn transpose(buf: &[Complex64], height: usize, width: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); buf.len()];
    for r in 0..height {
        for c in 0..width {
            out[c * height + r] = buf[r * width + c];
        }
    }
    out
}
