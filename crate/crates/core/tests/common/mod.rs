#![allow(dead_code)]

use proptest::prelude::*;
use sbadmm_core::algorithms::Problem;
use sbadmm_core::operators::{Boundary, ConvolutionKernel, FiniteDifference};
use sbadmm_core::prox::Potential;
use sbadmm_core::ImageGrid;

pub fn image(h: usize, w: usize) -> impl Strategy<Value = ImageGrid> {
    prop::collection::vec(-1.0..1.0f64, h * w).prop_map(move |v| ImageGrid::new(h, w, v).unwrap())
}

pub fn shaped_images(lo: usize, hi: usize) -> impl Strategy<Value = (ImageGrid, ImageGrid)> {
    (lo..hi, lo..hi).prop_flat_map(|(h, w)| (image(h, w), image(h, w)))
}

pub fn boundary() -> impl Strategy<Value = Boundary> {
    prop_oneof![Just(Boundary::Periodic), Just(Boundary::Masked)]
}

/// Random kernel no larger than 3x3 with arbitrary anchor and signed taps.
pub fn kernel(boundary: Boundary) -> impl Strategy<Value = ConvolutionKernel> {
    (1usize..4, 1usize..4)
        .prop_flat_map(move |(r, c)| {
            (
                Just((r, c)),
                prop::collection::vec(-1.0..1.0f64, r * c),
                0..r,
                0..c,
            )
        })
        .prop_filter_map("nonzero taps", move |((r, c), taps, ar, ac)| {
            ConvolutionKernel::new(r, c, taps, (ar, ac), boundary).ok()
        })
}

/// Small quadratic deblurring problem with a low-pass 3x3 Gaussian.
pub fn quadratic_problem(boundary: Boundary) -> impl Strategy<Value = Problem> {
    (3usize..7, 3usize..7, 0.5..2.0f64, 0.01..1.0f64)
        .prop_flat_map(move |(h, w, sigma, alpha)| (image(h, w), Just(sigma), Just(alpha)))
        .prop_map(move |(y, sigma, alpha)| {
            Problem::new(
                y,
                ConvolutionKernel::gaussian(3, sigma, Boundary::Periodic).unwrap(),
                FiniteDifference::new(boundary),
                Potential::Quadratic { alpha },
            )
            .unwrap()
        })
}

pub fn penalty() -> impl Strategy<Value = f64> {
    (-3.0..3.0f64).prop_map(|e| 2f64.powf(e))
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
