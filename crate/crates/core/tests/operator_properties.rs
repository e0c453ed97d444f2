mod common;

use common::*;
use proptest::prelude::*;
use sbadmm_core::fft::Fft2;
use sbadmm_core::grid::{Direction, GradientField};
use sbadmm_core::operators::{split_operator_rank_check, BccbSpectrum, Boundary, ConvolutionKernel, FiniteDifference};
use sbadmm_core::ImageGrid;

fn multiply_spectrum(spectrum: &BccbSpectrum, x: &ImageGrid) -> ImageGrid {
    let (h, w) = x.shape();
    let fft = Fft2::new(h, w);
    let mut hat = fft.forward_real(x.values());
    for (z, &l) in hat.iter_mut().zip(spectrum.eigenvalues()) {
        *z *= l;
    }
    ImageGrid::new(h, w, fft.inverse_real(hat)).unwrap()
}

fn field(diff: &FiniteDifference, shape: (usize, usize), values: Vec<f64>) -> GradientField {
    let zero = diff.zero_field(shape);
    GradientField::from_values(shape.0, shape.1, zero.directions().to_vec(), zero.mask().to_vec(), values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn blur_adjoint_identity(
        (x, r) in shaped_images(3, 9),
        k in boundary().prop_flat_map(kernel),
    ) {
        let ax = k.forward(&x).unwrap();
        let atr = k.adjoint(&r).unwrap();
        let lhs = ax.dot(&r);
        let rhs = x.dot(&atr);
        let scale = ax.norm() * r.norm() + x.norm() * atr.norm() + f64::MIN_POSITIVE;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale, "{lhs} vs {rhs}");
    }

    #[test]
    fn difference_adjoint_identity(
        (x, _) in shaped_images(1, 9),
        b in boundary(),
        seed in prop::collection::vec(-1.0..1.0f64, 2 * 81),
        diagonal in any::<bool>(),
    ) {
        prop_assume!(x.len() >= 2);
        let shape = x.shape();
        let diff = if diagonal {
            FiniteDifference::with_directions(
                vec![Direction::HORIZONTAL, Direction::VERTICAL, Direction { dr: 1, dc: 1 }],
                b,
            ).unwrap()
        } else {
            FiniteDifference::new(b)
        };
        let m = diff.directions().len() * x.len();
        let g = field(&diff, shape, seed.iter().cycle().take(m).copied().collect());
        let cx = diff.forward(&x).unwrap();
        let ctg = diff.adjoint(&g).unwrap();
        let lhs = cx.dot(&g);
        let rhs = x.dot(&ctg);
        let scale = cx.norm_sq().sqrt() * g.norm_sq().sqrt() + x.norm() * ctg.norm() + f64::MIN_POSITIVE;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale, "{lhs} vs {rhs}");
    }

    #[test]
    fn periodic_gram_matches_frequency_multiplication(
        (x, _) in shaped_images(3, 10),
        k in kernel(Boundary::Periodic),
    ) {
        let shape = x.shape();
        let direct = k.adjoint(&k.forward(&x).unwrap()).unwrap();
        let spectral = multiply_spectrum(&k.gram_spectrum(shape).unwrap(), &x);
        prop_assert!(direct.sub(&spectral).norm() <= 1e-10 * direct.norm().max(x.norm()));

        let diff = FiniteDifference::new(Boundary::Periodic);
        let direct = diff.adjoint(&diff.forward(&x).unwrap()).unwrap();
        let spectral = multiply_spectrum(&diff.gram_spectrum(shape).unwrap(), &x);
        prop_assert!(direct.sub(&spectral).norm() <= 1e-10 * direct.norm().max(x.norm()));
    }

    #[test]
    fn reported_eigenvalues_nonnegative(
        (x, _) in shaped_images(3, 10),
        k in boundary().prop_flat_map(kernel),
        b in boundary(),
    ) {
        let shape = x.shape();
        prop_assert!(k.gram_spectrum(shape).unwrap().eigenvalues().iter().all(|&l| l >= 0.0));
        let omega = FiniteDifference::new(b).gram_spectrum(shape).unwrap();
        prop_assert!(omega.eigenvalues().iter().all(|&o| o >= 0.0));
        prop_assert_eq!(omega.eigenvalues()[0], 0.0);
    }

    #[test]
    fn masked_operators_leave_invalid_coordinates_untouched(
        (x, r) in shaped_images(3, 9),
        k in kernel(Boundary::Masked),
    ) {
        let mask = k.output_mask(x.shape());
        let ax = k.forward(&x).unwrap();
        for (v, &valid) in ax.values().iter().zip(&mask) {
            prop_assert!(valid || *v == 0.0);
        }
        let mut cleaned = r.clone();
        for (v, &valid) in cleaned.values_mut().iter_mut().zip(&mask) {
            if !valid {
                *v = 0.0;
            }
        }
        prop_assert_eq!(k.adjoint(&r).unwrap(), k.adjoint(&cleaned).unwrap());

        let diff = FiniteDifference::new(Boundary::Masked);
        let cx = diff.forward(&x).unwrap();
        for (v, &valid) in cx.values().iter().zip(cx.mask()) {
            prop_assert!(valid || *v == 0.0);
        }
    }

    #[test]
    fn rank_check_identity_blur_without_regularizer(h in 1usize..12, w in 1usize..12, scale in 0.1..10.0f64) {
        let one = ConvolutionKernel::new(1, 1, vec![scale], (0, 0), Boundary::Periodic).unwrap();
        let lambda = one.gram_spectrum((h, w)).unwrap();
        let zero = BccbSpectrum::constant(h, w, 0.0).unwrap();
        let r = split_operator_rank_check(&lambda, &zero).unwrap();
        prop_assert!(r.full_rank);
        prop_assert!(rel_diff(r.min_combined_eigenvalue, scale * scale) < 1e-14);
    }

    #[test]
    fn rank_check_regularizer_alone_is_deficient(h in 1usize..12, w in 1usize..12) {
        prop_assume!(h * w >= 2);
        let omega = FiniteDifference::new(Boundary::Periodic).gram_spectrum((h, w)).unwrap();
        let zero = BccbSpectrum::constant(h, w, 0.0).unwrap();
        let r = split_operator_rank_check(&zero, &omega).unwrap();
        prop_assert!(!r.full_rank);
        prop_assert_eq!(r.argmin_frequency, (0, 0));
        prop_assert_eq!(r.min_combined_eigenvalue, 0.0);
    }

    #[test]
    fn rank_check_lowpass_plus_laplacian_is_full(h in 3usize..12, w in 3usize..12, sigma in 0.3..3.0f64) {
        let lambda = ConvolutionKernel::gaussian(3, sigma, Boundary::Periodic).unwrap().gram_spectrum((h, w)).unwrap();
        let omega = FiniteDifference::new(Boundary::Periodic).gram_spectrum((h, w)).unwrap();
        let direct = lambda.eigenvalues().iter().zip(omega.eigenvalues()).map(|(l, o)| l + o).fold(f64::INFINITY, f64::min);
        let r = split_operator_rank_check(&lambda, &omega).unwrap();
        prop_assert!(r.full_rank);
        prop_assert_eq!(r.min_combined_eigenvalue, direct);
    }
}
