//! Dense transition matrices of the reduced quadratic ADMM recursion, built
//! explicitly on tiny periodic problems. This is the ground truth the
//! per-frequency rate formulas in [`crate::spectral`] are checked against.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};

use crate::algorithms::Problem;
use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::spectral::Case;

/// Largest grid (in pixels) the dense oracle accepts.
pub const MAX_ORACLE_PIXELS: usize = 256;

#[derive(Debug, Clone)]
pub struct DenseTransition {
    pub case: Case,
    pub rho: f64,
    pub eta: f64,
    pub alpha: f64,
    /// Dense `A` (n x n) and `C` (m x n).
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// `s = (rho A'A + eta C'C)^{-1} A'y`
    pub s: DVector<f64>,
    /// `P = (rho - 1)(rho A'A + eta C'C)^{-1} A'`
    pub p: DMatrix<f64>,
    /// `Q = (eta - alpha)(rho A'A + eta C'C)^{-1} C'`
    pub q: DMatrix<f64>,
    /// Split-variable transition `(u, v)_{k+1} = G (u, v)_k + offset`.
    pub g: DMatrix<f64>,
    pub offset: DVector<f64>,
    /// x-error transition for the case: `x_{k+1} - s = H (x_k - s) + const`.
    pub h: DMatrix<f64>,
    /// `None` when the nonsymmetric QR iteration did not converge.
    pub radius_g: Option<f64>,
    pub radius_h: f64,
}

const SCHUR_MAX_ITERATIONS: usize = 100_000;

fn nonsymmetric_radius(m: &DMatrix<f64>) -> Option<f64> {
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITERATIONS)?;
    Some(schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Radius of `scale * hess^{-1} s + shift * I` for SPD `hess` and symmetric
/// `s`, through the similar symmetric matrix `L^{-1} s L^{-T}`, `hess = L L'`.
fn congruent_radius(hess: &DMatrix<f64>, s: &DMatrix<f64>, scale: f64, shift: f64) -> Result<f64> {
    let l = hess
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("rho A'A + eta C'C is not positive definite".into()))?
        .l();
    let singular = || Error::InvalidInput("singular Cholesky factor".into());
    let x = l.solve_lower_triangular(s).ok_or_else(singular)?;
    let m = l.solve_lower_triangular(&x.transpose()).ok_or_else(singular)?;
    let m = (&m + m.transpose()) * 0.5;
    Ok(SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .map(|mu| (scale * mu + shift).abs())
        .fold(0.0, f64::max))
}

fn image_vector(img: &ImageGrid) -> DVector<f64> {
    DVector::from_column_slice(img.values())
}

/// Builds `A`, `C`, `s`, `P`, `Q`, `G` and the case's `H` densely and takes
/// their spectral radii by dense eigendecomposition.
///
/// `H` is always `scale * (rho A'A + eta C'C)^{-1} S + shift * I` with `S`
/// symmetric, so its radius comes from a symmetric eigenproblem.
pub fn dense_transition_oracle(problem: &Problem, case: Case, rho: f64, eta: f64) -> Result<DenseTransition> {
    let alpha = problem.quadratic_alpha()?;
    case.check(rho, eta, alpha)?;
    if !problem.is_periodic() {
        return Err(Error::Unsupported("the dense oracle needs periodic operators".into()));
    }
    let (h, w) = problem.shape();
    let n = h * w;
    if n > MAX_ORACLE_PIXELS {
        return Err(Error::InvalidInput(format!(
            "dense oracle limited to {MAX_ORACLE_PIXELS} pixels, got {h}x{w}"
        )));
    }

    let m = problem.diff().directions().len() * n;
    let mut a = DMatrix::zeros(n, n);
    let mut c = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut e = ImageGrid::zeros(h, w);
        e.values_mut()[j] = 1.0;
        a.set_column(j, &image_vector(&problem.blur().forward(&e)?));
        c.set_column(j, &DVector::from_column_slice(problem.diff().forward(&e)?.values()));
    }

    let ata = a.transpose() * &a;
    let ctc = c.transpose() * &c;
    let hess = &ata * rho + &ctc * eta;
    let inv = hess.clone().try_inverse().ok_or_else(|| {
        Error::InvalidInput("rho A'A + eta C'C is singular".into())
    })?;
    let s = &inv * a.transpose() * image_vector(problem.y());
    let p = &inv * a.transpose() * (rho - 1.0);
    let q = &inv * c.transpose() * (eta - alpha);

    let wu = rho / (rho + 1.0);
    let wv = eta / (eta + alpha);
    let mut g = DMatrix::zeros(n + m, n + m);
    g.view_mut((0, 0), (n, n))
        .copy_from(&(&a * &p * wu + DMatrix::identity(n, n) / (rho + 1.0)));
    g.view_mut((0, n), (n, m)).copy_from(&(&a * &q * wu));
    g.view_mut((n, 0), (m, n)).copy_from(&(&c * &p * wv));
    g.view_mut((n, n), (m, m))
        .copy_from(&(&c * &q * wv + DMatrix::identity(m, m) * (alpha / (eta + alpha))));
    let mut offset = DVector::zeros(n + m);
    offset.rows_mut(0, n).copy_from(&(&a * &s * wu));
    offset.rows_mut(n, m).copy_from(&(&c * &s * wv));

    let id = DMatrix::<f64>::identity(n, n);
    let hmat = match case {
        Case::SplitBregman => &q * &c * wv + &id * (alpha / (eta + alpha)),
        Case::AugmentedLagrangian => &p * &a * wu + &id / (rho + 1.0),
        Case::Matched => (&p * &a + &q * &c) * wv + &id * (alpha / (eta + alpha)),
    };
    // H = scale * hess^{-1} S + shift * I for each case
    let (sym, scale, shift) = match case {
        Case::SplitBregman => (ctc.clone(), wv * (eta - alpha), alpha / (eta + alpha)),
        Case::AugmentedLagrangian => (ata.clone(), wu * (rho - 1.0), 1.0 / (rho + 1.0)),
        Case::Matched => (&ata * (rho - 1.0) + &ctc * (eta - alpha), wv, alpha / (eta + alpha)),
    };
    let radius_h = congruent_radius(&hess, &sym, scale, shift)?;

    Ok(DenseTransition {
        case,
        rho,
        eta,
        alpha,
        radius_g: nonsymmetric_radius(&g),
        radius_h,
        a,
        c,
        s,
        p,
        q,
        g,
        offset,
        h: hmat,
    })
}
