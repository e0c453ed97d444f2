//! Solvers for the x-update normal equations `(rho A'A + eta C'C) x = rhs`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{require_positive, Error, Result};
use crate::fft::Fft2;
use crate::grid::ImageGrid;
use crate::operators::BccbSpectrum;

/// Circulant preconditioner eigenvalues are floored at this fraction of their maximum.
pub const PRECONDITIONER_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerMode {
    /// Per-frequency division; exact only for periodic operators.
    CirculantExact,
    #[default]
    Pcg,
}

impl fmt::Display for InnerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InnerMode::CirculantExact => "exact",
            InnerMode::Pcg => "pcg",
        })
    }
}

impl FromStr for InnerMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" | "circulant" | "circulant_exact" => Ok(InnerMode::CirculantExact),
            "pcg" | "cg" => Ok(InnerMode::Pcg),
            other => Err(Error::Config(format!("unknown inner mode `{other}` (expected exact or pcg)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PreconditionerKind {
    None,
    #[default]
    Circulant,
}

impl FromStr for PreconditionerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "identity" => Ok(PreconditionerKind::None),
            "circulant" => Ok(PreconditionerKind::Circulant),
            other => Err(Error::Config(format!("unknown preconditioner `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolveConfig {
    pub mode: InnerMode,
    pub pcg_iterations: usize,
    /// Relative residual stopping tolerance; 0 runs exactly `pcg_iterations` steps.
    pub pcg_tolerance: f64,
    pub preconditioner: PreconditionerKind,
}

impl Default for InnerSolveConfig {
    fn default() -> Self {
        Self {
            mode: InnerMode::Pcg,
            pcg_iterations: 3,
            pcg_tolerance: 0.0,
            preconditioner: PreconditionerKind::Circulant,
        }
    }
}

impl InnerSolveConfig {
    pub fn exact() -> Self {
        Self {
            mode: InnerMode::CirculantExact,
            ..Self::default()
        }
    }

    pub fn pcg(iterations: usize) -> Self {
        Self {
            pcg_iterations: iterations,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == InnerMode::Pcg && self.pcg_iterations == 0 {
            return Err(Error::InvalidParameter {
                name: "pcg_iterations",
                value: 0.0,
                constraint: "must be >= 1 in pcg mode",
            });
        }
        if !(self.pcg_tolerance >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "pcg_tolerance",
                value: self.pcg_tolerance,
                constraint: "must be >= 0",
            });
        }
        Ok(())
    }
}

fn hessian_denominators(lambda: &BccbSpectrum, omega: &BccbSpectrum, rho: f64, eta: f64) -> Result<Vec<f64>> {
    require_positive("rho", rho)?;
    require_positive("eta", eta)?;
    lambda.ensure_same_shape(omega)?;
    Ok(lambda
        .eigenvalues()
        .iter()
        .zip(omega.eigenvalues())
        .map(|(l, o)| rho * l + eta * o)
        .collect())
}

fn divide_in_frequency(fft: &Fft2, rhs: &ImageGrid, denominators: &[f64]) -> ImageGrid {
    let mut spec = fft.forward_real(rhs.values());
    spec.iter_mut().zip(denominators).for_each(|(c, &d)| *c /= d);
    let values = fft.inverse_real(spec);
    ImageGrid::new(rhs.height(), rhs.width(), values).expect("finite division result")
}

/// Exact solve of `(rho A'A + eta C'C) x = rhs` for BCCB operators.
pub fn circulant_solve(
    lambda: &BccbSpectrum,
    omega: &BccbSpectrum,
    rho: f64,
    eta: f64,
    rhs: &ImageGrid,
) -> Result<ImageGrid> {
    CirculantSolver::new(lambda, omega, rho, eta)?.solve(rhs)
}

/// Reusable per-frequency inverse of `rho A'A + eta C'C`.
#[derive(Debug, Clone)]
pub struct CirculantSolver {
    fft: Fft2,
    denominators: Vec<f64>,
}

impl CirculantSolver {
    pub fn new(lambda: &BccbSpectrum, omega: &BccbSpectrum, rho: f64, eta: f64) -> Result<Self> {
        let denominators = hessian_denominators(lambda, omega, rho, eta)?;
        let max = denominators.iter().copied().fold(0.0, f64::max);
        // Relative test so the threshold tracks the scale of (rho, eta).
        if let Some(k) = denominators.iter().position(|&d| !(d > 1e-12 * max)) {
            let (freq_row, freq_col) = lambda.frequency(k);
            return Err(Error::SingularHessian {
                freq_row,
                freq_col,
                value: denominators[k],
            });
        }
        Ok(Self {
            fft: Fft2::new(lambda.height(), lambda.width()),
            denominators,
        })
    }

    pub fn solve(&self, rhs: &ImageGrid) -> Result<ImageGrid> {
        rhs.ensure_shape(self.fft.shape())?;
        Ok(divide_in_frequency(&self.fft, rhs, &self.denominators))
    }

    /// `H x` evaluated through the spectrum.
    pub fn apply(&self, x: &ImageGrid) -> Result<ImageGrid> {
        x.ensure_shape(self.fft.shape())?;
        let mut spec: Vec<Complex64> = self.fft.forward_real(x.values());
        spec.iter_mut().zip(&self.denominators).for_each(|(c, &d)| *c *= d);
        Ok(ImageGrid::new(x.height(), x.width(), self.fft.inverse_real(spec)).expect("finite"))
    }
}

/// Inverse of the periodic surrogate `rho Lambda + eta Omega`, floored at
/// `PRECONDITIONER_FLOOR * max` so near-null surrogate frequencies stay bounded.
#[derive(Debug, Clone)]
pub struct CirculantPreconditioner {
    fft: Fft2,
    denominators: Vec<f64>,
}

impl CirculantPreconditioner {
    pub fn new(lambda: &BccbSpectrum, omega: &BccbSpectrum, rho: f64, eta: f64) -> Result<Self> {
        let mut denominators = hessian_denominators(lambda, omega, rho, eta)?;
        let floor = PRECONDITIONER_FLOOR * denominators.iter().copied().fold(0.0, f64::max);
        denominators.iter_mut().for_each(|d| *d = d.max(floor));
        Ok(Self {
            fft: Fft2::new(lambda.height(), lambda.width()),
            denominators,
        })
    }

    pub fn apply(&self, r: &ImageGrid) -> ImageGrid {
        divide_in_frequency(&self.fft, r, &self.denominators)
    }
}

#[derive(Debug, Clone)]
pub struct PcgOutcome {
    pub x: ImageGrid,
    pub iterations: usize,
    /// `||b - H x_k|| / ||b||` for k = 0..=iterations (the first entry is the warm start).
    pub residual_history: Vec<f64>,
    /// `0.5 x'Hx - b'x`, which equals `0.5 ||x - x*||_H^2` up to a constant.
    pub objective_history: Vec<f64>,
}

impl PcgOutcome {
    pub fn final_relative_residual(&self) -> f64 {
        *self.residual_history.last().expect("nonempty history")
    }
}

/// Preconditioned conjugate gradients from `warm_start`.
///
/// Runs `config.pcg_iterations` steps, stopping early only when the relative
/// residual drops to `config.pcg_tolerance` or becomes exactly zero.
pub fn pcg_solve<H>(
    hessian: H,
    preconditioner: Option<&CirculantPreconditioner>,
    rhs: &ImageGrid,
    config: &InnerSolveConfig,
    warm_start: &ImageGrid,
) -> Result<PcgOutcome>
where
    H: Fn(&ImageGrid) -> Result<ImageGrid>,
{
    config.validate()?;
    warm_start.ensure_shape(rhs.shape())?;
    let precondition = |r: &ImageGrid| match preconditioner {
        Some(p) => p.apply(r),
        None => r.clone(),
    };
    let b_norm = rhs.norm();
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };

    let mut x = warm_start.clone();
    let mut r = rhs.sub(&hessian(&x)?);
    let objective = |x: &ImageGrid, r: &ImageGrid| -0.5 * x.dot(&rhs.add(r));
    let mut residual_history = vec![r.norm() / scale];
    let mut objective_history = vec![objective(&x, &r)];

    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut iterations = 0;

    for step in 0..config.pcg_iterations {
        if residual_history[step] == 0.0 || residual_history[step] <= config.pcg_tolerance {
            break;
        }
        let hp = hessian(&p)?;
        let curvature = p.dot(&hp);
        if !(curvature > 0.0) {
            return Err(Error::CgBreakdown { step, curvature });
        }
        let step_len = rz / curvature;
        x.axpy(step_len, &p);
        r.axpy(-step_len, &hp);
        if !x.is_finite() || !r.is_finite() {
            return Err(Error::NonFinite {
                context: format!("pcg step {step}"),
            });
        }
        iterations += 1;
        residual_history.push(r.norm() / scale);
        objective_history.push(objective(&x, &r));

        z = precondition(&r);
        let rz_next = r.dot(&z);
        let beta = rz_next / rz;
        p = z.lincomb(1.0, &p, beta);
        rz = rz_next;
    }

    Ok(PcgOutcome {
        x,
        iterations,
        residual_history,
        objective_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{Boundary, ConvolutionKernel, FiniteDifference};

    #[test]
    fn scaled_identity_solve() {
        let one = BccbSpectrum::constant(3, 4, 1.0).unwrap();
        let zero = BccbSpectrum::constant(3, 4, 0.0).unwrap();
        let rhs = ImageGrid::from_fn(3, 4, |r, c| (r as f64) - 0.5 * c as f64);
        let x = circulant_solve(&one, &zero, 2.0, 1.0, &rhs).unwrap();
        assert!(x.max_abs_diff(&rhs.scaled(0.5)) < 1e-15);
        let z = circulant_solve(&one, &zero, 2.0, 1.0, &ImageGrid::zeros(3, 4)).unwrap();
        assert_eq!(z, ImageGrid::zeros(3, 4));
    }

    #[test]
    fn two_tap_solve_matches_dense_solve() {
        let shape = (1, 4);
        let k = ConvolutionKernel::new(1, 2, vec![0.5, 0.5], (0, 0), Boundary::Periodic).unwrap();
        let c = FiniteDifference::new(Boundary::Periodic);
        let lambda = k.gram_spectrum(shape).unwrap();
        let omega = c.gram_spectrum(shape).unwrap();
        let rhs = ImageGrid::new(1, 4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let x = circulant_solve(&lambda, &omega, 1.0, 1.0, &rhs).unwrap();

        // Dense Hessian A'A + C'C built column by column, solved with nalgebra.
        let mut h = nalgebra::DMatrix::<f64>::zeros(4, 4);
        for j in 0..4 {
            let mut e = ImageGrid::zeros(1, 4);
            e.values_mut()[j] = 1.0;
            let col = k
                .adjoint(&k.forward(&e).unwrap())
                .unwrap()
                .add(&c.adjoint(&c.forward(&e).unwrap()).unwrap());
            for i in 0..4 {
                h[(i, j)] = col.values()[i];
            }
        }
        let dense = h.lu().solve(&nalgebra::DVector::from_vec(rhs.values().to_vec())).unwrap();
        for i in 0..4 {
            assert!((x.values()[i] - dense[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_hessian_names_frequency() {
        let lambda = BccbSpectrum::constant(2, 2, 0.0).unwrap();
        let omega = FiniteDifference::new(Boundary::Periodic).gram_spectrum((2, 2)).unwrap();
        match circulant_solve(&lambda, &omega, 1.0, 1.0, &ImageGrid::zeros(2, 2)) {
            Err(Error::SingularHessian { freq_row: 0, freq_col: 0, .. }) => {}
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn pcg_rejects_zero_iterations() {
        let cfg = InnerSolveConfig::pcg(0);
        let rhs = ImageGrid::filled(2, 2, 1.0);
        assert!(pcg_solve(|x: &ImageGrid| Ok(x.clone()), None, &rhs, &cfg, &rhs).is_err());
    }

    #[test]
    fn pcg_reports_breakdown() {
        let cfg = InnerSolveConfig::pcg(5);
        let rhs = ImageGrid::filled(2, 2, 1.0);
        let res = pcg_solve(|x: &ImageGrid| Ok(x.scaled(-1.0)), None, &rhs, &cfg, &ImageGrid::zeros(2, 2));
        assert!(matches!(res, Err(Error::CgBreakdown { step: 0, .. })));
    }
}
