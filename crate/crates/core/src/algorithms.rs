//! Outer iterations: split Bregman, two-split ADMM, the simplified ADMM with
//! the `u`-dual eliminated, and the fully reduced quadratic recursion.
//!
//! All four share one x-update shape, `(rho A'A + eta C'C) x = rhs`, with
//! `rho = 1` for split Bregman. Update order is exactly x, u, v, d, e.

use std::fmt;
use std::str::FromStr;

use crate::error::{require_positive, Error, Result};
use crate::grid::{GradientField, ImageGrid};
use crate::inner::{
    pcg_solve, CirculantPreconditioner, CirculantSolver, InnerMode, InnerSolveConfig,
    PreconditionerKind,
};
use crate::operators::{
    split_operator_rank_check, BccbSpectrum, Boundary, ConvolutionKernel, FiniteDifference,
    RankReport,
};
use crate::prox::Potential;
use crate::trace::{metrics, MetricRecord, MetricTrace, Reference};

/// Runs abort once the cost exceeds this multiple of the initial cost.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// `min 0.5 ||y - A x||^2 + phi(C x)` with its precomputed periodic spectra.
#[derive(Debug, Clone)]
pub struct Problem {
    y: ImageGrid,
    blur: ConvolutionKernel,
    diff: FiniteDifference,
    potential: Potential,
    lambda: BccbSpectrum,
    omega: BccbSpectrum,
    rank: RankReport,
}

impl Problem {
    pub fn new(
        y: ImageGrid,
        blur: ConvolutionKernel,
        diff: FiniteDifference,
        potential: Potential,
    ) -> Result<Self> {
        potential.validate()?;
        let shape = y.shape();
        let lambda = blur.gram_spectrum(shape)?;
        let omega = diff.gram_spectrum(shape)?;
        let rank = split_operator_rank_check(&lambda, &omega)?;
        Ok(Self {
            y,
            blur,
            diff,
            potential,
            lambda,
            omega,
            rank,
        })
    }

    pub fn y(&self) -> &ImageGrid {
        &self.y
    }

    pub fn blur(&self) -> &ConvolutionKernel {
        &self.blur
    }

    pub fn diff(&self) -> &FiniteDifference {
        &self.diff
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn shape(&self) -> (usize, usize) {
        self.y.shape()
    }

    /// Eigenvalues of `A'A` (periodic model).
    pub fn lambda(&self) -> &BccbSpectrum {
        &self.lambda
    }

    /// Eigenvalues of `C'C` (periodic model; approximate when masked).
    pub fn omega(&self) -> &BccbSpectrum {
        &self.omega
    }

    pub fn rank(&self) -> &RankReport {
        &self.rank
    }

    /// False when `S = [A; C]` is numerically rank deficient.
    pub fn convergence_guaranteed(&self) -> bool {
        self.rank.full_rank
    }

    pub fn is_periodic(&self) -> bool {
        self.blur.boundary() == Boundary::Periodic && self.diff.boundary() == Boundary::Periodic
    }

    pub fn with_potential(&self, potential: Potential) -> Result<Self> {
        potential.validate()?;
        Ok(Self {
            potential,
            ..self.clone()
        })
    }

    pub fn quadratic_alpha(&self) -> Result<f64> {
        match self.potential {
            Potential::Quadratic { alpha } => Ok(alpha),
            other => Err(Error::Unsupported(format!(
                "operation requires a quadratic potential, problem uses {other}"
            ))),
        }
    }

    /// `0.5 ||y - A x||^2 + phi(C x)` with the true (possibly masked) operators.
    pub fn cost(&self, x: &ImageGrid) -> Result<f64> {
        let residual = self.y.sub(&self.blur.forward(x)?);
        Ok(0.5 * residual.norm_sq() + self.potential.eval(&self.diff.forward(x)?))
    }

    /// `(rho A'A + eta C'C) x` with the true operators.
    pub fn apply_normal(&self, rho: f64, eta: f64, x: &ImageGrid) -> Result<ImageGrid> {
        let ata = self.blur.adjoint(&self.blur.forward(x)?)?;
        let ctc = self.diff.adjoint(&self.diff.forward(x)?)?;
        Ok(ata.lincomb(rho, &ctc, eta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    SplitBregman,
    #[default]
    Admm2,
    Admm2Simplified,
    QuadraticClosedForm,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::SplitBregman => "sb",
            Algorithm::Admm2 => "admm2",
            Algorithm::Admm2Simplified => "admm2_simplified",
            Algorithm::QuadraticClosedForm => "quadratic_closed_form",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sb" | "split_bregman" => Ok(Algorithm::SplitBregman),
            "admm2" | "admm" => Ok(Algorithm::Admm2),
            "admm2_simplified" | "simplified" => Ok(Algorithm::Admm2Simplified),
            "quadratic_closed_form" | "closed_form" => Ok(Algorithm::QuadraticClosedForm),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Starting point for `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XInit {
    #[default]
    Zero,
    /// Start from the data `y`.
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterConfig {
    pub rho: f64,
    pub eta: f64,
    pub max_iterations: usize,
    pub inner: InnerSolveConfig,
    pub algorithm: Algorithm,
    pub x_init: XInit,
}

impl OuterConfig {
    pub fn new(rho: f64, eta: f64, max_iterations: usize) -> Self {
        Self {
            rho,
            eta,
            max_iterations,
            inner: InnerSolveConfig::default(),
            algorithm: Algorithm::Admm2,
            x_init: XInit::Zero,
        }
    }

    pub fn with_inner(mut self, inner: InnerSolveConfig) -> Self {
        self.inner = inner;
        self
    }

    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("rho", self.rho)?;
        require_positive("eta", self.eta)?;
        self.inner.validate()
    }
}

/// The iterate `(x, u, v, d, e)` and the number of completed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: ImageGrid,
    /// Split variable for `A x`.
    pub u: ImageGrid,
    /// Split variable for `C x`.
    pub v: GradientField,
    /// Scaled dual of `u = A x`.
    pub d: ImageGrid,
    /// Scaled dual of `v = C x`.
    pub e: GradientField,
    pub k: usize,
}

impl SolverState {
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.u.is_finite() && self.v.is_finite() && self.d.is_finite() && self.e.is_finite()
    }

    /// Largest absolute coordinate difference in `x`, `v` and `e`.
    pub fn max_xve_diff(&self, other: &SolverState) -> f64 {
        self.x
            .max_abs_diff(&other.x)
            .max(self.v.max_abs_diff(&other.v))
            .max(self.e.max_abs_diff(&other.e))
    }

    /// A state sitting at the optimum `x_hat`: split variables equal to
    /// `A x_hat`, `C x_hat` and duals that satisfy the optimality conditions
    /// of the u- and v-subproblems. Needs a differentiable potential.
    pub fn at_solution(problem: &Problem, x_hat: &ImageGrid, rho: f64, eta: f64) -> Result<Self> {
        require_positive("rho", rho)?;
        require_positive("eta", eta)?;
        let u = problem.blur.forward(x_hat)?;
        let v = problem.diff.forward(x_hat)?;
        let d = problem.y.sub(&u).scaled(1.0 / rho);
        let grad: Vec<f64> = match *problem.potential() {
            Potential::Quadratic { alpha } => v.values().iter().map(|t| alpha * t).collect(),
            Potential::Huber { alpha, threshold } => v.values().iter().map(|t| alpha * t.clamp(-threshold, threshold)).collect(),
            Potential::Fair { alpha, threshold } => v.values().iter().map(|t| alpha * t / (1.0 + t.abs() / threshold)).collect(),
            Potential::L1 { .. } => {
                return Err(Error::Unsupported("solution state for the nonsmooth l1 potential".into()))
            }
        };
        let e = v.with_values(grad).scaled(-1.0 / eta);
        Ok(Self {
            x: x_hat.clone(),
            u,
            v,
            d,
            e,
            k: 0,
        })
    }
}

/// `x0` per `x_init`, `u0 = A x0`, `v0 = C x0`, `d0 = (y - u0)/rho`, and
/// `e0 = -(alpha/eta) v0` for the quadratic potential (zero otherwise).
pub fn canonical_init(problem: &Problem, rho: f64, eta: f64, x_init: XInit) -> Result<SolverState> {
    require_positive("rho", rho)?;
    require_positive("eta", eta)?;
    let (h, w) = problem.shape();
    let x = match x_init {
        XInit::Zero => ImageGrid::zeros(h, w),
        XInit::Data => problem.y.clone(),
    };
    let u = problem.blur.forward(&x)?;
    let v = problem.diff.forward(&x)?;
    let d = problem.y.sub(&u).scaled(1.0 / rho);
    let e = match problem.potential {
        Potential::Quadratic { alpha } => v.scaled(-alpha / eta),
        _ => v.zeros_like(),
    };
    Ok(SolverState { x, u, v, d, e, k: 0 })
}

enum Backend {
    Exact(CirculantSolver),
    Pcg(Option<CirculantPreconditioner>),
}

/// Solver for `(rho A'A + eta C'C) x = rhs` configured once per run.
pub struct XSolver<'a> {
    problem: &'a Problem,
    rho: f64,
    eta: f64,
    config: InnerSolveConfig,
    backend: Backend,
}

impl<'a> XSolver<'a> {
    pub fn new(problem: &'a Problem, rho: f64, eta: f64, config: InnerSolveConfig) -> Result<Self> {
        config.validate()?;
        let backend = match config.mode {
            InnerMode::CirculantExact => {
                if !problem.is_periodic() {
                    return Err(Error::Unsupported(
                        "exact circulant x-updates need periodic blur and difference operators; use pcg".into(),
                    ));
                }
                Backend::Exact(CirculantSolver::new(problem.lambda(), problem.omega(), rho, eta)?)
            }
            InnerMode::Pcg => Backend::Pcg(match config.preconditioner {
                PreconditionerKind::Circulant => Some(CirculantPreconditioner::new(
                    problem.lambda(),
                    problem.omega(),
                    rho,
                    eta,
                )?),
                PreconditionerKind::None => None,
            }),
        };
        Ok(Self {
            problem,
            rho,
            eta,
            config,
            backend,
        })
    }

    /// Returns the new iterate and the relative residual `||rhs - H x|| / ||rhs||`.
    pub fn solve(&self, rhs: &ImageGrid, warm_start: &ImageGrid) -> Result<(ImageGrid, f64)> {
        let hessian = |x: &ImageGrid| self.problem.apply_normal(self.rho, self.eta, x);
        match &self.backend {
            Backend::Exact(solver) => {
                let x = solver.solve(rhs)?;
                let scale = rhs.norm();
                let res = rhs.sub(&hessian(&x)?).norm();
                Ok((x, if scale > 0.0 { res / scale } else { res }))
            }
            Backend::Pcg(pre) => {
                let out = pcg_solve(hessian, pre.as_ref(), rhs, &self.config, warm_start)?;
                let res = out.final_relative_residual();
                Ok((out.x, res))
            }
        }
    }
}

/// Stateless step evaluator for one algorithm and parameter pair.
pub struct Stepper<'a> {
    problem: &'a Problem,
    algorithm: Algorithm,
    rho: f64,
    eta: f64,
    xsolver: XSolver<'a>,
}

/// Diagnostics of a single outer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub inner_residual: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a Problem, algorithm: Algorithm, rho: f64, eta: f64, inner: InnerSolveConfig) -> Result<Self> {
        require_positive("rho", rho)?;
        require_positive("eta", eta)?;
        if algorithm == Algorithm::QuadraticClosedForm {
            problem.quadratic_alpha()?;
        }
        // Split Bregman's x-update carries the data term with unit weight.
        let x_rho = if algorithm == Algorithm::SplitBregman { 1.0 } else { rho };
        let xsolver = XSolver::new(problem, x_rho, eta, inner)?;
        Ok(Self {
            problem,
            algorithm,
            rho,
            eta,
            xsolver,
        })
    }

    pub fn step(&self, s: &SolverState) -> Result<(SolverState, StepInfo)> {
        let out = match self.algorithm {
            Algorithm::SplitBregman => self.sb(s),
            Algorithm::Admm2 => self.admm2(s),
            Algorithm::Admm2Simplified => self.admm2_simplified(s),
            Algorithm::QuadraticClosedForm => self.closed_form(s),
        }
        .map_err(|e| e.at_iteration(s.k + 1))?;
        if !out.0.is_finite() {
            return Err(Error::NonFinite {
                context: format!("{} state", self.algorithm),
            }
            .at_iteration(s.k + 1));
        }
        Ok(out)
    }

    fn v_and_e(&self, cx: &GradientField, e: &GradientField) -> Result<(GradientField, GradientField)> {
        let v = self.problem.potential.prox(&cx.sub(e), self.eta)?;
        let e_next = e.sub(cx).add(&v);
        Ok((v, e_next))
    }

    fn sb(&self, s: &SolverState) -> Result<(SolverState, StepInfo)> {
        let p = self.problem;
        let rhs = p.blur.adjoint(&p.y)?.lincomb(1.0, &p.diff.adjoint(&s.v.add(&s.e))?, self.eta);
        let (x, inner_residual) = self.xsolver.solve(&rhs, &s.x)?;
        let cx = p.diff.forward(&x)?;
        let (v, e) = self.v_and_e(&cx, &s.e)?;
        let state = SolverState {
            x,
            u: s.u.clone(),
            v,
            d: s.d.clone(),
            e,
            k: s.k + 1,
        };
        Ok((state, StepInfo { inner_residual }))
    }

    fn admm2(&self, s: &SolverState) -> Result<(SolverState, StepInfo)> {
        let p = self.problem;
        let (rho, eta) = (self.rho, self.eta);
        let rhs = p
            .blur
            .adjoint(&s.u.add(&s.d))?
            .lincomb(rho, &p.diff.adjoint(&s.v.add(&s.e))?, eta);
        let (x, inner_residual) = self.xsolver.solve(&rhs, &s.x)?;
        let ax = p.blur.forward(&x)?;
        let u = ax.sub(&s.d).lincomb(rho / (rho + 1.0), &p.y, 1.0 / (rho + 1.0));
        let cx = p.diff.forward(&x)?;
        let v = p.potential.prox(&cx.sub(&s.e), eta)?;
        let d = s.d.sub(&ax).add(&u);
        let e = s.e.sub(&cx).add(&v);
        Ok((SolverState { x, u, v, d, e, k: s.k + 1 }, StepInfo { inner_residual }))
    }

    fn admm2_simplified(&self, s: &SolverState) -> Result<(SolverState, StepInfo)> {
        let p = self.problem;
        let (rho, eta) = (self.rho, self.eta);
        let data = p.y.lincomb(1.0, &s.u, rho - 1.0);
        let rhs = p.blur.adjoint(&data)?.lincomb(1.0, &p.diff.adjoint(&s.v.add(&s.e))?, eta);
        let (x, inner_residual) = self.xsolver.solve(&rhs, &s.x)?;
        let ax = p.blur.forward(&x)?;
        let u = ax.lincomb(rho / (rho + 1.0), &s.u, 1.0 / (rho + 1.0));
        let cx = p.diff.forward(&x)?;
        let (v, e) = self.v_and_e(&cx, &s.e)?;
        // d is redundant here; kept consistent with u + rho d = y.
        let d = p.y.sub(&u).scaled(1.0 / rho);
        Ok((SolverState { x, u, v, d, e, k: s.k + 1 }, StepInfo { inner_residual }))
    }

    fn closed_form(&self, s: &SolverState) -> Result<(SolverState, StepInfo)> {
        let p = self.problem;
        let (rho, eta) = (self.rho, self.eta);
        let alpha = p.quadratic_alpha()?;
        let data = p.y.lincomb(1.0, &s.u, rho - 1.0);
        let rhs = p.blur.adjoint(&data)?.lincomb(1.0, &p.diff.adjoint(&s.v)?, eta - alpha);
        let (x, inner_residual) = self.xsolver.solve(&rhs, &s.x)?;
        let u = p.blur.forward(&x)?.lincomb(rho / (rho + 1.0), &s.u, 1.0 / (rho + 1.0));
        let v = p.diff.forward(&x)?.lincomb(eta / (eta + alpha), &s.v, alpha / (eta + alpha));
        let d = p.y.sub(&u).scaled(1.0 / rho);
        let e = v.scaled(-alpha / eta);
        Ok((SolverState { x, u, v, d, e, k: s.k + 1 }, StepInfo { inner_residual }))
    }
}

/// One split Bregman step.
pub fn sb_step(state: &SolverState, problem: &Problem, eta: f64, inner: &InnerSolveConfig) -> Result<SolverState> {
    Ok(Stepper::new(problem, Algorithm::SplitBregman, 1.0, eta, *inner)?.step(state)?.0)
}

/// One two-split ADMM step.
pub fn admm2_step(state: &SolverState, problem: &Problem, rho: f64, eta: f64, inner: &InnerSolveConfig) -> Result<SolverState> {
    Ok(Stepper::new(problem, Algorithm::Admm2, rho, eta, *inner)?.step(state)?.0)
}

/// One simplified two-split ADMM step (assumes the canonical `d` initialization).
pub fn admm2_simplified_step(
    state: &SolverState,
    problem: &Problem,
    rho: f64,
    eta: f64,
    inner: &InnerSolveConfig,
) -> Result<SolverState> {
    Ok(Stepper::new(problem, Algorithm::Admm2Simplified, rho, eta, *inner)?.step(state)?.0)
}

/// One step of the reduced quadratic recursion with an exact circulant x-update.
pub fn quadratic_closed_form_step(state: &SolverState, problem: &Problem, rho: f64, eta: f64) -> Result<SolverState> {
    Ok(Stepper::new(problem, Algorithm::QuadraticClosedForm, rho, eta, InnerSolveConfig::exact())?
        .step(state)?
        .0)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: MetricTrace,
    pub state: SolverState,
}

fn record(problem: &Problem, state: &SolverState, reference: Option<&Reference>, inner: Option<f64>) -> Result<(MetricRecord, bool)> {
    let cost = problem.cost(&state.x)?;
    let (rel, rmsd, abs) = match reference {
        Some(r) => {
            let (rel, rmsd, abs) = metrics(&state.x, cost, r)?;
            (Some(rel), Some(rmsd), abs)
        }
        None => (None, None, false),
    };
    Ok((
        MetricRecord {
            iter: state.k,
            cost,
            rel_cost_err: rel,
            rmsd,
            inner_residual: inner,
        },
        abs,
    ))
}

/// Runs `config.max_iterations` outer steps from the canonical initialization.
///
/// The trace holds the initial point plus one record per step. Aborts on a
/// non-finite cost or when the cost exceeds `DIVERGENCE_FACTOR` times the
/// initial cost.
pub fn run(problem: &Problem, config: &OuterConfig, reference: Option<&Reference>) -> Result<RunOutcome> {
    config.validate()?;
    let stepper = Stepper::new(problem, config.algorithm, config.rho, config.eta, config.inner)?;
    let mut state = canonical_init(problem, config.rho, config.eta, config.x_init)?;
    let (first, absolute) = record(problem, &state, reference, None)?;
    let limit = DIVERGENCE_FACTOR * first.cost.max(f64::MIN_POSITIVE);
    let mut trace = MetricTrace {
        records: Vec::with_capacity(config.max_iterations + 1),
        absolute_cost_error: absolute,
    };
    trace.records.push(first);
    for _ in 0..config.max_iterations {
        let (next, info) = stepper.step(&state)?;
        state = next;
        let (rec, _) = record(problem, &state, reference, Some(info.inner_residual))?;
        if !rec.cost.is_finite() {
            return Err(Error::NonFinite {
                context: format!("cost at iteration {}", state.k),
            });
        }
        if rec.cost > limit {
            return Err(Error::Diverged {
                iteration: state.k,
                cost: rec.cost,
                limit,
            });
        }
        trace.records.push(rec);
    }
    Ok(RunOutcome { trace, state })
}
