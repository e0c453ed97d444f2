//! Test problems, reference solutions and the penalty-grid sweep.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::algorithms::{run, Algorithm, Problem, SolverState, Stepper, XInit, canonical_init};
use crate::config::{ExperimentConfig, ImageSource, Scalar};
use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::inner::{InnerMode, InnerSolveConfig};
use crate::io::{read_image, write_pgm};
use crate::operators::{ConvolutionKernel, FiniteDifference};
use crate::par::{map_jobs, Execution};
use crate::trace::{MetricTrace, Reference};

pub use crate::trace::metrics;

/// Largest problem (in pixels) solved by dense Cholesky in
/// [`ReferenceMethod::Auto`].
pub const DENSE_REFERENCE_PIXELS: usize = 64 * 64;

/// Outer-iteration cap of the long-run reference path.
pub const LONG_RUN_ITERATIONS: usize = 2000;

/// PCG steps per outer iteration in the long-run reference path.
pub const LONG_RUN_PCG_ITERATIONS: usize = 50;

/// Relative normal-equation residual the quadratic reference must reach.
pub const REFERENCE_RESIDUAL: f64 = 1e-10;

// (intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)
const ELLIPSES: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Modified Shepp-Logan head phantom sampled at pixel centers, values in `[0, 1]`.
pub fn phantom(size: usize) -> ImageGrid {
    let n = size as f64;
    ImageGrid::from_fn(size, size, |r, c| {
        let x = (2.0 * c as f64 + 1.0) / n - 1.0;
        let y = 1.0 - (2.0 * r as f64 + 1.0) / n;
        let mut v = 0.0;
        for &(a0, a, b, x0, y0, deg) in &ELLIPSES {
            let (s, co) = deg.to_radians().sin_cos();
            let (dx, dy) = (x - x0, y - y0);
            let xr = dx * co + dy * s;
            let yr = -dx * s + dy * co;
            if (xr / a).powi(2) + (yr / b).powi(2) <= 1.0 {
                v += a0;
            }
        }
        f64::clamp(v, 0.0, 1.0)
    })
}

/// FNV-1a over the little-endian bit patterns of the pixel values.
pub fn checksum(img: &ImageGrid) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in img.values() {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub problem: Problem,
    pub truth: ImageGrid,
}

pub fn load_truth(config: &ExperimentConfig) -> Result<ImageGrid> {
    match &config.image {
        ImageSource::Phantom { size } => Ok(phantom(*size)),
        ImageSource::File(path) => read_image(path),
    }
}

/// `y = A truth + n` with `n ~ N(0, noise_std^2)` drawn from a seeded ChaCha stream.
pub fn observe(truth: &ImageGrid, blur: &ConvolutionKernel, noise_std: f64, seed: u64) -> Result<ImageGrid> {
    let mut y = blur.forward(truth)?;
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std)
            .map_err(|e| Error::InvalidInput(format!("noise distribution: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in y.values_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(y)
}

pub fn make_problem(config: &ExperimentConfig) -> Result<Generated> {
    config.validate()?;
    let truth = load_truth(config)?;
    let blur = ConvolutionKernel::gaussian(config.psf_size, config.psf_sigma, config.blur_boundary)?;
    let y = observe(&truth, &blur, config.noise_std, config.seed)?;
    let problem = Problem::new(y, blur, FiniteDifference::new(config.mask_mode), config.potential()?)?;
    Ok(Generated { problem, truth })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceMethod {
    /// Circulant solve when periodic, dense Cholesky up to
    /// [`DENSE_REFERENCE_PIXELS`], long run otherwise.
    #[default]
    Auto,
    Circulant,
    Dense,
    LongRun,
}

/// `||A'y - (A'A + alpha C'C) x|| / ||A'y||`.
pub fn normal_equation_residual(problem: &Problem, x: &ImageGrid) -> Result<f64> {
    let alpha = problem.quadratic_alpha()?;
    let b = problem.blur().adjoint(problem.y())?;
    let r = b.sub(&problem.apply_normal(1.0, alpha, x)?);
    let scale = b.norm();
    Ok(if scale > 0.0 { r.norm() / scale } else { r.norm() })
}

fn dense_reference(problem: &Problem, alpha: f64) -> Result<ImageGrid> {
    let (h, w) = problem.shape();
    let n = h * w;
    let columns = (0..n).collect::<Vec<_>>();
    let cols = map_jobs(&columns, Execution::default(), |&j| {
        let mut e = ImageGrid::zeros(h, w);
        e.values_mut()[j] = 1.0;
        problem.apply_normal(1.0, alpha, &e)
    });
    let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
    let hess = faer::Mat::<f64>::from_fn(n, n, |i, j| cols[j].values()[i]);
    let rank = problem.rank();
    let chol = hess.cholesky(faer::Side::Lower).map_err(|_| Error::RankDeficient {
        freq_row: rank.argmin_frequency.0,
        freq_col: rank.argmin_frequency.1,
    })?;
    let b = problem.blur().adjoint(problem.y())?;
    let rhs = faer::Mat::<f64>::from_fn(n, 1, |i, _| b.values()[i]);
    let x = faer::prelude::SpSolver::solve(&chol, &rhs);
    ImageGrid::new(h, w, (0..n).map(|i| x.read(i, 0)).collect())
}

fn long_run_reference(problem: &Problem, alpha: f64, stop_at_residual: bool) -> Result<ImageGrid> {
    let inner = if problem.is_periodic() {
        InnerSolveConfig::exact()
    } else {
        InnerSolveConfig::pcg(LONG_RUN_PCG_ITERATIONS)
    };
    let stepper = Stepper::new(problem, Algorithm::Admm2, 1.0, alpha, inner)?;
    let mut state: SolverState = canonical_init(problem, 1.0, alpha, XInit::Zero)?;
    for _ in 0..LONG_RUN_ITERATIONS {
        state = stepper.step(&state)?.0;
        if stop_at_residual && normal_equation_residual(problem, &state.x)? <= 1e-2 * REFERENCE_RESIDUAL {
            break;
        }
    }
    Ok(state.x)
}

/// Converged solution of `problem`.
///
/// Quadratic potentials solve `(A'A + alpha C'C) x = A'y` directly and fail
/// unless the relative residual is at most [`REFERENCE_RESIDUAL`]. Other
/// potentials run [`LONG_RUN_ITERATIONS`] two-split steps at `(1, alpha)`.
pub fn reference_solution(problem: &Problem, method: ReferenceMethod) -> Result<Reference> {
    let x = match problem.quadratic_alpha() {
        Ok(alpha) => {
            if !problem.convergence_guaranteed() {
                let (freq_row, freq_col) = problem.rank().argmin_frequency;
                return Err(Error::RankDeficient { freq_row, freq_col });
            }
            let n = problem.y().len();
            let method = match method {
                ReferenceMethod::Auto if problem.is_periodic() => ReferenceMethod::Circulant,
                ReferenceMethod::Auto if n <= DENSE_REFERENCE_PIXELS => ReferenceMethod::Dense,
                ReferenceMethod::Auto => ReferenceMethod::LongRun,
                m => m,
            };
            let x = match method {
                ReferenceMethod::Circulant => {
                    if !problem.is_periodic() {
                        return Err(Error::Unsupported("circulant reference needs periodic operators".into()));
                    }
                    let b = problem.blur().adjoint(problem.y())?;
                    crate::inner::circulant_solve(problem.lambda(), problem.omega(), 1.0, alpha, &b)?
                }
                ReferenceMethod::Dense => dense_reference(problem, alpha)?,
                ReferenceMethod::LongRun | ReferenceMethod::Auto => long_run_reference(problem, alpha, true)?,
            };
            let residual = normal_equation_residual(problem, &x)?;
            if !(residual <= REFERENCE_RESIDUAL) {
                return Err(Error::InvalidInput(format!(
                    "reference solve stalled at relative residual {residual:e}"
                )));
            }
            x
        }
        Err(_) => long_run_reference(problem, problem.potential().alpha(), false)?,
    };
    let cost = problem.cost(&x)?;
    Ok(Reference { x, cost })
}

#[derive(Debug, Clone)]
pub struct SettingRun {
    pub rho: Scalar,
    pub eta: Scalar,
    pub rho_value: f64,
    pub eta_value: f64,
    /// Trace and final iterate, or the error that stopped the run.
    pub outcome: std::result::Result<(MetricTrace, ImageGrid), String>,
}

impl SettingRun {
    pub fn label(&self) -> String {
        format!("rho={} eta={}", self.rho, self.eta)
    }

    pub fn file_stem(&self, index: usize) -> String {
        let slug = |s: &Scalar| s.to_string().replace('/', "over").replace('*', "");
        format!("{index:02}_rho{}_eta{}", slug(&self.rho), slug(&self.eta))
    }

    pub fn trace(&self) -> Option<&MetricTrace> {
        self.outcome.as_ref().ok().map(|(t, _)| t)
    }

    pub fn iterations_to(&self, tolerance: f64) -> Option<usize> {
        self.trace().and_then(|t| t.iterations_to(tolerance))
    }
}

#[derive(Debug, Clone)]
pub struct Figure2Report {
    pub truth: ImageGrid,
    pub observed: ImageGrid,
    pub reference: Reference,
    pub tolerance: f64,
    pub runs: Vec<SettingRun>,
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    index: usize,
    rho: String,
    eta: String,
    rho_value: f64,
    eta_value: f64,
    status: &'static str,
    iterations: Option<usize>,
    iterations_to_tol: Option<usize>,
    initial_rel_cost_err: Option<f64>,
    final_rel_cost_err: Option<f64>,
    final_rmsd: Option<f64>,
    error: String,
}

impl Figure2Report {
    /// Writes `trace_<stem>.csv` per setting, `summary.csv`, and PGM
    /// snapshots of the truth, the data, the reference and each final iterate.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_pgm(&self.truth, dir.join("truth.pgm"))?;
        write_pgm(&self.observed, dir.join("observed.pgm"))?;
        write_pgm(&self.reference.x, dir.join("reference.pgm"))?;
        let summary_path = dir.join("summary.csv");
        let file = std::fs::File::create(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
        let mut summary = csv::Writer::from_writer(std::io::BufWriter::new(file));
        for (i, run) in self.runs.iter().enumerate() {
            let stem = run.file_stem(i);
            let mut row = SummaryRow {
                index: i,
                rho: run.rho.to_string(),
                eta: run.eta.to_string(),
                rho_value: run.rho_value,
                eta_value: run.eta_value,
                status: "ok",
                iterations: None,
                iterations_to_tol: None,
                initial_rel_cost_err: None,
                final_rel_cost_err: None,
                final_rmsd: None,
                error: String::new(),
            };
            match &run.outcome {
                Ok((trace, x)) => {
                    trace.write_csv_file(dir.join(format!("trace_{stem}.csv")))?;
                    write_pgm(x, dir.join(format!("final_{stem}.pgm")))?;
                    row.iterations = trace.last().map(|r| r.iter);
                    row.iterations_to_tol = trace.iterations_to(self.tolerance);
                    row.initial_rel_cost_err = trace.records.first().and_then(|r| r.rel_cost_err);
                    row.final_rel_cost_err = trace.last().and_then(|r| r.rel_cost_err);
                    row.final_rmsd = trace.last().and_then(|r| r.rmsd);
                }
                Err(msg) => {
                    row.status = "failed";
                    row.error = msg.clone();
                }
            }
            summary.serialize(row)?;
        }
        summary.flush().map_err(|e| Error::io(&summary_path, e))
    }
}

/// Runs every grid setting against a shared reference. A failing setting is
/// recorded in its [`SettingRun`] and does not stop the others.
pub fn figure2_protocol(config: &ExperimentConfig, execution: Execution) -> Result<Figure2Report> {
    let generated = make_problem(config)?;
    let reference = reference_solution(&generated.problem, ReferenceMethod::Auto)?;
    let runs = run_grid(&generated.problem, config, &reference, execution);
    Ok(Figure2Report {
        truth: generated.truth,
        observed: generated.problem.y().clone(),
        reference,
        tolerance: config.tolerance,
        runs,
    })
}

/// Runs the configured grid on `problem`.
pub fn run_grid(problem: &Problem, config: &ExperimentConfig, reference: &Reference, execution: Execution) -> Vec<SettingRun> {
    map_jobs(&config.grid, execution, |&(rho, eta)| {
        let (rho_value, eta_value) = (rho.resolve(config.alpha), eta.resolve(config.alpha));
        let outcome = run(problem, &config.outer_config(rho_value, eta_value), Some(reference))
            .map(|out| (out.trace, out.state.x))
            .map_err(|e| e.to_string());
        SettingRun {
            rho,
            eta,
            rho_value,
            eta_value,
            outcome,
        }
    })
}

/// True when `config` asks for exact inner solves on a masked problem.
pub fn exact_inner_unavailable(config: &ExperimentConfig) -> bool {
    config.inner.mode == InnerMode::CirculantExact
        && (config.mask_mode == crate::operators::Boundary::Masked
            || config.blur_boundary == crate::operators::Boundary::Masked)
}
