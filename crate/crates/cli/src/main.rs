//! `sbadmm` command-line front end.
//!
//! Exit codes: 0 success, 2 bad configuration, input or parameter
//! constraint, 3 solver abort (divergence, non-finite values, singular or
//! rank-deficient systems, CG breakdown) or a failed run in `figure2`.
//! Command-line flags override config-file values.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use sbadmm_core::algorithms::{run, Problem};
use sbadmm_core::config::{ExperimentConfig, Scalar};
use sbadmm_core::experiments::{self, ReferenceMethod};
use sbadmm_core::grid::ImageGrid;
use sbadmm_core::io::{write_matrix, write_pgm, write_rates_csv, write_spectra_csv};
use sbadmm_core::operators::{Boundary, ConvolutionKernel, FiniteDifference};
use sbadmm_core::oracle::dense_transition_oracle;
use sbadmm_core::par::Execution;
use sbadmm_core::spectral::{
    compare_sb_vs_admm, delta_spectrum, optimal_eta_sb, optimal_rho_al, predict, Case, DeltaSpectrum, Faster,
};
use sbadmm_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "sbadmm", version, about = "Two-split ADMM / split Bregman image restoration and rate analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Data-split penalty; accepts `alpha` expressions such as `20*alpha`.
    #[arg(long, global = true)]
    rho: Option<String>,
    /// Regularizer-split penalty; accepts `alpha` expressions.
    #[arg(long, global = true)]
    eta: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    iters: Option<usize>,
    /// Inner x-update solver: `exact` (periodic only) or `pcg`.
    #[arg(long, global = true)]
    inner: Option<String>,
    #[arg(long = "pcg-iters", global = true)]
    pcg_iters: Option<usize>,
    #[arg(long = "output-dir", global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one restoration and write its trace and final image.
    Restore {
        /// sb, admm2, admm2_simplified or quadratic_closed_form.
        #[arg(long)]
        algorithm: Option<String>,
    },
    /// Predicted per-frequency rates and spectral radii.
    Predict {
        /// I, II or III; all three when omitted.
        #[arg(long)]
        case: Option<String>,
    },
    /// Optimal penalties from the delta spectrum.
    Recommend {
        /// Synthetic log-spaced band `LO:HI` instead of the problem spectrum.
        #[arg(long = "delta-range")]
        delta_range: Option<String>,
        #[arg(long, default_value_t = 4097)]
        samples: usize,
    },
    /// The penalty-grid sweep against a shared reference.
    Figure2 {
        /// Run the grid sequentially.
        #[arg(long)]
        sequential: bool,
    },
    /// Gram eigenvalues of the blur and difference operators.
    Spectra,
    /// Dense transition-matrix radii against the analytic formulas.
    Oracle {
        /// `WIDTHxHEIGHT`, at most 256 pixels.
        #[arg(long, default_value = "4x4")]
        grid: String,
        #[arg(long, default_value = "III")]
        case: String,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return EXIT_CONFIG;
    };
    let mut e = e;
    while let Error::AtIteration { source, .. } = e {
        if matches!(**source, Error::AtIteration { .. }) {
            e = source;
        } else {
            return EXIT_SOLVER;
        }
    }
    match e {
        Error::SingularHessian { .. }
        | Error::RankDeficient { .. }
        | Error::CgBreakdown { .. }
        | Error::NonFinite { .. }
        | Error::Diverged { .. } => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

struct Failure(u8, anyhow::Error);

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure(exit_code(&e), e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn load_config(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(a) = common.alpha {
        cfg.alpha = a;
    }
    if let Some(r) = &common.rho {
        cfg.rho = Scalar::parse(r)?;
    }
    if let Some(e) = &common.eta {
        cfg.eta = Scalar::parse(e)?;
    }
    if let Some(n) = common.iters {
        cfg.max_iterations = n;
    }
    if let Some(m) = &common.inner {
        cfg.inner.mode = m.parse()?;
    }
    if let Some(n) = common.pcg_iters {
        cfg.inner.pcg_iterations = n;
    }
    if let Some(d) = &common.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    cfg.outer_config(cfg.rho_value(), cfg.eta_value()).validate()?;
    Ok(cfg)
}

fn output_dir(cfg: &ExperimentConfig) -> CliResult<&Path> {
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}

fn create(path: &Path) -> CliResult<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

fn quadratic_spectrum(problem: &Problem) -> CliResult<DeltaSpectrum> {
    let alpha = problem
        .quadratic_alpha()
        .context("rate analysis covers only the quadratic potential")?;
    Ok(delta_spectrum(problem.lambda(), problem.omega(), alpha)?)
}

fn restore(common: &Common, algorithm: Option<&str>) -> CliResult<()> {
    let mut cfg = load_config(common)?;
    if let Some(a) = algorithm {
        cfg.algorithm = a.parse()?;
    }
    let outer = cfg.outer_config(cfg.rho_value(), cfg.eta_value());
    let generated = experiments::make_problem(&cfg)?;
    let problem = &generated.problem;
    if !problem.convergence_guaranteed() {
        eprintln!("warning: [A; C] is rank deficient, convergence is not guaranteed");
    }
    let reference = match problem.quadratic_alpha() {
        Ok(_) => Some(experiments::reference_solution(problem, ReferenceMethod::Auto)?),
        Err(_) => None,
    };
    let out = run(problem, &outer, reference.as_ref())?;
    let dir = output_dir(&cfg)?;
    out.trace.write_csv_file(dir.join("restore_trace.csv"))?;
    write_pgm(&out.state.x, dir.join("restored.pgm"))?;
    write_matrix(&out.state.x, dir.join("restored.txt"))?;
    write_pgm(problem.y(), dir.join("observed.pgm"))?;

    println!(
        "{} rho={} eta={} alpha={} inner={} iterations={}",
        cfg.algorithm, outer.rho, outer.eta, cfg.alpha, cfg.inner.mode, cfg.max_iterations
    );
    if let Some(last) = out.trace.last() {
        println!("final cost {:.12e}", last.cost);
        if let (Some(rel), Some(rmsd)) = (last.rel_cost_err, last.rmsd) {
            println!("final rel_cost_err {rel:.3e} rmsd {rmsd:.3e}");
        }
    }
    if let Some(k) = out.trace.iterations_to(cfg.tolerance) {
        println!("rel_cost_err <= {:e} at iteration {k}", cfg.tolerance);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn print_report(report: &sbadmm_core::spectral::RateReport) {
    println!(
        "case {:<3} rho={:<12} eta={:<12} radius={:.12}",
        report.case.roman(),
        report.rho,
        report.eta,
        report.spectral_radius
    );
}

fn predict_cmd(common: &Common, case: Option<&str>) -> CliResult<()> {
    let cfg = load_config(common)?;
    let problem = experiments::make_problem(&cfg)?.problem;
    let spectrum = quadratic_spectrum(&problem)?;
    let (rho, eta, alpha) = (cfg.rho_value(), cfg.eta_value(), cfg.alpha);
    let jobs: Vec<(Case, f64, f64)> = match case {
        Some(c) => {
            let c: Case = c.parse()?;
            c.check(rho, eta, alpha)?;
            vec![(c, rho, eta)]
        }
        None => Case::ALL
            .iter()
            .map(|&c| {
                let free = if c == Case::AugmentedLagrangian { rho } else { eta };
                let (r, e) = c.params(free, alpha);
                (c, r, e)
            })
            .collect(),
    };
    let dir = output_dir(&cfg)?;
    let mut first = true;
    for (c, r, e) in jobs {
        let report = predict(c, r, e, &spectrum)?;
        if first {
            println!(
                "alpha={} gamma={} eta*={} rho*={} delta_min={:e} delta_max={:e}",
                alpha,
                report.gamma,
                report.optimal_eta,
                report.optimal_rho,
                spectrum.delta_min(),
                spectrum.delta_max()
            );
            first = false;
        }
        print_report(&report);
        let path = dir.join(format!("rates_case{}.csv", c.roman()));
        write_rates_csv(&report, &spectrum, create(&path)?)?;
    }
    if !problem.is_periodic() {
        println!("note: masked operators, rates use the periodic spectra as an approximation");
    }
    Ok(())
}

fn parse_range(text: &str) -> CliResult<(f64, f64)> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("--delta-range `{text}` is not LO:HI")))?;
    let value = |s: &str| -> CliResult<f64> {
        match Scalar::parse(s)? {
            Scalar::Value(v) => Ok(v),
            Scalar::AlphaTimes(_) => Err(Error::Config("--delta-range bounds must be numbers".into()).into()),
        }
    };
    Ok((value(lo)?, value(hi)?))
}

fn recommend(common: &Common, delta_range: Option<&str>, samples: usize) -> CliResult<()> {
    let cfg = load_config(common)?;
    let spectrum = match delta_range {
        Some(r) => {
            let (lo, hi) = parse_range(r)?;
            DeltaSpectrum::log_band(lo, hi, samples, cfg.alpha)?
        }
        None => quadratic_spectrum(&experiments::make_problem(&cfg)?.problem)?,
    };
    let opt = optimal_eta_sb(&spectrum)?;
    let rho_star = optimal_rho_al(&spectrum)?;
    let cmp = compare_sb_vs_admm(cfg.eta_value(), &spectrum)?;
    println!("alpha={}", cfg.alpha);
    println!("delta_min={:e} delta_max={:e}", spectrum.delta_min(), spectrum.delta_max());
    println!("gamma={}", opt.gamma);
    println!("eta*={}", opt.eta_star);
    println!("rho*={}", rho_star);
    println!(
        "at eta={}: split Bregman radius {:.12}, matched ADMM (rho={}) radius {:.12}, {}",
        cfg.eta_value(),
        cmp.sb_radius,
        cmp.rho_recommended,
        cmp.admm_radius,
        match cmp.faster {
            Faster::AdmmMatched => "matched ADMM is faster",
            Faster::Tie => "no rate advantage",
        }
    );
    let dir = output_dir(&cfg)?;
    let path = dir.join("recommendation.csv");
    let mut w = create(&path)?;
    use std::io::Write;
    writeln!(w, "alpha,delta_min,delta_max,gamma,eta_star,rho_star")
        .and_then(|_| {
            writeln!(
                w,
                "{:?},{:?},{:?},{:?},{:?},{:?}",
                cfg.alpha,
                spectrum.delta_min(),
                spectrum.delta_max(),
                opt.gamma,
                opt.eta_star,
                rho_star
            )
        })
        .map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn figure2(common: &Common, sequential: bool) -> CliResult<()> {
    let cfg = load_config(common)?;
    let execution = if sequential { Execution::Sequential } else { Execution::Parallel };
    let report = experiments::figure2_protocol(&cfg, execution)?;
    let dir = output_dir(&cfg)?;
    report.write(dir)?;
    println!("reference cost {:.12e}", report.reference.cost);
    println!("{:<28} {:>10} {:>14} {:>12}", "setting", "to_tol", "final_rel_err", "final_rmsd");
    let mut failed = 0;
    for run in &report.runs {
        match &run.outcome {
            Ok((trace, _)) => {
                let last = trace.last().expect("trace holds the initial point");
                println!(
                    "{:<28} {:>10} {:>14.3e} {:>12.3e}",
                    run.label(),
                    run.iterations_to(cfg.tolerance).map_or("-".to_string(), |k| k.to_string()),
                    last.rel_cost_err.unwrap_or(f64::NAN),
                    last.rmsd.unwrap_or(f64::NAN)
                );
            }
            Err(msg) => {
                failed += 1;
                println!("{:<28} failed: {msg}", run.label());
            }
        }
    }
    println!("wrote {}", dir.display());
    if failed > 0 {
        return Err(Failure(EXIT_SOLVER, anyhow::anyhow!("{failed} grid setting(s) failed")));
    }
    Ok(())
}

fn spectra(common: &Common) -> CliResult<()> {
    let cfg = load_config(common)?;
    let problem = experiments::make_problem(&cfg)?.problem;
    let dir = output_dir(&cfg)?;
    let path = dir.join("spectra.csv");
    write_spectra_csv(problem.lambda(), problem.omega(), create(&path)?)?;
    let rank = problem.rank();
    println!(
        "{}x{} lambda_max={} omega_max={} omega(0,0)={}",
        problem.shape().0,
        problem.shape().1,
        problem.lambda().max(),
        problem.omega().max(),
        problem.omega().eigenvalues()[0]
    );
    println!(
        "full_rank={} min(lambda+omega)={:e} at {:?}",
        rank.full_rank, rank.min_combined_eigenvalue, rank.argmin_frequency
    );
    if !problem.omega().is_exact() || !problem.lambda().is_exact() {
        println!("note: masked operator, its spectrum is the periodic approximation");
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn parse_grid(text: &str) -> CliResult<(usize, usize)> {
    let parsed = text
        .split_once(['x', 'X'])
        .and_then(|(w, h)| Some((w.trim().parse().ok()?, h.trim().parse().ok()?)));
    match parsed {
        Some((w, h)) if w > 0 && h > 0 => Ok((w, h)),
        _ => Err(Error::Config(format!("--grid `{text}` is not WIDTHxHEIGHT")).into()),
    }
}

fn oracle(common: &Common, grid: &str, case: &str) -> CliResult<()> {
    let cfg = load_config(common)?;
    let (w, h) = parse_grid(grid)?;
    let case: Case = case.parse()?;
    let alpha = cfg.alpha;
    let free = if case == Case::AugmentedLagrangian { cfg.rho_value() } else { cfg.eta_value() };
    let (rho, eta) = case.params(free, alpha);
    // Largest odd kernel sides that fit the grid.
    let fit = |n: usize| cfg.psf_size.min(n - (1 - n % 2));
    let blur = ConvolutionKernel::gaussian_rect(fit(h), fit(w), cfg.psf_sigma, Boundary::Periodic)?;
    let y = ImageGrid::from_fn(h, w, |r, c| ((r * 7 + c * 3) % 5) as f64 / 4.0);
    let problem = Problem::new(
        y,
        blur,
        FiniteDifference::new(Boundary::Periodic),
        sbadmm_core::prox::Potential::Quadratic { alpha },
    )?;
    let spectrum = delta_spectrum(problem.lambda(), problem.omega(), alpha)?;
    let analytic = predict(case, rho, eta, &spectrum)?.spectral_radius;
    let dense = dense_transition_oracle(&problem, case, rho, eta)?;
    let diff = (dense.radius_h - analytic).abs();
    println!("case {} grid {}x{} rho={} eta={} alpha={}", case.roman(), w, h, rho, eta, alpha);
    println!("dense radius(H)  {:.15}", dense.radius_h);
    println!("analytic radius  {:.15}", analytic);
    match dense.radius_g {
        Some(r) => println!("dense radius(G)  {r:.15}"),
        None => println!("dense radius(G)  (QR iteration did not converge)"),
    }
    println!("|difference|     {:.3e}", diff);
    let dir = output_dir(&cfg)?;
    let path = dir.join("oracle.csv");
    let mut wtr = create(&path)?;
    use std::io::Write;
    writeln!(wtr, "case,width,height,rho,eta,alpha,dense_radius_h,dense_radius_g,analytic_radius")
        .and_then(|_| {
            writeln!(
                wtr,
                "{},{w},{h},{rho:?},{eta:?},{alpha:?},{:?},{:?},{analytic:?}",
                case.roman(),
                dense.radius_h,
                dense.radius_g.unwrap_or(f64::NAN)
            )
        })
        .map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let common = &cli.common;
    match &cli.command {
        Command::Restore { algorithm } => restore(common, algorithm.as_deref()),
        Command::Predict { case } => predict_cmd(common, case.as_deref()),
        Command::Recommend { delta_range, samples } => recommend(common, delta_range.as_deref(), *samples),
        Command::Figure2 { sequential } => figure2(common, *sequential),
        Command::Spectra => spectra(common),
        Command::Oracle { grid, case } => oracle(common, grid, case),
    }
}

/// The error chain joined by `: `, skipping causes already quoted by an outer message.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, err)) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(code)
        }
    }
}
