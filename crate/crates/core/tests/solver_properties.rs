mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sbadmm_core::algorithms::{canonical_init, run, Algorithm, OuterConfig, Problem, SolverState, Stepper, XInit};
use sbadmm_core::experiments::{reference_solution, ReferenceMethod};
use sbadmm_core::inner::{circulant_solve, pcg_solve, CirculantPreconditioner, InnerSolveConfig, PreconditionerKind};
use sbadmm_core::operators::Boundary;
use sbadmm_core::{GradientField, ImageGrid};

fn exact_for(p: &Problem) -> InnerSolveConfig {
    if p.is_periodic() {
        InnerSolveConfig::exact()
    } else {
        InnerSolveConfig { pcg_iterations: 400, pcg_tolerance: 1e-15, ..InnerSolveConfig::pcg(400) }
    }
}

fn iterate(p: &Problem, alg: Algorithm, rho: f64, eta: f64, inner: InnerSolveConfig, n: usize) -> Vec<SolverState> {
    let stepper = Stepper::new(p, alg, rho, eta, inner).unwrap();
    let mut s = canonical_init(p, rho, eta, XInit::Zero).unwrap();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        s = stepper.step(&s).unwrap().0;
        out.push(s.clone());
    }
    out
}

struct Dense {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    y: DVector<f64>,
}

fn dense(p: &Problem) -> Dense {
    let (h, w) = p.shape();
    let n = h * w;
    let m = p.diff().directions().len() * n;
    let mut a = DMatrix::zeros(n, n);
    let mut c = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut e = ImageGrid::zeros(h, w);
        e.values_mut()[j] = 1.0;
        a.set_column(j, &DVector::from_column_slice(p.blur().forward(&e).unwrap().values()));
        c.set_column(j, &DVector::from_column_slice(p.diff().forward(&e).unwrap().values()));
    }
    Dense { a, c, y: DVector::from_column_slice(p.y().values()) }
}

fn vecf(g: &GradientField) -> DVector<f64> {
    DVector::from_column_slice(g.values())
}

fn veci(g: &ImageGrid) -> DVector<f64> {
    DVector::from_column_slice(g.values())
}

fn max_diff(a: &DVector<f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_state(p: &Problem, seed: &[f64]) -> SolverState {
    let (h, w) = p.shape();
    let mut it = seed.iter().cycle().copied();
    let mut img = || ImageGrid::new(h, w, (0..h * w).map(|_| it.next().unwrap()).collect()).unwrap();
    let (x, u, d, vx, ex) = (img(), img(), img(), img(), img());
    let v = p.diff().forward(&vx).unwrap().lincomb(1.0, &p.diff().forward(&ex).unwrap(), 0.3);
    let e = p.diff().forward(&ex).unwrap();
    SolverState { x, u, v, d, e, k: 0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn circulant_solve_inverts_hessian(p in quadratic_problem(Boundary::Periodic), rho in penalty(), eta in penalty(), seed in prop::collection::vec(-1.0..1.0f64, 49)) {
        let (h, w) = p.shape();
        let x = ImageGrid::new(h, w, seed.iter().cycle().take(h * w).copied().collect()).unwrap();
        let hx = p.apply_normal(rho, eta, &x).unwrap();
        let back = circulant_solve(p.lambda(), p.omega(), rho, eta, &hx).unwrap();
        prop_assert!(back.sub(&x).norm() <= 1e-10 * x.norm());
    }

    #[test]
    fn pcg_objective_never_increases(p in quadratic_problem(Boundary::Masked), rho in penalty(), eta in penalty(), precondition in any::<bool>()) {
        let b = p.blur().adjoint(p.y()).unwrap();
        let pre = CirculantPreconditioner::new(p.lambda(), p.omega(), rho, eta).unwrap();
        let config = InnerSolveConfig {
            preconditioner: if precondition { PreconditionerKind::Circulant } else { PreconditionerKind::None },
            ..InnerSolveConfig::pcg(12)
        };
        let out = pcg_solve(
            |x: &ImageGrid| p.apply_normal(rho, eta, x),
            precondition.then_some(&pre),
            &b,
            &config,
            &ImageGrid::zeros(p.shape().0, p.shape().1),
        ).unwrap();
        let scale = out.objective_history.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for pair in out.objective_history.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12 * scale, "{:?}", out.objective_history);
        }
    }

    #[test]
    fn pcg_hessian_norm_error_never_increases(p in quadratic_problem(Boundary::Periodic), rho in penalty(), eta in penalty()) {
        let b = p.blur().adjoint(p.y()).unwrap();
        let exact = circulant_solve(p.lambda(), p.omega(), rho, eta, &b).unwrap();
        let (h, w) = p.shape();
        let energy = |x: &ImageGrid| {
            let e = x.sub(&exact);
            e.dot(&p.apply_normal(rho, eta, &e).unwrap())
        };
        let mut prev = energy(&ImageGrid::zeros(h, w));
        for k in 1..8 {
            let out = pcg_solve(|x: &ImageGrid| p.apply_normal(rho, eta, x), None, &b, &InnerSolveConfig::pcg(k), &ImageGrid::zeros(h, w)).unwrap();
            let now = energy(&out.x);
            prop_assert!(now <= prev * (1.0 + 1e-10) + 1e-24, "step {k}: {now} > {prev}");
            prev = now;
        }
    }

    #[test]
    fn split_bregman_equals_admm_at_unit_rho(p in quadratic_problem(Boundary::Periodic), eta in penalty()) {
        let sb = iterate(&p, Algorithm::SplitBregman, 1.0, eta, InnerSolveConfig::exact(), 15);
        let admm = iterate(&p, Algorithm::Admm2, 1.0, eta, InnerSolveConfig::exact(), 15);
        for (s, a) in sb.iter().zip(&admm) {
            prop_assert!(s.max_xve_diff(a) <= 1e-12, "k={} diff={}", s.k, s.max_xve_diff(a));
        }
    }

    #[test]
    fn simplified_and_closed_form_track_admm(p in quadratic_problem(Boundary::Periodic), rho in penalty(), eta in penalty()) {
        let admm = iterate(&p, Algorithm::Admm2, rho, eta, InnerSolveConfig::exact(), 12);
        let simple = iterate(&p, Algorithm::Admm2Simplified, rho, eta, InnerSolveConfig::exact(), 12);
        let closed = iterate(&p, Algorithm::QuadraticClosedForm, rho, eta, InnerSolveConfig::exact(), 12);
        for ((a, s), c) in admm.iter().zip(&simple).zip(&closed) {
            let scale = 1.0 + a.x.norm();
            prop_assert!(a.x.sub(&s.x).norm() <= 1e-10 * scale);
            prop_assert!(a.x.sub(&c.x).norm() <= 1e-10 * scale);
            prop_assert!(a.v.max_abs_diff(&c.v) <= 1e-10 * scale);
        }
    }

    #[test]
    fn elimination_identities_hold(p in boundary().prop_flat_map(quadratic_problem), rho in penalty(), eta in penalty()) {
        let alpha = p.quadratic_alpha().unwrap();
        let inner = if p.is_periodic() { InnerSolveConfig::exact() } else { InnerSolveConfig::pcg(3) };
        for s in iterate(&p, Algorithm::Admm2, rho, eta, inner, 20) {
            let du = s.u.add(&s.d.scaled(rho)).sub(p.y()).norm();
            prop_assert!(du <= 1e-10 * (1.0 + p.y().norm()));
            let dv = s.v.scaled(alpha).add(&s.e.scaled(eta)).norm_sq().sqrt();
            prop_assert!(dv <= 1e-10 * (1.0 + alpha * s.v.norm_sq().sqrt()));
        }
    }

    #[test]
    fn solution_state_is_a_fixed_point(p in boundary().prop_flat_map(quadratic_problem), rho in penalty(), eta in penalty()) {
        let x_hat = reference_solution(&p, ReferenceMethod::Dense).unwrap().x;
        let start = SolverState::at_solution(&p, &x_hat, rho, eta).unwrap();
        let algs: &[Algorithm] = if p.is_periodic() {
            &[Algorithm::Admm2, Algorithm::Admm2Simplified, Algorithm::QuadraticClosedForm]
        } else {
            &[Algorithm::Admm2, Algorithm::Admm2Simplified]
        };
        for &alg in algs {
            let next = Stepper::new(&p, alg, rho, eta, exact_for(&p)).unwrap().step(&start).unwrap().0;
            let scale = 1.0 + x_hat.norm();
            prop_assert!(next.x.sub(&start.x).norm() <= 1e-10 * scale, "{alg}");
            prop_assert!(next.u.sub(&start.u).norm() <= 1e-10 * scale, "{alg}");
            prop_assert!(next.d.sub(&start.d).norm() <= 1e-10 * scale, "{alg}");
            prop_assert!(next.v.max_abs_diff(&start.v) <= 1e-10 * scale, "{alg}");
            prop_assert!(next.e.max_abs_diff(&start.e) <= 1e-10 * scale, "{alg}");
        }
        let sb = Stepper::new(&p, Algorithm::SplitBregman, 1.0, eta, exact_for(&p)).unwrap();
        let sb_start = SolverState::at_solution(&p, &x_hat, 1.0, eta).unwrap();
        let next = sb.step(&sb_start).unwrap().0;
        prop_assert!(next.max_xve_diff(&sb_start) <= 1e-10 * (1.0 + x_hat.norm()));
    }

    #[test]
    fn one_step_matches_dense_transcription(
        p in boundary().prop_flat_map(quadratic_problem),
        rho in penalty(),
        eta in penalty(),
        seed in prop::collection::vec(-1.0..1.0f64, 37),
    ) {
        let alpha = p.quadratic_alpha().unwrap();
        let m = dense(&p);
        let s = random_state(&p, &seed);
        let (x0, u, d, v, e) = (veci(&s.x), veci(&s.u), veci(&s.d), vecf(&s.v), vecf(&s.e));
        let _ = x0;
        let hess = m.a.transpose() * &m.a * rho + m.c.transpose() * &m.c * eta;
        let rhs = m.a.transpose() * (&u + &d) * rho + m.c.transpose() * (&v + &e) * eta;
        let x = hess.cholesky().unwrap().solve(&rhs);
        let ax = &m.a * &x;
        let cx = &m.c * &x;
        let u1 = ((&ax - &d) * rho + &m.y) / (rho + 1.0);
        let v1 = (&cx - &e) * (eta / (eta + alpha));
        let d1 = &d - &ax + &u1;
        let e1 = &e - &cx + &v1;

        let next = Stepper::new(&p, Algorithm::Admm2, rho, eta, exact_for(&p)).unwrap().step(&s).unwrap().0;
        let tol = 1e-9 * (1.0 + x.norm());
        prop_assert!(max_diff(&x, next.x.values()) <= tol);
        prop_assert!(max_diff(&u1, next.u.values()) <= tol);
        prop_assert!(max_diff(&v1, next.v.values()) <= tol);
        prop_assert!(max_diff(&d1, next.d.values()) <= tol);
        prop_assert!(max_diff(&e1, next.e.values()) <= tol);

        // split Bregman: (A'A + eta C'C) x = A'y + eta C'(v + e)
        let hess = m.a.transpose() * &m.a + m.c.transpose() * &m.c * eta;
        let rhs = m.a.transpose() * &m.y + m.c.transpose() * (&v + &e) * eta;
        let x = hess.cholesky().unwrap().solve(&rhs);
        let cx = &m.c * &x;
        let v1 = (&cx - &e) * (eta / (eta + alpha));
        let e1 = &e - &cx + &v1;
        let next = Stepper::new(&p, Algorithm::SplitBregman, 1.0, eta, exact_for(&p)).unwrap().step(&s).unwrap().0;
        prop_assert!(max_diff(&x, next.x.values()) <= tol);
        prop_assert!(max_diff(&v1, next.v.values()) <= tol);
        prop_assert!(max_diff(&e1, next.e.values()) <= tol);
    }

    #[test]
    fn runs_are_deterministic(p in quadratic_problem(Boundary::Masked), rho in penalty(), eta in penalty()) {
        let cfg = OuterConfig::new(rho, eta, 10).with_inner(InnerSolveConfig::pcg(3));
        let a = run(&p, &cfg, None).unwrap();
        let b = run(&p, &cfg, None).unwrap();
        prop_assert_eq!(a.trace, b.trace);
        prop_assert_eq!(a.state.x, b.state.x);
    }
}
