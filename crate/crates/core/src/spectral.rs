//! Convergence-rate analysis of the two-split ADMM for the quadratic problem
//! `min 0.5||y - Ax||^2 + (alpha/2)||Cx||^2` under the BCCB model.
//!
//! With `delta_i = omega_i / lambda_i`, the x-error transition matrix of the
//! three analyzable parameter families is diagonal in frequency:
//!
//! * Case I (`rho = 1`, split Bregman): `s1(delta) = eta/(eta+alpha) * (alpha + eta^2 delta)/(eta + eta^2 delta)`
//! * Case II (`eta = alpha`): `s2(delta) = rho/(rho+1) * (rho^2 + alpha delta)/(rho^2 + alpha rho delta)`
//! * Case III (`rho = eta/alpha`): `s3 = eta/(eta+alpha)` at every frequency.
//!
//! `delta = +inf` (a frequency the blur annihilates) is handled through the
//! finite limits of `s1` and `s2`.

use std::fmt;
use std::str::FromStr;

use crate::error::{require_positive, Error, Result};
use crate::operators::{BccbSpectrum, POSITIVITY_SLACK};

/// Relative tolerance when checking the case constraints on `(rho, eta, alpha)`.
pub const CASE_TOLERANCE: f64 = 1e-12;

/// Per-frequency ratios `omega_i / lambda_i` on the extended nonnegative reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSpectrum {
    deltas: Vec<f64>,
    delta_min: f64,
    delta_max: f64,
    alpha: f64,
}

impl DeltaSpectrum {
    /// Builds the spectrum from raw ratios (`f64::INFINITY` allowed).
    pub fn from_deltas(deltas: Vec<f64>, alpha: f64) -> Result<Self> {
        require_positive("alpha", alpha)?;
        if deltas.is_empty() {
            return Err(Error::InvalidInput("empty delta spectrum".into()));
        }
        if deltas.iter().any(|d| d.is_nan() || *d < 0.0) {
            return Err(Error::InvalidInput("deltas must be nonnegative (or +inf)".into()));
        }
        let delta_min = deltas.iter().copied().fold(f64::INFINITY, f64::min);
        let delta_max = deltas.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            deltas,
            delta_min,
            delta_max,
            alpha,
        })
    }

    /// `samples` log-spaced ratios covering `[lo, hi]`, endpoints included.
    pub fn log_band(lo: f64, hi: f64, samples: usize, alpha: f64) -> Result<Self> {
        require_positive("delta_lo", lo)?;
        if !(hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidInput(format!("band [{lo}, {hi}] is not a finite interval")));
        }
        if samples < 2 {
            return Err(Error::InvalidInput("a band needs at least 2 samples".into()));
        }
        let step = (hi / lo).ln() / (samples - 1) as f64;
        let mut deltas: Vec<f64> = (0..samples).map(|i| lo * (step * i as f64).exp()).collect();
        deltas[0] = lo;
        deltas[samples - 1] = hi;
        Self::from_deltas(deltas, alpha)
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn delta_min(&self) -> f64 {
        self.delta_min
    }

    pub fn delta_max(&self) -> f64 {
        self.delta_max
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `median{delta_min, delta_max, 1/alpha}` in the extended-real order.
    pub fn gamma(&self) -> f64 {
        let mut v = [self.delta_min, self.delta_max, 1.0 / self.alpha];
        v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in delta spectrum"));
        v[1]
    }
}

/// `delta_i = omega_i / lambda_i`, `+inf` where only `lambda_i` vanishes.
/// Eigenvalues at or below `POSITIVITY_SLACK` count as zero.
pub fn delta_spectrum(lambda: &BccbSpectrum, omega: &BccbSpectrum, alpha: f64) -> Result<DeltaSpectrum> {
    lambda.ensure_same_shape(omega)?;
    let mut deltas = Vec::with_capacity(lambda.eigenvalues().len());
    for (k, (&l, &o)) in lambda.eigenvalues().iter().zip(omega.eigenvalues()).enumerate() {
        let l_zero = l <= POSITIVITY_SLACK;
        let o_zero = o <= POSITIVITY_SLACK;
        let d = match (l_zero, o_zero) {
            (true, true) => {
                let (freq_row, freq_col) = lambda.frequency(k);
                return Err(Error::RankDeficient { freq_row, freq_col });
            }
            (true, false) => f64::INFINITY,
            (false, true) => 0.0,
            (false, false) => o / l,
        };
        deltas.push(d);
    }
    DeltaSpectrum::from_deltas(deltas, alpha)
}

/// Case I (split Bregman) per-frequency rate.
pub fn rate_s1(delta: f64, eta: f64, alpha: f64) -> f64 {
    let lead = eta / (eta + alpha);
    if delta.is_infinite() {
        return lead;
    }
    lead * (alpha + eta * eta * delta) / (eta + eta * eta * delta)
}

/// Case II (`eta = alpha`) per-frequency rate.
pub fn rate_s2(delta: f64, rho: f64, alpha: f64) -> f64 {
    if delta.is_infinite() {
        return 1.0 / (rho + 1.0);
    }
    rho / (rho + 1.0) * (rho * rho + alpha * delta) / (rho * rho + alpha * rho * delta)
}

/// Case III (`rho = eta/alpha`) rate, the same at every frequency.
pub fn rate_s3(eta: f64, alpha: f64) -> f64 {
    eta / (eta + alpha)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalEta {
    pub eta_star: f64,
    pub gamma: f64,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "gamma = {gamma}: the delta spectrum is degenerate (all zero or all infinite)"
        )))
    }
}

/// Optimal split Bregman penalty `eta* = sqrt(alpha / gamma)`.
pub fn optimal_eta_sb(spectrum: &DeltaSpectrum) -> Result<OptimalEta> {
    let gamma = spectrum.gamma();
    check_gamma(gamma)?;
    Ok(OptimalEta {
        eta_star: (spectrum.alpha / gamma).sqrt(),
        gamma,
    })
}

/// Optimal Case II penalty `rho* = sqrt(alpha * gamma)`.
pub fn optimal_rho_al(spectrum: &DeltaSpectrum) -> Result<f64> {
    let gamma = spectrum.gamma();
    check_gamma(gamma)?;
    Ok((spectrum.alpha * gamma).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    /// `rho = 1`: split Bregman.
    SplitBregman,
    /// `eta = alpha`: the v-split is redundant.
    AugmentedLagrangian,
    /// `rho = eta / alpha`: uniform spectrum.
    Matched,
}

impl Case {
    pub const ALL: [Case; 3] = [Case::SplitBregman, Case::AugmentedLagrangian, Case::Matched];

    pub fn roman(&self) -> &'static str {
        match self {
            Case::SplitBregman => "I",
            Case::AugmentedLagrangian => "II",
            Case::Matched => "III",
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= CASE_TOLERANCE * a.abs().max(b.abs())
    }

    /// Checks the defining constraint of the case.
    pub fn check(&self, rho: f64, eta: f64, alpha: f64) -> Result<()> {
        require_positive("rho", rho)?;
        require_positive("eta", eta)?;
        require_positive("alpha", alpha)?;
        let (ok, name, value, constraint) = match self {
            Case::SplitBregman => (Self::close(rho, 1.0), "rho", rho, "case I requires rho = 1"),
            Case::AugmentedLagrangian => (Self::close(eta, alpha), "eta", eta, "case II requires eta = alpha"),
            Case::Matched => (Self::close(rho, eta / alpha), "rho", rho, "case III requires rho = eta / alpha"),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter { name, value, constraint })
        }
    }

    /// Case-consistent `(rho, eta)` from one free parameter: `eta` for cases
    /// I and III, `rho` for case II.
    pub fn params(&self, free: f64, alpha: f64) -> (f64, f64) {
        match self {
            Case::SplitBregman => (1.0, free),
            Case::AugmentedLagrangian => (free, alpha),
            Case::Matched => (free / alpha, free),
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.roman())
    }
}

impl FromStr for Case {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "i" | "1" | "sb" => Ok(Case::SplitBregman),
            "ii" | "2" | "al" => Ok(Case::AugmentedLagrangian),
            "iii" | "3" | "matched" => Ok(Case::Matched),
            other => Err(Error::Config(format!("unknown case `{other}` (expected I, II or III)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub case: Case,
    pub rho: f64,
    pub eta: f64,
    pub alpha: f64,
    /// Per-frequency rate, aligned with the delta spectrum.
    pub rates: Vec<f64>,
    pub spectral_radius: f64,
    pub optimal_eta: f64,
    pub optimal_rho: f64,
    pub gamma: f64,
}

/// Predicted per-frequency rates and spectral radius for one case.
pub fn predict(case: Case, rho: f64, eta: f64, spectrum: &DeltaSpectrum) -> Result<RateReport> {
    let alpha = spectrum.alpha;
    case.check(rho, eta, alpha)?;
    let rates: Vec<f64> = match case {
        Case::SplitBregman => spectrum.deltas.iter().map(|&d| rate_s1(d, eta, alpha)).collect(),
        Case::AugmentedLagrangian => spectrum.deltas.iter().map(|&d| rate_s2(d, rho, alpha)).collect(),
        Case::Matched => vec![rate_s3(eta, alpha); spectrum.deltas.len()],
    };
    let spectral_radius = rates.iter().copied().fold(0.0, f64::max);
    let opt = optimal_eta_sb(spectrum)?;
    Ok(RateReport {
        case,
        rho,
        eta,
        alpha,
        rates,
        spectral_radius,
        optimal_eta: opt.eta_star,
        optimal_rho: optimal_rho_al(spectrum)?,
        gamma: opt.gamma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Faster {
    /// Two-split ADMM with `rho = eta/alpha` has the strictly smaller radius.
    AdmmMatched,
    /// No rate advantage either way; in practice split Bregman tends to be
    /// marginally faster here because most of its frequencies contract below
    /// the radius.
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub faster: Faster,
    pub rho_recommended: f64,
    pub sb_radius: f64,
    pub admm_radius: f64,
}

/// Split Bregman at `eta` versus the matched two-split ADMM (`rho = eta/alpha`).
pub fn compare_sb_vs_admm(eta: f64, spectrum: &DeltaSpectrum) -> Result<Comparison> {
    let alpha = spectrum.alpha;
    let sb = predict(Case::SplitBregman, 1.0, eta, spectrum)?;
    let rho = eta / alpha;
    let admm = predict(Case::Matched, rho, eta, spectrum)?;
    let faster = if eta < alpha { Faster::AdmmMatched } else { Faster::Tie };
    Ok(Comparison {
        faster,
        rho_recommended: rho,
        sb_radius: sb.spectral_radius,
        admm_radius: admm.spectral_radius,
    })
}

/// Asymptotic contraction factor of an error sequence: the geometric-mean
/// ratio over the last quarter of the iterations (so the first half is always
/// discarded). `None` if the window is empty or an error is not positive.
pub fn empirical_rate(errors: &[f64]) -> Option<f64> {
    let last = errors.len().checked_sub(1)?;
    let start = (3 * last) / 4;
    if last == start {
        return None;
    }
    let (a, b) = (errors[start], errors[last]);
    if !(a > 0.0 && b > 0.0) {
        return None;
    }
    Some((b / a).powf(1.0 / (last - start) as f64))
}
