//! Separable convex potentials and their proximal maps.

use std::fmt;

use crate::error::{require_positive, Error, Result};
use crate::grid::GradientField;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    /// `(alpha/2) t^2`
    Quadratic { alpha: f64 },
    /// `alpha |t|`
    L1 { alpha: f64 },
    /// `alpha * huber_delta(t)`: quadratic `t^2/2` inside `|t| <= delta`,
    /// linear `delta |t| - delta^2/2` outside.
    Huber { alpha: f64, threshold: f64 },
    /// `alpha * delta^2 (|t|/delta - ln(1 + |t|/delta))`
    Fair { alpha: f64, threshold: f64 },
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Quadratic { alpha } => write!(f, "quadratic(alpha={alpha})"),
            Potential::L1 { alpha } => write!(f, "l1(alpha={alpha})"),
            Potential::Huber { alpha, threshold } => write!(f, "huber(alpha={alpha}, delta={threshold})"),
            Potential::Fair { alpha, threshold } => write!(f, "fair(alpha={alpha}, delta={threshold})"),
        }
    }
}

impl Potential {
    pub fn quadratic(alpha: f64) -> Result<Self> {
        let p = Potential::Quadratic { alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Potential::Quadratic { alpha } | Potential::L1 { alpha } => require_positive("alpha", alpha),
            Potential::Huber { alpha, threshold } | Potential::Fair { alpha, threshold } => {
                require_positive("alpha", alpha)?;
                require_positive("threshold", threshold)
            }
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            Potential::Quadratic { alpha }
            | Potential::L1 { alpha }
            | Potential::Huber { alpha, .. }
            | Potential::Fair { alpha, .. } => alpha,
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, Potential::Quadratic { .. })
    }

    /// Potential value of a single coordinate.
    pub fn eval_scalar(&self, t: f64) -> f64 {
        let a = t.abs();
        match *self {
            Potential::Quadratic { alpha } => 0.5 * alpha * t * t,
            Potential::L1 { alpha } => alpha * a,
            Potential::Huber { alpha, threshold: d } => {
                if a <= d {
                    0.5 * alpha * t * t
                } else {
                    alpha * (d * a - 0.5 * d * d)
                }
            }
            Potential::Fair { alpha, threshold: d } => alpha * d * d * (a / d - (a / d).ln_1p()),
        }
    }

    /// `argmin_v phi(v) + (eta/2)(z - v)^2` for one coordinate.
    pub fn prox_scalar(&self, z: f64, eta: f64) -> f64 {
        match *self {
            Potential::Quadratic { alpha } => eta / (eta + alpha) * z,
            Potential::L1 { alpha } => {
                let t = alpha / eta;
                z.signum() * (z.abs() - t).max(0.0)
            }
            Potential::Huber { alpha, threshold: d } => {
                let inner = eta / (eta + alpha) * z;
                if inner.abs() <= d {
                    inner
                } else {
                    z - z.signum() * alpha * d / eta
                }
            }
            Potential::Fair { alpha, threshold: d } => z.signum() * fair_prox_magnitude(z.abs(), alpha, d, eta),
        }
    }

    /// `phi(v)` summed over the valid entries of a field.
    pub fn eval(&self, v: &GradientField) -> f64 {
        v.values()
            .iter()
            .zip(v.mask())
            .filter(|(_, &m)| m)
            .map(|(&t, _)| self.eval_scalar(t))
            .sum()
    }

    /// Elementwise proximal map on the valid entries; masked entries stay zero.
    pub fn prox(&self, z: &GradientField, eta: f64) -> Result<GradientField> {
        require_positive("eta", eta)?;
        self.validate()?;
        let mut out = z.zeros_like();
        let zv = z.values();
        let mask = z.mask();
        par::fill_indexed(out.values_mut(), |i| if mask[i] { self.prox_scalar(zv[i], eta) } else { 0.0 });
        if !out.is_finite() {
            return Err(Error::NonFinite {
                context: format!("prox of {self}"),
            });
        }
        Ok(out)
    }
}

/// Nonnegative root of `alpha v d/(d+v) + eta (v - z) = 0` for `z >= 0`, i.e.
/// `eta v^2 + (alpha d + eta d - eta z) v - eta z d = 0`.
fn fair_prox_magnitude(z: f64, alpha: f64, d: f64, eta: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let b = alpha * d + eta * d - eta * z;
    let c = -eta * z * d;
    let disc = b * b - 4.0 * eta * c;
    let root = if disc.is_finite() && disc >= 0.0 {
        let s = disc.sqrt();
        if b >= 0.0 {
            -2.0 * c / (b + s)
        } else {
            (-b + s) / (2.0 * eta)
        }
    } else {
        f64::NAN
    };
    if root.is_finite() && (0.0..=z).contains(&root) {
        root
    } else {
        fair_prox_newton(z, alpha, d, eta)
    }
}

/// Safeguarded Newton on `g(v) = alpha v/(1 + v/d) + eta (v - z)`, bracketed in `[0, z]`.
fn fair_prox_newton(z: f64, alpha: f64, d: f64, eta: f64) -> f64 {
    let g = |v: f64| alpha * v / (1.0 + v / d) + eta * (v - z);
    let dg = |v: f64| alpha / (1.0 + v / d).powi(2) + eta;
    let (mut lo, mut hi) = (0.0, z);
    let mut v = eta / (eta + alpha) * z;
    for _ in 0..100 {
        let gv = g(v);
        if gv > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let mut next = v - gv / dg(v);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - v).abs() <= 1e-15 * z.max(1.0) {
            return next;
        }
        v = next;
    }
    v
}
