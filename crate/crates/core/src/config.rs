//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! image = phantom            # or a path to a .pgm / .txt matrix
//! size = 64                  # phantom side length
//! psf_size = 7
//! psf_sigma = 2
//! blur_boundary = periodic   # periodic | masked
//! mask_mode = masked         # finite differences: periodic | masked
//! noise_std = 0.01
//! seed = 2014
//! alpha = 0.0625
//! potential = quadratic      # quadratic | l1 | huber | fair
//! potential_threshold = 0.01 # huber / fair only
//! rho = 1
//! eta = alpha
//! grid = 1:alpha, 1:20*alpha, 20:20*alpha, 1:alpha/20, 1/20:alpha/20
//! algorithm = admm2          # sb | admm2 | admm2_simplified | quadratic_closed_form
//! inner = pcg                # pcg | exact
//! pcg_iters = 3
//! pcg_tol = 0
//! preconditioner = circulant # circulant | none
//! iters = 300
//! tolerance = 1e-6
//! output_dir = out
//! ```
//!
//! Penalty values accept `alpha` as a symbol (`20*alpha`, `alpha/20`) so a
//! grid stays meaningful when `alpha` is overridden.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::algorithms::{Algorithm, OuterConfig, XInit};
use crate::error::{Error, Result};
use crate::inner::{InnerMode, InnerSolveConfig};
use crate::operators::Boundary;
use crate::prox::Potential;

/// A penalty parameter, either absolute or a multiple of `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    Value(f64),
    AlphaTimes(f64),
}

impl Scalar {
    pub fn resolve(&self, alpha: f64) -> f64 {
        match *self {
            Scalar::Value(v) => v,
            Scalar::AlphaTimes(m) => m * alpha,
        }
    }

    /// Parses products and quotients of numbers and at most one `alpha`.
    pub fn parse(text: &str) -> Result<Self> {
        let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(Error::Config("empty value".into()));
        }
        let mut coef = 1.0;
        let mut alpha_power = 0;
        let mut op = '*';
        let mut token = String::new();
        let flush = |token: &str, op: char, coef: &mut f64, alpha_power: &mut i32| -> Result<()> {
            if token.eq_ignore_ascii_case("alpha") || token == "a" {
                *alpha_power += if op == '*' { 1 } else { -1 };
            } else {
                let v: f64 = token
                    .parse()
                    .map_err(|_| Error::Config(format!("cannot parse `{token}` in `{text}`")))?;
                if op == '*' {
                    *coef *= v;
                } else {
                    *coef /= v;
                }
            }
            Ok(())
        };
        for ch in s.chars() {
            if (ch == '*' || ch == '/') && !token.is_empty() && !token.ends_with(['e', 'E']) {
                flush(&token, op, &mut coef, &mut alpha_power)?;
                token.clear();
                op = ch;
            } else {
                token.push(ch);
            }
        }
        flush(&token, op, &mut coef, &mut alpha_power)?;
        match alpha_power {
            0 => Ok(Scalar::Value(coef)),
            1 => Ok(Scalar::AlphaTimes(coef)),
            _ => Err(Error::Config(format!("`{text}`: alpha may appear once, as a factor"))),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Scalar::Value(v) => write!(f, "{v}"),
            Scalar::AlphaTimes(1.0) => f.write_str("alpha"),
            Scalar::AlphaTimes(m) if m < 1.0 && (1.0 / m).fract() == 0.0 => write!(f, "alpha/{}", 1.0 / m),
            Scalar::AlphaTimes(m) => write!(f, "{m}*alpha"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    Phantom { size: usize },
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    Quadratic,
    L1,
    Huber,
    Fair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub image: ImageSource,
    pub psf_size: usize,
    pub psf_sigma: f64,
    pub blur_boundary: Boundary,
    pub mask_mode: Boundary,
    pub noise_std: f64,
    pub seed: u64,
    pub alpha: f64,
    pub potential: PotentialKind,
    pub potential_threshold: f64,
    pub rho: Scalar,
    pub eta: Scalar,
    pub grid: Vec<(Scalar, Scalar)>,
    pub algorithm: Algorithm,
    pub inner: InnerSolveConfig,
    pub max_iterations: usize,
    /// Cost-error level used for iterations-to-tolerance comparisons.
    pub tolerance: f64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            image: ImageSource::Phantom { size: 64 },
            psf_size: 7,
            psf_sigma: 2.0,
            blur_boundary: Boundary::Periodic,
            mask_mode: Boundary::Masked,
            noise_std: 0.01,
            seed: 2014,
            alpha: 0.0625,
            potential: PotentialKind::Quadratic,
            potential_threshold: 0.01,
            rho: Scalar::Value(1.0),
            eta: Scalar::AlphaTimes(1.0),
            grid: default_grid(),
            algorithm: Algorithm::Admm2,
            inner: InnerSolveConfig::default(),
            max_iterations: 300,
            tolerance: 1e-6,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// `(1, a)`, `(1, 20a)`, `(20, 20a)`, `(1, a/20)`, `(1/20, a/20)`.
pub fn default_grid() -> Vec<(Scalar, Scalar)> {
    use Scalar::*;
    vec![
        (Value(1.0), AlphaTimes(1.0)),
        (Value(1.0), AlphaTimes(20.0)),
        (Value(20.0), AlphaTimes(20.0)),
        (Value(1.0), AlphaTimes(1.0 / 20.0)),
        (Value(1.0 / 20.0), AlphaTimes(1.0 / 20.0)),
    ]
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "image" => {
                self.image = if value == "phantom" {
                    ImageSource::Phantom { size: self.phantom_size() }
                } else {
                    ImageSource::File(PathBuf::from(value))
                }
            }
            "size" => {
                let size = parse_num(key, value)?;
                if let ImageSource::Phantom { .. } = self.image {
                    self.image = ImageSource::Phantom { size };
                }
            }
            "psf_size" => self.psf_size = parse_num(key, value)?,
            "psf_sigma" => self.psf_sigma = parse_num(key, value)?,
            "blur_boundary" => self.blur_boundary = value.parse()?,
            "mask_mode" => self.mask_mode = value.parse()?,
            "noise_std" => self.noise_std = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "potential" => {
                self.potential = match value.to_ascii_lowercase().as_str() {
                    "quadratic" => PotentialKind::Quadratic,
                    "l1" => PotentialKind::L1,
                    "huber" => PotentialKind::Huber,
                    "fair" => PotentialKind::Fair,
                    other => return Err(Error::Config(format!("unknown potential `{other}`"))),
                }
            }
            "potential_threshold" => self.potential_threshold = parse_num(key, value)?,
            "rho" => self.rho = Scalar::parse(value)?,
            "eta" => self.eta = Scalar::parse(value)?,
            "grid" => {
                self.grid = value
                    .split([',', ';'])
                    .filter(|s| !s.trim().is_empty())
                    .map(|pair| {
                        let (r, e) = pair
                            .split_once(':')
                            .ok_or_else(|| Error::Config(format!("grid entry `{pair}` is not rho:eta")))?;
                        Ok((Scalar::parse(r)?, Scalar::parse(e)?))
                    })
                    .collect::<Result<_>>()?
            }
            "algorithm" => self.algorithm = value.parse()?,
            "inner" => self.inner.mode = value.parse()?,
            "pcg_iters" => self.inner.pcg_iterations = parse_num(key, value)?,
            "pcg_tol" => self.inner.pcg_tolerance = parse_num(key, value)?,
            "preconditioner" => self.inner.preconditioner = value.parse()?,
            "iters" | "max_iterations" => self.max_iterations = parse_num(key, value)?,
            "tolerance" => self.tolerance = parse_num(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    fn phantom_size(&self) -> usize {
        match self.image {
            ImageSource::Phantom { size } => size,
            ImageSource::File(_) => 64,
        }
    }

    pub fn potential(&self) -> Result<Potential> {
        let (alpha, threshold) = (self.alpha, self.potential_threshold);
        let p = match self.potential {
            PotentialKind::Quadratic => Potential::Quadratic { alpha },
            PotentialKind::L1 => Potential::L1 { alpha },
            PotentialKind::Huber => Potential::Huber { alpha, threshold },
            PotentialKind::Fair => Potential::Fair { alpha, threshold },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn rho_value(&self) -> f64 {
        self.rho.resolve(self.alpha)
    }

    pub fn eta_value(&self) -> f64 {
        self.eta.resolve(self.alpha)
    }

    pub fn resolved_grid(&self) -> Vec<(f64, f64)> {
        self.grid
            .iter()
            .map(|(r, e)| (r.resolve(self.alpha), e.resolve(self.alpha)))
            .collect()
    }

    pub fn outer_config(&self, rho: f64, eta: f64) -> OuterConfig {
        OuterConfig {
            rho,
            eta,
            max_iterations: self.max_iterations,
            inner: self.inner,
            algorithm: self.algorithm,
            x_init: XInit::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| crate::error::require_positive(name, v);
        positive("alpha", self.alpha)?;
        positive("psf_sigma", self.psf_sigma)?;
        positive("rho", self.rho_value())?;
        positive("eta", self.eta_value())?;
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "noise_std",
                value: self.noise_std,
                constraint: "must be finite and >= 0",
            });
        }
        if self.grid.is_empty() {
            return Err(Error::Config("parameter grid is empty".into()));
        }
        for (r, e) in self.resolved_grid() {
            positive("grid rho", r)?;
            positive("grid eta", e)?;
        }
        if let ImageSource::Phantom { size } = self.image {
            if size < 2 {
                return Err(Error::Config("phantom size must be >= 2".into()));
            }
        }
        if self.inner.mode == InnerMode::Pcg && self.inner.pcg_iterations == 0 {
            return Err(Error::Config("pcg_iters must be >= 1".into()));
        }
        self.potential()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_expressions() {
        assert_eq!(Scalar::parse("1").unwrap(), Scalar::Value(1.0));
        assert_eq!(Scalar::parse("1/20").unwrap(), Scalar::Value(0.05));
        assert_eq!(Scalar::parse("alpha").unwrap(), Scalar::AlphaTimes(1.0));
        assert_eq!(Scalar::parse("20*alpha").unwrap(), Scalar::AlphaTimes(20.0));
        assert_eq!(Scalar::parse("alpha/20").unwrap(), Scalar::AlphaTimes(0.05));
        assert_eq!(Scalar::parse("2.5e-3").unwrap(), Scalar::Value(2.5e-3));
        assert_eq!(Scalar::parse("1e-2*alpha").unwrap(), Scalar::AlphaTimes(1e-2));
        assert!(Scalar::parse("alpha*alpha").is_err());
        assert!(Scalar::parse("beta").is_err());
        assert_eq!(Scalar::AlphaTimes(0.05).to_string(), "alpha/20");
    }

    #[test]
    fn parses_documented_keys() {
        let cfg = ExperimentConfig::parse(
            "image = phantom\nsize = 32 # small\nalpha = 0.125\neta = 2*alpha\ngrid = 1:alpha; 1/20:alpha/20\ninner = exact\nmask_mode = periodic\n",
        )
        .unwrap();
        assert_eq!(cfg.image, ImageSource::Phantom { size: 32 });
        assert_eq!(cfg.eta_value(), 0.25);
        assert_eq!(cfg.resolved_grid(), vec![(1.0, 0.125), (0.05, 0.00625)]);
        assert_eq!(cfg.inner.mode, InnerMode::CirculantExact);
        assert_eq!(cfg.mask_mode, Boundary::Periodic);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("nonsense").is_err());
        assert!(ExperimentConfig::parse("colour = red").is_err());
        assert!(ExperimentConfig::parse("eta = 0").is_err());
        assert!(ExperimentConfig::parse("alpha = -1").is_err());
        assert!(ExperimentConfig::parse("grid = ").is_err());
    }

    #[test]
    fn default_grid_matches_sweep() {
        let cfg = ExperimentConfig::default();
        let a = cfg.alpha;
        assert_eq!(
            cfg.resolved_grid(),
            vec![(1.0, a), (1.0, 20.0 * a), (20.0, 20.0 * a), (1.0, a / 20.0), (0.05, a / 20.0)]
        );
    }
}
