//! Linear operators of the restoration problem: the blur `A`, the
//! finite-difference analysis operator `C`, and the per-frequency
//! eigenvalues of their Gram matrices.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::grid::{Direction, GradientField, ImageGrid};
use crate::par;

/// Eigenvalues in `[-POSITIVITY_SLACK, 0)` are rounding noise and clamp to 0.
pub const POSITIVITY_SLACK: f64 = 1e-14;

/// Absolute floor on `min(lambda + omega)` for the split to count as full rank.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Boundary {
    /// Circular wrap-around; the operator is exactly BCCB.
    #[default]
    Periodic,
    /// Outputs whose stencil would wrap across the border are removed (held at zero).
    Masked,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Periodic => "periodic",
            Boundary::Masked => "masked",
        })
    }
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "periodic" | "circular" => Ok(Boundary::Periodic),
            "masked" | "masked-valid" | "valid" => Ok(Boundary::Masked),
            other => Err(Error::Config(format!(
                "unknown boundary `{other}` (expected periodic or masked)"
            ))),
        }
    }
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    if i >= 0 && (i as usize) < n {
        i as usize
    } else {
        i.rem_euclid(n as isize) as usize
    }
}

/// A 2D convolution kernel with an explicit anchor tap.
///
/// `(A x)[i, j] = sum_{p,q} taps[p, q] * x[i - (p - anchor_row), j - (q - anchor_col)]`
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionKernel {
    rows: usize,
    cols: usize,
    taps: Vec<f64>,
    anchor: (usize, usize),
    boundary: Boundary,
}

impl ConvolutionKernel {
    pub fn new(
        rows: usize,
        cols: usize,
        taps: Vec<f64>,
        anchor: (usize, usize),
        boundary: Boundary,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || taps.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "kernel of {rows}x{cols} needs {} taps, got {}",
                rows * cols,
                taps.len()
            )));
        }
        if anchor.0 >= rows || anchor.1 >= cols {
            return Err(Error::InvalidInput(format!(
                "anchor {anchor:?} outside {rows}x{cols} kernel"
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite {
                context: "kernel taps".into(),
            });
        }
        if taps.iter().all(|&t| t == 0.0) {
            return Err(Error::InvalidInput("kernel taps are all zero".into()));
        }
        Ok(Self {
            rows,
            cols,
            taps,
            anchor,
            boundary,
        })
    }

    pub fn identity(boundary: Boundary) -> Self {
        Self::new(1, 1, vec![1.0], (0, 0), boundary).expect("valid identity kernel")
    }

    /// Normalized `size x size` Gaussian, anchored at the center.
    pub fn gaussian(size: usize, sigma: f64, boundary: Boundary) -> Result<Self> {
        Self::gaussian_rect(size, size, sigma, boundary)
    }

    /// Normalized `rows x cols` Gaussian, anchored at the center.
    pub fn gaussian_rect(rows: usize, cols: usize, sigma: f64, boundary: Boundary) -> Result<Self> {
        if rows.is_multiple_of(2) || cols.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "gaussian kernel sides must be odd and positive, got {rows}x{cols}"
            )));
        }
        crate::error::require_positive("sigma", sigma)?;
        let (hr, hc) = ((rows / 2) as f64, (cols / 2) as f64);
        let mut taps: Vec<f64> = (0..rows * cols)
            .map(|i| {
                let dr = (i / cols) as f64 - hr;
                let dc = (i % cols) as f64 - hc;
                (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        Self::new(rows, cols, taps, (rows / 2, cols / 2), boundary)
    }

    /// Uniform averaging kernel anchored at the top-left tap.
    pub fn boxcar(rows: usize, cols: usize, boundary: Boundary) -> Result<Self> {
        let n = rows * cols;
        Self::new(rows, cols, vec![1.0 / n as f64; n], (0, 0), boundary)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn anchor(&self) -> (usize, usize) {
        self.anchor
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn with_boundary(&self, boundary: Boundary) -> Self {
        Self {
            boundary,
            ..self.clone()
        }
    }

    fn check_grid(&self, shape: (usize, usize)) -> Result<()> {
        if self.rows > shape.0 || self.cols > shape.1 {
            return Err(Error::ShapeMismatch {
                expected: (self.rows.max(shape.0), self.cols.max(shape.1)),
                actual: shape,
            });
        }
        Ok(())
    }

    /// Row range `[lo, hi)` and column range of outputs whose stencil stays inside the grid.
    fn valid_window(&self, shape: (usize, usize)) -> ((usize, usize), (usize, usize)) {
        let (h, w) = shape;
        let (ar, ac) = self.anchor;
        let rows = (self.rows - 1 - ar, h - ar);
        let cols = (self.cols - 1 - ac, w - ac);
        (rows, cols)
    }

    /// Validity mask of the output grid (all true for periodic boundary).
    pub fn output_mask(&self, shape: (usize, usize)) -> Vec<bool> {
        let (h, w) = shape;
        match self.boundary {
            Boundary::Periodic => vec![true; h * w],
            Boundary::Masked => {
                let ((r0, r1), (c0, c1)) = self.valid_window(shape);
                (0..h * w)
                    .map(|i| {
                        let (r, c) = (i / w, i % w);
                        r >= r0 && r < r1 && c >= c0 && c < c1
                    })
                    .collect()
            }
        }
    }

    /// Shared loop of `forward` (`sign = 1`) and `adjoint` (`sign = -1`):
    /// `out[i][j] += taps[p][q] * src[i - sign (p - ar)][j - sign (q - ac)]`
    /// with periodic wrap, accumulated in `(p, q)` order.
    fn correlate(&self, src: &[f64], (h, w): (usize, usize), sign: isize) -> ImageGrid {
        let (ar, ac) = (self.anchor.0 as isize, self.anchor.1 as isize);
        let mut out = ImageGrid::zeros(h, w);
        par::for_each_row(out.values_mut(), w, |i, row| {
            for p in 0..self.rows {
                let line = &src[wrap(i as isize - sign * (p as isize - ar), h) * w..][..w];
                for (q, &t) in self.taps[p * self.cols..(p + 1) * self.cols].iter().enumerate() {
                    // out[j] reads line[j - off]; |off| < w because the kernel fits the grid
                    let off = sign * (q as isize - ac);
                    let split = off.rem_euclid(w as isize) as usize;
                    let (head, tail) = row.split_at_mut(split);
                    for (o, &v) in head.iter_mut().zip(&line[w - split..]) {
                        *o += t * v;
                    }
                    for (o, &v) in tail.iter_mut().zip(&line[..w - split]) {
                        *o += t * v;
                    }
                }
            }
        });
        out
    }

    /// `A x`.
    pub fn forward(&self, x: &ImageGrid) -> Result<ImageGrid> {
        self.check_grid(x.shape())?;
        let mut out = self.correlate(x.values(), x.shape(), 1);
        if self.boundary == Boundary::Masked {
            for (o, keep) in out.values_mut().iter_mut().zip(self.output_mask(x.shape())) {
                if !keep {
                    *o = 0.0;
                }
            }
        }
        Ok(out)
    }

    /// `A' r` (correlation with the taps; masked outputs of `r` are ignored).
    pub fn adjoint(&self, r: &ImageGrid) -> Result<ImageGrid> {
        self.check_grid(r.shape())?;
        Ok(match self.boundary {
            Boundary::Periodic => self.correlate(r.values(), r.shape(), -1),
            Boundary::Masked => {
                let kept: Vec<f64> = r
                    .values()
                    .iter()
                    .zip(self.output_mask(r.shape()))
                    .map(|(&v, keep)| if keep { v } else { 0.0 })
                    .collect();
                self.correlate(&kept, r.shape(), -1)
            }
        })
    }

    /// The circulant generator: the kernel scattered onto an `h x w` grid so
    /// that `A x` (periodic) is the circular convolution with it.
    pub fn circulant_generator(&self, shape: (usize, usize)) -> Result<Vec<f64>> {
        self.check_grid(shape)?;
        let (h, w) = shape;
        let mut g = vec![0.0; h * w];
        for p in 0..self.rows {
            for q in 0..self.cols {
                let r = wrap(p as isize - self.anchor.0 as isize, h);
                let c = wrap(q as isize - self.anchor.1 as isize, w);
                g[r * w + c] += self.taps[p * self.cols + q];
            }
        }
        Ok(g)
    }

    /// Eigenvalues `lambda_i = |DFT(kernel)|^2` of `A'A` under the periodic model.
    pub fn gram_spectrum(&self, shape: (usize, usize)) -> Result<BccbSpectrum> {
        let g = self.circulant_generator(shape)?;
        let fft = Fft2::new(shape.0, shape.1);
        let eig: Vec<f64> = fft.forward_real(&g).iter().map(|c| c.norm_sqr()).collect();
        BccbSpectrum::new(
            shape.0,
            shape.1,
            eig,
            GramKind::Data,
            self.boundary == Boundary::Periodic,
        )
    }
}

/// First-order finite differences `x[p + offset] - x[p]` along each direction.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDifference {
    directions: Vec<Direction>,
    boundary: Boundary,
}

impl FiniteDifference {
    /// Horizontal and vertical differences.
    pub fn new(boundary: Boundary) -> Self {
        Self {
            directions: vec![Direction::HORIZONTAL, Direction::VERTICAL],
            boundary,
        }
    }

    pub fn with_directions(directions: Vec<Direction>, boundary: Boundary) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::InvalidInput("need at least one difference direction".into()));
        }
        if directions.iter().any(|d| d.dr == 0 && d.dc == 0) {
            return Err(Error::InvalidInput("zero difference offset".into()));
        }
        Ok(Self {
            directions,
            boundary,
        })
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    fn check_grid(&self, shape: (usize, usize)) -> Result<()> {
        if shape.0 * shape.1 < 2 {
            return Err(Error::InvalidInput(format!(
                "finite differences need at least two pixels, got {}x{}",
                shape.0, shape.1
            )));
        }
        Ok(())
    }

    pub fn mask(&self, shape: (usize, usize)) -> Vec<bool> {
        let (h, w) = shape;
        let inside = |i: usize, off: isize, n: usize| (0..n as isize).contains(&(i as isize + off));
        let mut mask = Vec::with_capacity(self.directions.len() * h * w);
        for d in &self.directions {
            for r in 0..h {
                for c in 0..w {
                    mask.push(self.boundary == Boundary::Periodic || (inside(r, d.dr, h) && inside(c, d.dc, w)));
                }
            }
        }
        mask
    }

    /// A zero field laid out like this operator's range.
    pub fn zero_field(&self, shape: (usize, usize)) -> GradientField {
        GradientField::zeros(shape.0, shape.1, self.directions.clone(), self.mask(shape))
    }

    /// `C x`.
    pub fn forward(&self, x: &ImageGrid) -> Result<GradientField> {
        let shape = x.shape();
        self.check_grid(shape)?;
        let (h, w) = shape;
        let mut field = self.zero_field(shape);
        let xv = x.values();
        let mask = field.mask().to_vec();
        let dirs = &self.directions;
        par::for_each_row(field.values_mut(), w, |k, row| {
            let (d, r) = (dirs[k / h], k % h);
            let here = &xv[r * w..][..w];
            let there = &xv[wrap(r as isize + d.dr, h) * w..][..w];
            let keep = &mask[k * w..][..w];
            for (c, o) in row.iter_mut().enumerate() {
                if keep[c] {
                    *o = there[wrap(c as isize + d.dc, w)] - here[c];
                }
            }
        });
        Ok(field)
    }

    /// `C' g`.
    pub fn adjoint(&self, g: &GradientField) -> Result<ImageGrid> {
        let shape = (g.height(), g.width());
        self.check_grid(shape)?;
        if g.directions() != self.directions.as_slice() || g.mask() != self.mask(shape).as_slice() {
            return Err(Error::InvalidInput(
                "gradient field layout does not match the difference operator".into(),
            ));
        }
        let (h, w) = shape;
        let n = h * w;
        let gv = g.values();
        let mask = g.mask();
        let mut out = ImageGrid::zeros(h, w);
        par::for_each_row(out.values_mut(), w, |r, row| {
            for (c, o) in row.iter_mut().enumerate() {
                let p = r * w + c;
                let mut acc = 0.0;
                for (di, d) in self.directions.iter().enumerate() {
                    let base = di * n;
                    acc -= gv[base + p];
                    let (sr, sc) = (r as isize - d.dr, c as isize - d.dc);
                    let src = match self.boundary {
                        Boundary::Periodic => Some(wrap(sr, h) * w + wrap(sc, w)),
                        Boundary::Masked => (sr >= 0 && sr < h as isize && sc >= 0 && sc < w as isize)
                            .then(|| sr as usize * w + sc as usize),
                    };
                    if let Some(q) = src {
                        if mask[base + q] {
                            acc += gv[base + q];
                        }
                    }
                }
                *o = acc;
            }
        });
        Ok(out)
    }

    /// Eigenvalues `omega_i = sum_d |exp(i 2 pi k.offset_d) - 1|^2` of `C'C`
    /// under the periodic model. For a masked operator the mask is ignored
    /// and the spectrum is flagged approximate.
    pub fn gram_spectrum(&self, shape: (usize, usize)) -> Result<BccbSpectrum> {
        self.check_grid(shape)?;
        let (h, w) = shape;
        let eig = (0..h * w)
            .map(|k| {
                let (kr, kc) = ((k / w) as f64, (k % w) as f64);
                self.directions
                    .iter()
                    .map(|d| {
                        let theta =
                            2.0 * PI * (kr * d.dr as f64 / h as f64 + kc * d.dc as f64 / w as f64);
                        2.0 - 2.0 * theta.cos()
                    })
                    .sum::<f64>()
            })
            .collect();
        BccbSpectrum::new(h, w, eig, GramKind::Regularizer, self.boundary == Boundary::Periodic)
    }
}

/// Which Gram matrix a spectrum belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramKind {
    /// `A'A`, eigenvalues lambda.
    Data,
    /// `C'C`, eigenvalues omega.
    Regularizer,
    /// Anything else built directly from eigenvalues.
    Synthetic,
}

/// Real, nonnegative eigenvalues of a symmetric BCCB matrix, indexed by 2D
/// frequency (`k = kr * width + kc`, DC at 0).
#[derive(Debug, Clone, PartialEq)]
pub struct BccbSpectrum {
    height: usize,
    width: usize,
    eigenvalues: Vec<f64>,
    kind: GramKind,
    exact: bool,
}

impl BccbSpectrum {
    pub fn new(
        height: usize,
        width: usize,
        mut eigenvalues: Vec<f64>,
        kind: GramKind,
        exact: bool,
    ) -> Result<Self> {
        if eigenvalues.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "spectrum of {height}x{width} needs {} eigenvalues, got {}",
                height * width,
                eigenvalues.len()
            )));
        }
        for (k, ev) in eigenvalues.iter_mut().enumerate() {
            if !ev.is_finite() || *ev < -POSITIVITY_SLACK {
                return Err(Error::InvalidInput(format!(
                    "eigenvalue {ev} at index {k} is not a finite nonnegative number"
                )));
            }
            *ev = ev.max(0.0);
        }
        Ok(Self {
            height,
            width,
            eigenvalues,
            kind,
            exact,
        })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width], GramKind::Synthetic, true)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn kind(&self) -> GramKind {
        self.kind
    }

    /// False when computed from a masked operator's periodic surrogate.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn frequency(&self, k: usize) -> (usize, usize) {
        (k / self.width, k % self.width)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    pub(crate) fn ensure_same_shape(&self, other: &BccbSpectrum) -> Result<()> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.shape(),
                actual: other.shape(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankReport {
    pub full_rank: bool,
    /// Smallest eigenvalue of `S'S = A'A + C'C`.
    pub min_combined_eigenvalue: f64,
    pub argmin_frequency: (usize, usize),
}

/// Full-column-rank test of the stacked split operator `S = [A; C]`.
pub fn split_operator_rank_check(lambda: &BccbSpectrum, omega: &BccbSpectrum) -> Result<RankReport> {
    lambda.ensure_same_shape(omega)?;
    let (k, min) = lambda
        .eigenvalues()
        .iter()
        .zip(omega.eigenvalues())
        .map(|(l, o)| l + o)
        .enumerate()
        .fold((0, f64::INFINITY), |(bk, bv), (k, v)| if v < bv { (k, v) } else { (bk, bv) });
    Ok(RankReport {
        full_rank: min > RANK_TOLERANCE,
        min_combined_eigenvalue: min,
        argmin_frequency: lambda.frequency(k),
    })
}
