//! Image and gradient-field containers.

use crate::error::{Error, Result};
use crate::par;

/// A real-valued 2D image stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if values.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "expected {} values for a {height}x{width} image, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("image value at index {i}"),
            });
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        Self {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut img = Self::zeros(height, width);
        for r in 0..height {
            for c in 0..width {
                img.values[r * width + c] = f(r, c);
            }
        }
        img
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

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.width + col] = value;
    }

    pub fn ensure_shape(&self, shape: (usize, usize)) -> Result<()> {
        if self.shape() == shape {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: shape,
                actual: self.shape(),
            })
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `a * self + b * other`, elementwise.
    pub fn lincomb(&self, a: f64, other: &ImageGrid, b: f64) -> ImageGrid {
        debug_assert_eq!(self.shape(), other.shape());
        let mut out = self.clone();
        par::fill_indexed(&mut out.values, |i| a * self.values[i] + b * other.values[i]);
        out
    }

    pub fn add(&self, other: &ImageGrid) -> ImageGrid {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &ImageGrid) -> ImageGrid {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn scaled(&self, a: f64) -> ImageGrid {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        out
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ImageGrid) {
        debug_assert_eq!(self.shape(), other.shape());
        self.values
            .iter_mut()
            .zip(&other.values)
            .for_each(|(s, o)| *s += a * o);
    }

    pub fn dot(&self, other: &ImageGrid) -> f64 {
        par::dot(&self.values, &other.values)
    }

    pub fn norm_sq(&self) -> f64 {
        par::norm_sq(&self.values)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Root-mean-square difference.
    pub fn rmsd(&self, other: &ImageGrid) -> f64 {
        (self.sub(other).norm_sq() / self.len() as f64).sqrt()
    }

    pub fn max_abs_diff(&self, other: &ImageGrid) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// A difference direction as a (row, column) offset: the difference at pixel
/// `p` is `x[p + offset] - x[p]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Direction {
    pub dr: isize,
    pub dc: isize,
}

impl Direction {
    pub const HORIZONTAL: Direction = Direction { dr: 0, dc: 1 };
    pub const VERTICAL: Direction = Direction { dr: 1, dc: 0 };
}

/// Per-direction difference planes on an image grid, with a validity mask.
///
/// Planes are stored contiguously: plane `d` occupies
/// `values[d * h * w .. (d + 1) * h * w]`. Masked-out entries are kept at
/// exactly zero by every operation in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    height: usize,
    width: usize,
    directions: Vec<Direction>,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl GradientField {
    pub fn zeros(height: usize, width: usize, directions: Vec<Direction>, mask: Vec<bool>) -> Self {
        assert!(!directions.is_empty(), "at least one direction required");
        assert_eq!(mask.len(), directions.len() * height * width);
        Self {
            height,
            width,
            values: vec![0.0; mask.len()],
            directions,
            mask,
        }
    }

    pub fn from_values(
        height: usize,
        width: usize,
        directions: Vec<Direction>,
        mask: Vec<bool>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::InvalidInput("gradient field needs a direction".into()));
        }
        let n = directions.len() * height * width;
        if mask.len() != n || values.len() != n {
            return Err(Error::InvalidInput(format!(
                "gradient field expects {n} values and mask entries, got {} and {}",
                values.len(),
                mask.len()
            )));
        }
        let mut field = Self {
            height,
            width,
            directions,
            values,
            mask,
        };
        field.apply_mask();
        Ok(field)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn num_directions(&self) -> usize {
        self.directions.len()
    }

    pub fn plane(&self, d: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.values[d * n..(d + 1) * n]
    }

    pub fn plane_mask(&self, d: usize) -> &[bool] {
        let n = self.height * self.width;
        &self.mask[d * n..(d + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn apply_mask(&mut self) {
        self.values
            .iter_mut()
            .zip(&self.mask)
            .filter(|(_, &m)| !m)
            .for_each(|(v, _)| *v = 0.0);
    }

    /// A zero field with the same layout and mask.
    pub fn zeros_like(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            directions: self.directions.clone(),
            values: vec![0.0; self.values.len()],
            mask: self.mask.clone(),
        }
    }

    /// Same layout, new values (masked entries forced to zero).
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        let mut out = Self {
            height: self.height,
            width: self.width,
            directions: self.directions.clone(),
            values,
            mask: self.mask.clone(),
        };
        out.apply_mask();
        out
    }

    pub fn same_layout(&self, other: &GradientField) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.directions == other.directions
            && self.mask == other.mask
    }

    pub fn lincomb(&self, a: f64, other: &GradientField, b: f64) -> GradientField {
        debug_assert!(self.same_layout(other));
        let mut out = self.zeros_like();
        par::fill_indexed(&mut out.values, |i| a * self.values[i] + b * other.values[i]);
        out
    }

    pub fn add(&self, other: &GradientField) -> GradientField {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &GradientField) -> GradientField {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn scaled(&self, a: f64) -> GradientField {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        out
    }

    pub fn dot(&self, other: &GradientField) -> f64 {
        par::dot(&self.values, &other.values)
    }

    pub fn norm_sq(&self) -> f64 {
        par::norm_sq(&self.values)
    }

    pub fn max_abs_diff(&self, other: &GradientField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
