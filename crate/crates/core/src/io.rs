//! Image and spectrum file formats.
//!
//! * PGM (binary P5, 8-bit): images are linearly rescaled from their
//!   min/max to 0..=255, so this is for viewing, not round-tripping.
//! * Plain-text matrix: one image row per line, space-separated decimals
//!   printed with round-trip precision.
//! * Spectrum CSV: `freq_row,freq_col,lambda,omega`.

use std::fmt::Write as _;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageEncoder, Luma};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::operators::BccbSpectrum;
use crate::spectral::{DeltaSpectrum, RateReport};

pub fn write_pgm(img: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    let (lo, hi) = img.min_max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let out = GrayImage::from_fn(img.width() as u32, img.height() as u32, |c, r| {
        let v = (img.get(r as usize, c as usize) - lo) / span;
        Luma([(v * 255.0).round().clamp(0.0, 255.0) as u8])
    });
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(out.as_raw(), out.width(), out.height(), ExtendedColorType::L8)?;
    Ok(())
}

/// Reads any grayscale PNM as values in `[0, 1]`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    let values = img.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
    ImageGrid::new(h as usize, w as usize, values)
}

pub fn format_matrix(img: &ImageGrid) -> String {
    let mut s = String::new();
    for r in 0..img.height() {
        for c in 0..img.width() {
            if c > 0 {
                s.push(' ');
            }
            write!(s, "{:?}", img.get(r, c)).expect("write to string");
        }
        s.push('\n');
    }
    s
}

pub fn parse_matrix(text: &str) -> Result<ImageGrid> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("line {}: bad number `{t}`", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::InvalidInput(format!(
                    "line {}: expected {} columns, got {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    ImageGrid::new(height, width, rows.into_iter().flatten().collect())
}

pub fn write_matrix(img: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_matrix(img)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text)
}

/// Loads a `.txt`/`.mat` matrix file or any grayscale image.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("txt") | Some("mat") => read_matrix(path),
        _ => read_pgm(path),
    }
}

#[derive(Serialize)]
struct SpectrumRow {
    freq_row: usize,
    freq_col: usize,
    lambda: f64,
    omega: f64,
}

pub fn write_spectra_csv<W: std::io::Write>(lambda: &BccbSpectrum, omega: &BccbSpectrum, writer: W) -> Result<()> {
    lambda.ensure_same_shape(omega)?;
    let mut w = csv::Writer::from_writer(writer);
    for (k, (&l, &o)) in lambda.eigenvalues().iter().zip(omega.eigenvalues()).enumerate() {
        let (freq_row, freq_col) = lambda.frequency(k);
        w.serialize(SpectrumRow { freq_row, freq_col, lambda: l, omega: o })?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

#[derive(Serialize)]
struct RateRow {
    freq: usize,
    delta: f64,
    rate: f64,
}

/// Per-frequency rows followed by one summary line
/// `# radius=..,eta_star=..,rho_star=..,gamma=..`.
pub fn write_rates_csv<W: std::io::Write>(report: &RateReport, deltas: &DeltaSpectrum, mut writer: W) -> Result<()> {
    {
        let mut w = csv::Writer::from_writer(&mut writer);
        for (freq, (&delta, &rate)) in deltas.deltas().iter().zip(&report.rates).enumerate() {
            w.serialize(RateRow { freq, delta, rate })?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
    }
    writeln!(
        writer,
        "# case={},rho={:?},eta={:?},alpha={:?},radius={:?},eta_star={:?},rho_star={:?},gamma={:?}",
        report.case,
        report.rho,
        report.eta,
        report.alpha,
        report.spectral_radius,
        report.optimal_eta,
        report.optimal_rho,
        report.gamma
    )
    .map_err(|e| Error::io("<csv>", e))
}
