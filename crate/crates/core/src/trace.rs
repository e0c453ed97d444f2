//! Per-iteration metric traces and their CSV form.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// The converged solution a run is measured against.
#[derive(Debug, Clone)]
pub struct Reference {
    pub x: ImageGrid,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricRecord {
    pub iter: usize,
    pub cost: f64,
    /// `(cost - ref_cost) / ref_cost`, or the absolute difference when the
    /// reference cost is zero (see [`MetricTrace::absolute_cost_error`]).
    pub rel_cost_err: Option<f64>,
    pub rmsd: Option<f64>,
    /// Relative residual of the x-update solve that produced this iterate.
    pub inner_residual: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTrace {
    pub records: Vec<MetricRecord>,
    pub absolute_cost_error: bool,
}

impl MetricTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&MetricRecord> {
        self.records.last()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cost).collect()
    }

    /// First iteration whose cost error is at or below `tolerance`.
    pub fn iterations_to(&self, tolerance: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.rel_cost_err.is_some_and(|e| e <= tolerance))
            .map(|r| r.iter)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Cost error and RMSD of an iterate against a reference.
pub fn metrics(x: &ImageGrid, cost: f64, reference: &Reference) -> Result<(f64, f64, bool)> {
    x.ensure_shape(reference.x.shape())?;
    let rmsd = x.rmsd(&reference.x);
    if reference.cost == 0.0 {
        Ok((cost - reference.cost, rmsd, true))
    } else {
        Ok(((cost - reference.cost) / reference.cost, rmsd, false))
    }
}
