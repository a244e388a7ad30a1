//! Square spatial cells used to pool delay-domain power.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::Label2D;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub center: Label2D,
    pub members: Vec<usize>,
}

/// Partition of sample labels into `spacing`-sized squares anchored at the
/// lower-left corner of their bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    spacing: f64,
    origin: Label2D,
    cells: BTreeMap<(i64, i64), Cell>,
    cell_of: Vec<(i64, i64)>,
}

impl CellGrid {
    pub fn build(labels: &[Label2D], spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidArgument(format!("cell spacing must be > 0 (got {spacing})")));
        }
        if labels.is_empty() {
            return Err(Error::Empty("no samples to place in cells".into()));
        }
        let origin = Label2D {
            x: labels.iter().map(|l| l.x).fold(f64::INFINITY, f64::min),
            y: labels.iter().map(|l| l.y).fold(f64::INFINITY, f64::min),
        };
        let mut cells: BTreeMap<(i64, i64), Cell> = BTreeMap::new();
        let mut cell_of = Vec::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            let key = (
                ((l.x - origin.x) / spacing).floor() as i64,
                ((l.y - origin.y) / spacing).floor() as i64,
            );
            cells
                .entry(key)
                .or_insert_with(|| Cell {
                    center: Label2D {
                        x: origin.x + (key.0 as f64 + 0.5) * spacing,
                        y: origin.y + (key.1 as f64 + 0.5) * spacing,
                    },
                    members: Vec::new(),
                })
                .members
                .push(i);
            cell_of.push(key);
        }
        Ok(Self {
            spacing,
            origin,
            cells,
            cell_of,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> Label2D {
        self.origin
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Cells in row-major key order.
    pub fn cells(&self) -> impl Iterator<Item = (&(i64, i64), &Cell)> {
        self.cells.iter()
    }

    pub fn cell_key(&self, sample: usize) -> (i64, i64) {
        self.cell_of[sample]
    }

    pub fn cell_of(&self, sample: usize) -> &Cell {
        &self.cells[&self.cell_of[sample]]
    }
}
