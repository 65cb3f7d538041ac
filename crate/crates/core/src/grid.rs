//! Dense single- and multi-channel grids.
//!
//! Both containers are row-major over cells; `BevGrid` stores the channel
//! vector of each cell contiguously.

use crate::error::{Error, Result};
use crate::geometry::{BevCell, GridSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ScalarMap {
    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        ScalarMap {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        ScalarMap::filled(height, width, 0.0)
    }

    pub fn for_spec(spec: &GridSpec) -> Self {
        ScalarMap::zeros(spec.height(), spec.width())
    }

    pub fn from_vec(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {height}x{width} map",
                values.len()
            )));
        }
        Ok(ScalarMap {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, cell: BevCell) -> f64 {
        self.values[cell.row * self.width + cell.col]
    }

    pub fn set(&mut self, cell: BevCell, value: f64) {
        self.values[cell.row * self.width + cell.col] = value;
    }

    pub fn matches(&self, spec: &GridSpec) -> bool {
        self.height == spec.height() && self.width == spec.width()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub(crate) fn ensure_same_dims(&self, other: &ScalarMap) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl BevGrid {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        BevGrid {
            height,
            width,
            channels,
            values: vec![0.0; height * width * channels],
        }
    }

    pub fn for_spec(spec: &GridSpec, channels: usize) -> Self {
        BevGrid::zeros(spec.height(), spec.width(), channels)
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {height}x{width}x{channels} grid",
                values.len()
            )));
        }
        Ok(BevGrid {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cell_count(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Channel vector of the cell at flat index `idx`.
    pub fn cell(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.channels..(idx + 1) * self.channels]
    }

    pub fn cell_mut(&mut self, idx: usize) -> &mut [f64] {
        let c = self.channels;
        &mut self.values[idx * c..(idx + 1) * c]
    }

    pub fn at(&self, cell: BevCell) -> &[f64] {
        self.cell(cell.row * self.width + cell.col)
    }

    pub fn at_mut(&mut self, cell: BevCell) -> &mut [f64] {
        let idx = cell.row * self.width + cell.col;
        self.cell_mut(idx)
    }

    pub fn get(&self, cell: BevCell, channel: usize) -> f64 {
        self.at(cell)[channel]
    }

    /// Channels `[start, end)` as a new grid.
    pub fn slice_channels(&self, start: usize, end: usize) -> BevGrid {
        assert!(start <= end && end <= self.channels);
        let c = end - start;
        let mut out = BevGrid::zeros(self.height, self.width, c);
        for idx in 0..self.cell_count() {
            out.cell_mut(idx).copy_from_slice(&self.cell(idx)[start..end]);
        }
        out
    }

    /// Single channel as a scalar map.
    pub fn channel_map(&self, channel: usize) -> ScalarMap {
        let values = (0..self.cell_count())
            .map(|idx| self.cell(idx)[channel])
            .collect();
        ScalarMap {
            height: self.height,
            width: self.width,
            values,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn count_nonzero_cells(&self) -> usize {
        (0..self.cell_count())
            .filter(|&i| self.cell(i).iter().any(|&v| v != 0.0))
            .count()
    }

    pub(crate) fn ensure_same_plane(&self, other: &BevGrid) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}
