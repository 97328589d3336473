//! In-memory volume containers.
//!
//! Every 4D quantity is stored voxel-major: one row per voxel (x fastest,
//! then y, then z) and one column per component. Spatial bookkeeping lives
//! in [`Grid`].

use ndarray::Array2;

use crate::error::{HarpError, Result};

/// Spatial extent and voxel size of a 3D grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dims: [usize; 3],
    /// Voxel size in mm.
    pub voxel_size: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], voxel_size: [f64; 3]) -> Self {
        Self { dims, voxel_size }
    }

    pub fn n_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let y = (index / self.dims[0]) % self.dims[1];
        let z = index / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    /// Spatial extents must agree; voxel sizes are informational.
    pub fn ensure_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self.dims != other.dims {
            return Err(HarpError::invalid(format!(
                "{what}: grid dimensions {:?} and {:?} differ",
                self.dims, other.dims
            )));
        }
        Ok(())
    }
}

/// Boolean voxel mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub grid: Grid,
    pub values: Vec<bool>,
}

impl Mask {
    pub fn new(grid: Grid, values: Vec<bool>) -> Result<Self> {
        if values.len() != grid.n_voxels() {
            return Err(HarpError::invalid(format!(
                "mask has {} values for {} voxels",
                values.len(),
                grid.n_voxels()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn full(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![true; grid.n_voxels()],
        }
    }

    pub fn empty(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![false; grid.n_voxels()],
        }
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&m| m).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        self.grid.ensure_same(&other.grid, "mask intersection")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a && b)
            .collect();
        Ok(Mask {
            grid: self.grid,
            values,
        })
    }

    pub fn and_not(&self, other: &Mask) -> Result<Mask> {
        self.grid.ensure_same(&other.grid, "mask difference")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a && !b)
            .collect();
        Ok(Mask {
            grid: self.grid,
            values,
        })
    }
}

/// One scalar per voxel (FA, MD, GFA, weights...).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarMap {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_voxels()],
        }
    }

    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_voxels() {
            return Err(HarpError::invalid(format!(
                "scalar map has {} values for {} voxels",
                values.len(),
                grid.n_voxels()
            )));
        }
        Ok(Self { grid, values })
    }
}

/// A 3-vector per voxel, e.g. principal fiber directions.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub values: Vec<[f64; 3]>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![[0.0; 3]; grid.n_voxels()],
        }
    }
}

/// Diffusion-weighted signals, one row per voxel and one column per volume.
#[derive(Debug, Clone, PartialEq)]
pub struct DwiVolume {
    pub grid: Grid,
    pub signals: Array2<f64>,
}

impl DwiVolume {
    pub fn new(grid: Grid, signals: Array2<f64>) -> Result<Self> {
        if signals.nrows() != grid.n_voxels() {
            return Err(HarpError::invalid(format!(
                "signal array has {} rows for {} voxels",
                signals.nrows(),
                grid.n_voxels()
            )));
        }
        Ok(Self { grid, signals })
    }

    pub fn n_volumes(&self) -> usize {
        self.signals.ncols()
    }
}
