//! Real, even-order spherical harmonics: basis construction, least-squares
//! fitting of diffusion signals and reconstruction from coefficients.
//!
//! Coefficients are laid out in order blocks `l = 0, 2, .., lmax`; within a
//! block degrees run `m = -l..=l`. For `lmax = 8` the blocks are
//! `[0]`, `[1..=5]`, `[6..=14]`, `[15..=27]`, `[28..=44]`.

pub(crate) mod basis;
mod fit;
mod gradients;

pub use basis::{build_basis, BasisMatrix};
pub use fit::{fit_sh_volume, reconstruct_dwi, ShFit, ShFitOptions, ShFitter};
pub use gradients::{GradientTable, B0_THRESHOLD, SHELL_TOLERANCE};

use std::ops::Range;

use ndarray::{Array2, ArrayView1};

use crate::error::{HarpError, Result};
use crate::volume::Grid;

/// Maximum SH order used throughout the harmonization pipeline.
pub const LMAX: usize = 8;
/// Number of coefficients for `LMAX`.
pub const N_COEFFS: usize = 45;
/// Even orders present for `LMAX`.
pub const ORDERS: [usize; 5] = [0, 2, 4, 6, 8];
/// Number of order blocks for `LMAX`.
pub const N_ORDERS: usize = ORDERS.len();

/// Coefficient count of an even expansion up to `lmax`: sum of `2l + 1`.
pub fn n_coeffs(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 2) / 2
}

pub(crate) fn check_lmax(lmax: usize) -> Result<()> {
    if !lmax.is_multiple_of(2) || lmax > LMAX {
        return Err(HarpError::invalid(format!(
            "lmax must be one of 0, 2, 4, 6, 8 (got {lmax})"
        )));
    }
    Ok(())
}

/// Index range of the order-`l` block.
pub fn order_block(l: usize) -> Range<usize> {
    debug_assert!(l.is_multiple_of(2));
    let start = if l == 0 { 0 } else { n_coeffs(l - 2) };
    start..start + 2 * l + 1
}

/// Order of the block containing coefficient index `k`.
pub fn index_order_map(k: usize) -> Result<usize> {
    if k >= N_COEFFS {
        return Err(HarpError::invalid(format!(
            "coefficient index {k} is outside 0..{N_COEFFS}"
        )));
    }
    Ok(block_of(k) * 2)
}

/// Block number (0..5) of coefficient index `k`; unchecked.
#[inline]
pub(crate) fn block_of(k: usize) -> usize {
    match k {
        0 => 0,
        1..=5 => 1,
        6..=14 => 2,
        15..=27 => 3,
        _ => 4,
    }
}

/// Per-coefficient order `l_k` for an expansion up to `lmax`.
pub fn coefficient_orders(lmax: usize) -> Vec<usize> {
    (0..=lmax)
        .step_by(2)
        .flat_map(|l| std::iter::repeat_n(l, 2 * l + 1))
        .collect()
}

/// Multiply every coefficient of each order block by that block's scale.
pub fn scale_by_order(coeffs: ArrayView1<f64>, scales: &[f64; N_ORDERS]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, &c)| c * scales[block_of(k)])
        .collect()
}

/// Sum of squared coefficients per order block.
pub fn order_energies(coeffs: &[f64]) -> [f64; N_ORDERS] {
    let mut energy = [0.0; N_ORDERS];
    for (k, &c) in coeffs.iter().enumerate() {
        energy[block_of(k)] += c * c;
    }
    energy
}

/// Grid of SH coefficients, one row of `n_coeffs(lmax)` values per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct ShVolume {
    pub grid: Grid,
    pub lmax: usize,
    pub coeffs: Array2<f64>,
}

impl ShVolume {
    pub fn new(grid: Grid, lmax: usize, coeffs: Array2<f64>) -> Result<Self> {
        check_lmax(lmax)?;
        if coeffs.ncols() != n_coeffs(lmax) {
            return Err(HarpError::invalid(format!(
                "expected {} coefficients per voxel for lmax {lmax}, got {}",
                n_coeffs(lmax),
                coeffs.ncols()
            )));
        }
        if coeffs.nrows() != grid.n_voxels() {
            return Err(HarpError::invalid(format!(
                "coefficient array has {} rows for {} voxels",
                coeffs.nrows(),
                grid.n_voxels()
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(HarpError::invalid("SH coefficients must be finite"));
        }
        Ok(Self { grid, lmax, coeffs })
    }

    pub fn zeros(grid: Grid, lmax: usize) -> Self {
        Self {
            grid,
            lmax,
            coeffs: Array2::zeros((grid.n_voxels(), n_coeffs(lmax))),
        }
    }

    pub fn n_coeffs(&self) -> usize {
        self.coeffs.ncols()
    }

    /// Fails unless the volume carries the full 45-coefficient expansion.
    pub fn ensure_full_order(&self) -> Result<()> {
        if self.n_coeffs() != N_COEFFS {
            return Err(HarpError::invalid(format!(
                "expected {N_COEFFS} coefficients (lmax {LMAX}), volume has {} (lmax {})",
                self.n_coeffs(),
                self.lmax
            )));
        }
        Ok(())
    }
}
