//! LinearRISH baseline: per-voxel, per-order rotationally invariant energies
//! and square-root-ratio scale maps between paired groups.

use ndarray::{Array2, Zip};

use crate::error::{HarpError, Result};
use crate::sh::{block_of, order_energies, ShVolume, N_ORDERS};
use crate::volume::{Grid, Mask};

pub const DEFAULT_EPS: f64 = 1e-10;
pub const DEFAULT_SMAX: f64 = 10.0;

/// Per-voxel energies `R_l = sum_m c_lm^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RishVolume {
    pub grid: Grid,
    pub energies: Array2<f64>,
}

/// Per-voxel multiplicative scales for each order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMapVolume {
    pub grid: Grid,
    pub scales: Array2<f64>,
    pub eps: f64,
    pub s_max: f64,
}

impl ScaleMapVolume {
    pub fn new(grid: Grid, scales: Array2<f64>, eps: f64, s_max: f64) -> Result<Self> {
        if scales.dim() != (grid.n_voxels(), N_ORDERS) {
            return Err(HarpError::invalid(format!(
                "scale map has shape {:?}, expected ({}, {N_ORDERS})",
                scales.dim(),
                grid.n_voxels()
            )));
        }
        if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(HarpError::invalid(
                "scale maps must be finite and non-negative",
            ));
        }
        Ok(Self {
            grid,
            scales,
            eps,
            s_max,
        })
    }
}

pub fn compute_rish(sh: &ShVolume, mask: &Mask) -> Result<RishVolume> {
    sh.grid.ensure_same(&mask.grid, "compute_rish")?;
    sh.ensure_full_order()?;
    let mut energies = Array2::zeros((sh.grid.n_voxels(), N_ORDERS));
    Zip::from(energies.rows_mut())
        .and(sh.coeffs.rows())
        .and(&mask.values)
        .par_for_each(|mut e, c, &m| {
            if m {
                let r = order_energies(c.as_slice().expect("standard layout"));
                e.iter_mut().zip(r).for_each(|(o, v)| *o = v);
            }
        });
    Ok(RishVolume {
        grid: sh.grid,
        energies,
    })
}

fn group_mean(group: &[ShVolume], mask: &Mask) -> Result<Array2<f64>> {
    let mut sum = Array2::zeros((mask.grid.n_voxels(), N_ORDERS));
    for sh in group {
        sum += &compute_rish(sh, mask)?.energies;
    }
    Ok(sum / group.len() as f64)
}

/// `s_l = sqrt((mean_tgt R_l + eps) / (mean_src R_l + eps))`, clipped to
/// `[0, s_max]`; voxels outside the mask get unit scales.
pub fn fit_scale_maps(
    src_group: &[ShVolume],
    tgt_group: &[ShVolume],
    mask: &Mask,
    eps: f64,
    s_max: f64,
) -> Result<ScaleMapVolume> {
    if src_group.is_empty() || tgt_group.is_empty() {
        return Err(HarpError::invalid("both groups need at least one volume"));
    }
    if !(eps >= 0.0) || !(s_max > 0.0) {
        return Err(HarpError::invalid(format!(
            "need eps >= 0 and s_max > 0 (got {eps}, {s_max})"
        )));
    }
    for sh in src_group.iter().chain(tgt_group) {
        sh.grid.ensure_same(&mask.grid, "fit_scale_maps")?;
        sh.ensure_full_order()?;
    }
    let src = group_mean(src_group, mask)?;
    let tgt = group_mean(tgt_group, mask)?;
    let mut scales = Array2::ones((mask.grid.n_voxels(), N_ORDERS));
    Zip::from(scales.rows_mut())
        .and(src.rows())
        .and(tgt.rows())
        .and(&mask.values)
        .par_for_each(|mut s, rs, rt, &m| {
            if !m {
                return;
            }
            for l in 0..N_ORDERS {
                let ratio = (rt[l] + eps) / (rs[l] + eps);
                s[l] = if ratio.is_finite() {
                    ratio.sqrt().clamp(0.0, s_max)
                } else {
                    1.0
                };
            }
        });
    ScaleMapVolume::new(mask.grid, scales, eps, s_max)
}

/// Order-block multiplication by the spatially varying scales.
pub fn apply_scale_maps(maps: &ScaleMapVolume, sh: &ShVolume, mask: &Mask) -> Result<ShVolume> {
    sh.grid.ensure_same(&maps.grid, "apply_scale_maps")?;
    sh.grid.ensure_same(&mask.grid, "apply_scale_maps")?;
    sh.ensure_full_order()?;
    let mut out = sh.clone();
    Zip::from(out.coeffs.rows_mut())
        .and(maps.scales.rows())
        .and(&mask.values)
        .par_for_each(|mut c, s, &m| {
            if m {
                c.iter_mut()
                    .enumerate()
                    .for_each(|(k, v)| *v *= s[block_of(k)]);
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_voxel(coeffs: Vec<f64>) -> (ShVolume, Mask) {
        let grid = Grid::new([1, 1, 1], [1.0; 3]);
        let sh = ShVolume::new(grid, 8, Array2::from_shape_vec((1, 45), coeffs).unwrap()).unwrap();
        (sh, Mask::full(grid))
    }

    #[test]
    fn single_coefficient_energy() {
        let mut c = vec![0.0; 45];
        c[3] = -0.7;
        let (sh, mask) = one_voxel(c);
        let r = compute_rish(&sh, &mask).unwrap();
        let row: Vec<f64> = r.energies.row(0).to_vec();
        assert!((row[1] - 0.49).abs() < 1e-15);
        assert_eq!(row.iter().filter(|&&e| e != 0.0).count(), 1);
    }

    #[test]
    fn identical_groups_give_unit_scales() {
        let c: Vec<f64> = (0..45).map(|k| 1.0 / (k + 1) as f64).collect();
        let (sh, mask) = one_voxel(c);
        let group = std::slice::from_ref(&sh);
        let maps = fit_scale_maps(group, group, &mask, DEFAULT_EPS, DEFAULT_SMAX).unwrap();
        assert!(maps.scales.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn mismatched_dims_rejected() {
        let (sh, mask) = one_voxel(vec![1.0; 45]);
        let other = ShVolume::zeros(Grid::new([2, 1, 1], [1.0; 3]), 8);
        assert!(fit_scale_maps(&[sh], &[other], &mask, DEFAULT_EPS, DEFAULT_SMAX).is_err());
    }
}
