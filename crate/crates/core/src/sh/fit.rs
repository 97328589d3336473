use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView1, ArrayViewMut1, Zip};

use super::basis::build_basis;
use super::{check_lmax, coefficient_orders, n_coeffs, GradientTable, ShVolume, LMAX};
use crate::error::{HarpError, Result};
use crate::volume::{DwiVolume, Mask};

/// Options for [`fit_sh_volume`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShFitOptions {
    pub lmax: usize,
    /// Weight of the Laplace-Beltrami penalty `sum_k l_k^2 (l_k+1)^2 c_k^2`.
    pub reg_lambda: f64,
    /// Shell to fit when the table holds several b-values.
    pub shell: Option<f64>,
}

impl Default for ShFitOptions {
    fn default() -> Self {
        Self {
            lmax: LMAX,
            reg_lambda: 0.006,
            shell: None,
        }
    }
}

impl ShFitOptions {
    /// Unregularized fit, used for noise-free data.
    pub fn exact() -> Self {
        Self {
            reg_lambda: 0.0,
            ..Self::default()
        }
    }
}

/// Result of fitting a whole volume.
#[derive(Debug, Clone)]
pub struct ShFit {
    pub sh: ShVolume,
    /// Masked voxels zeroed because their mean b0 signal was not positive.
    pub flagged_voxels: usize,
}

/// Precomputed regularized least-squares projector for one gradient table.
#[derive(Debug, Clone)]
pub struct ShFitter {
    lmax: usize,
    b0_idx: Vec<usize>,
    shell_idx: Vec<usize>,
    /// `(B^T B + lambda L)^-1 B^T`, shape `n_coeffs x n_shell`.
    projector: Array2<f64>,
}

impl ShFitter {
    pub fn new(gtab: &GradientTable, opts: &ShFitOptions) -> Result<Self> {
        check_lmax(opts.lmax)?;
        if !(opts.reg_lambda >= 0.0) {
            return Err(HarpError::invalid(format!(
                "reg_lambda must be non-negative (got {})",
                opts.reg_lambda
            )));
        }
        let shell_idx = gtab.shell_indices(opts.shell)?;
        let b0_idx = gtab.b0_indices();
        if b0_idx.is_empty() {
            return Err(HarpError::invalid(
                "gradient table has no b = 0 entries for signal normalization",
            ));
        }
        let ncoef = n_coeffs(opts.lmax);
        if shell_idx.len() < ncoef && opts.reg_lambda == 0.0 {
            return Err(HarpError::IllPosed(format!(
                "{} directions cannot determine {ncoef} coefficients without regularization",
                shell_idx.len()
            )));
        }
        let dirs: Vec<[f64; 3]> = shell_idx.iter().map(|&i| gtab.directions()[i]).collect();
        let projector = least_squares_projector(&dirs, opts.lmax, opts.reg_lambda)?;
        Ok(Self {
            lmax: opts.lmax,
            b0_idx,
            shell_idx,
            projector,
        })
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn shell_indices(&self) -> &[usize] {
        &self.shell_idx
    }

    /// Fit one voxel's raw signals. Returns `false` (and leaves `out` zero)
    /// when the mean b0 signal is not positive.
    pub fn fit_voxel(&self, signals: ArrayView1<f64>, mut out: ArrayViewMut1<f64>) -> bool {
        let b0 = self.b0_idx.iter().map(|&i| signals[i]).sum::<f64>() / self.b0_idx.len() as f64;
        out.fill(0.0);
        if !(b0 > 0.0) {
            return false;
        }
        for (row, o) in self.projector.rows().into_iter().zip(out.iter_mut()) {
            *o = row
                .iter()
                .zip(&self.shell_idx)
                .map(|(p, &i)| p * signals[i])
                .sum::<f64>()
                / b0;
        }
        true
    }
}

fn least_squares_projector(dirs: &[[f64; 3]], lmax: usize, reg_lambda: f64) -> Result<Array2<f64>> {
    let basis = build_basis(dirs, lmax)?;
    let b = DMatrix::from_fn(dirs.len(), basis.n_coeffs(), |i, j| basis.matrix[[i, j]]);
    let mut normal = b.transpose() * &b;
    if reg_lambda > 0.0 {
        for (k, l) in coefficient_orders(lmax).into_iter().enumerate() {
            let lf = l as f64;
            normal[(k, k)] += reg_lambda * lf * lf * (lf + 1.0) * (lf + 1.0);
        }
    }
    let chol = normal
        .cholesky()
        .ok_or_else(|| HarpError::IllPosed("SH normal equations are singular".into()))?;
    let proj = chol.solve(&b.transpose());
    Ok(Array2::from_shape_fn(proj.shape(), |(i, j)| proj[(i, j)]))
}

/// Fit SH coefficients to every masked voxel after normalizing by its mean
/// b0 signal. Unmasked voxels are zero.
pub fn fit_sh_volume(
    dwi: &DwiVolume,
    gtab: &GradientTable,
    mask: &Mask,
    opts: &ShFitOptions,
) -> Result<ShFit> {
    dwi.grid.ensure_same(&mask.grid, "fit_sh_volume")?;
    if dwi.n_volumes() != gtab.len() {
        return Err(HarpError::invalid(format!(
            "volume has {} entries but gradient table has {}",
            dwi.n_volumes(),
            gtab.len()
        )));
    }
    let fitter = ShFitter::new(gtab, opts)?;
    let mut coeffs = Array2::zeros((dwi.grid.n_voxels(), n_coeffs(opts.lmax)));
    let mut ok = vec![true; dwi.grid.n_voxels()];
    Zip::from(coeffs.rows_mut())
        .and(dwi.signals.rows())
        .and(&mask.values)
        .and(&mut ok)
        .par_for_each(|out, sig, &m, ok| {
            if m {
                *ok = fitter.fit_voxel(sig, out);
            }
        });
    let flagged_voxels = ok.iter().filter(|&&o| !o).count();
    if flagged_voxels > 0 {
        log::warn!("{flagged_voxels} masked voxels had a non-positive mean b0 and were zeroed");
    }
    let sh = ShVolume::new(dwi.grid, opts.lmax, coeffs)?;
    Ok(ShFit { sh, flagged_voxels })
}

/// Evaluate normalized signals at every entry of `gtab`.
///
/// Diffusion-weighted entries are `B c`; b0 entries are 1 (the normalized
/// b0) except in all-zero voxels, which stay zero.
pub fn reconstruct_dwi(sh: &ShVolume, gtab: &GradientTable) -> Result<DwiVolume> {
    if gtab.is_empty() {
        return Err(HarpError::invalid("gradient table is empty"));
    }
    let dw = gtab.dw_indices();
    let dirs: Vec<[f64; 3]> = dw.iter().map(|&i| gtab.directions()[i]).collect();
    let basis = if dirs.is_empty() {
        None
    } else {
        Some(build_basis(&dirs, sh.lmax)?)
    };
    let mut signals = Array2::zeros((sh.grid.n_voxels(), gtab.len()));
    let b0_idx = gtab.b0_indices();
    Zip::from(signals.rows_mut())
        .and(sh.coeffs.rows())
        .par_for_each(|mut out, c| {
            if c.iter().all(|&v| v == 0.0) {
                return;
            }
            for &i in &b0_idx {
                out[i] = 1.0;
            }
            if let Some(basis) = &basis {
                for (row, &i) in basis.matrix.rows().into_iter().zip(&dw) {
                    out[i] = row.dot(&c);
                }
            }
        });
    DwiVolume::new(sh.grid, signals)
}
