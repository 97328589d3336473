//! Log-linear diffusion tensor fitting and the FA / MD / principal
//! direction maps derived from it.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use ndarray::{ArrayView1, Zip};

use crate::error::{HarpError, Result};
use crate::geometry::{canonical_axis, Vec3};
use crate::sh::GradientTable;
use crate::volume::{DwiVolume, Mask, ScalarMap, VectorField};

/// Signals are clamped to this before taking the logarithm.
pub const SIGNAL_FLOOR: f64 = 1e-6;

/// Symmetric tensor in mm²/s, stored as `(Dxx, Dyy, Dzz, Dxy, Dxz, Dyz)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionTensor(pub [f64; 6]);

impl DiffusionTensor {
    pub fn isotropic(d: f64) -> Self {
        Self([d, d, d, 0.0, 0.0, 0.0])
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Self([
            m[(0, 0)],
            m[(1, 1)],
            m[(2, 2)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 2)],
        ])
    }

    /// Tensor with eigenvalues `evals` along the orthonormal columns `evecs`.
    pub fn from_eigen(evals: [f64; 3], evecs: [Vec3; 3]) -> Self {
        let mut m = Matrix3::zeros();
        for (l, v) in evals.iter().zip(&evecs) {
            for i in 0..3 {
                for j in 0..3 {
                    m[(i, j)] += l * v[i] * v[j];
                }
            }
        }
        Self::from_matrix(&m)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let [xx, yy, zz, xy, xz, yz] = self.0;
        Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz)
    }

    /// Apparent diffusivity along unit `g`: `g^T D g`.
    pub fn quadratic_form(&self, g: &Vec3) -> f64 {
        let [xx, yy, zz, xy, xz, yz] = self.0;
        xx * g[0] * g[0]
            + yy * g[1] * g[1]
            + zz * g[2] * g[2]
            + 2.0 * (xy * g[0] * g[1] + xz * g[0] * g[2] + yz * g[1] * g[2])
    }

    /// Eigenvalues in descending order with matching unit eigenvectors.
    pub fn eigen(&self) -> ([f64; 3], [Vec3; 3]) {
        let eig = SymmetricEigen::new(self.matrix());
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let vals = order.map(|i| eig.eigenvalues[i]);
        let vecs = order.map(|i| {
            let c = eig.eigenvectors.column(i);
            [c[0], c[1], c[2]]
        });
        (vals, vecs)
    }
}

/// Scalar summary of one tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorScalars {
    pub fa: f64,
    pub md: f64,
    pub principal_dir: Vec3,
    pub eigenvalues: [f64; 3],
}

impl TensorScalars {
    /// Any eigenvalue below zero (allowed in a raw fit, but suspicious).
    pub fn has_negative_eigenvalue(&self) -> bool {
        self.eigenvalues.iter().any(|&l| l < 0.0)
    }
}

/// FA, MD and the sign-normalized principal eigenvector.
pub fn tensor_scalars(t: &DiffusionTensor) -> TensorScalars {
    let (evals, evecs) = t.eigen();
    let sum_sq: f64 = evals.iter().map(|l| l * l).sum();
    if sum_sq == 0.0 {
        return TensorScalars {
            fa: 0.0,
            md: 0.0,
            principal_dir: [0.0, 0.0, 1.0],
            eigenvalues: evals,
        };
    }
    let md = evals.iter().sum::<f64>() / 3.0;
    let dev: f64 = evals.iter().map(|l| (l - md) * (l - md)).sum();
    let fa = (1.5 * dev / sum_sq).sqrt().clamp(0.0, 1.0);
    TensorScalars {
        fa,
        md,
        principal_dir: canonical_axis(&evecs[0]),
        eigenvalues: evals,
    }
}

/// Log-linear least-squares design for the diffusion-weighted entries of a
/// gradient table.
#[derive(Debug, Clone)]
pub struct TensorDesign {
    dw_idx: Vec<usize>,
    bvalues: Vec<f64>,
    /// Pseudo-inverse of the `n x 6` design, stored `6 x n`.
    pinv: DMatrix<f64>,
}

impl TensorDesign {
    pub fn new(gtab: &GradientTable) -> Result<Self> {
        let dw_idx = gtab.dw_indices();
        if dw_idx.len() < 6 {
            return Err(HarpError::IllPosed(format!(
                "tensor fit needs at least 6 diffusion-weighted directions, got {}",
                dw_idx.len()
            )));
        }
        let a = DMatrix::from_fn(dw_idx.len(), 6, |r, c| {
            let g = gtab.directions()[dw_idx[r]];
            match c {
                0 => g[0] * g[0],
                1 => g[1] * g[1],
                2 => g[2] * g[2],
                3 => 2.0 * g[0] * g[1],
                4 => 2.0 * g[0] * g[2],
                _ => 2.0 * g[1] * g[2],
            }
        });
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-10 * smax {
            return Err(HarpError::IllPosed(
                "gradient directions do not determine a tensor (rank-deficient design)".into(),
            ));
        }
        let pinv = svd
            .pseudo_inverse(1e-12 * smax)
            .map_err(|e| HarpError::IllPosed(e.to_string()))?;
        let bvalues = dw_idx.iter().map(|&i| gtab.bvalues()[i]).collect();
        Ok(Self {
            dw_idx,
            bvalues,
            pinv,
        })
    }

    /// Fit one voxel. `signals` covers every gradient-table entry and is
    /// already b0-normalized. The flag reports whether any signal hit the
    /// clamp.
    pub fn fit(&self, signals: ArrayView1<f64>) -> (DiffusionTensor, bool) {
        let mut clamped = false;
        let y: Vec<f64> = self
            .dw_idx
            .iter()
            .zip(&self.bvalues)
            .map(|(&i, &b)| {
                let s = signals[i];
                if !(s > SIGNAL_FLOOR) {
                    clamped = true;
                }
                -(s.max(SIGNAL_FLOOR)).ln() / b
            })
            .collect();
        let mut d = [0.0; 6];
        for (r, out) in d.iter_mut().enumerate() {
            *out = self.pinv.row(r).iter().zip(&y).map(|(p, v)| p * v).sum();
        }
        (DiffusionTensor(d), clamped)
    }
}

/// Fit a single voxel; see [`TensorDesign::fit`].
pub fn fit_tensor(signals: &[f64], gtab: &GradientTable) -> Result<(DiffusionTensor, bool)> {
    if signals.len() != gtab.len() {
        return Err(HarpError::invalid(format!(
            "{} signals for {} gradient entries",
            signals.len(),
            gtab.len()
        )));
    }
    let design = TensorDesign::new(gtab)?;
    Ok(design.fit(ArrayView1::from(signals)))
}

/// Whole-volume tensor scalar maps.
#[derive(Debug, Clone)]
pub struct TensorMaps {
    pub fa: ScalarMap,
    pub md: ScalarMap,
    pub principal_dir: VectorField,
    /// Masked voxels with clamped signals or negative eigenvalues.
    pub flagged_voxels: usize,
}

/// FA / MD / principal-direction maps from normalized signals.
pub fn tensor_maps(dwi: &DwiVolume, gtab: &GradientTable, mask: &Mask) -> Result<TensorMaps> {
    dwi.grid.ensure_same(&mask.grid, "tensor_maps")?;
    if dwi.n_volumes() != gtab.len() {
        return Err(HarpError::invalid(format!(
            "volume has {} entries but gradient table has {}",
            dwi.n_volumes(),
            gtab.len()
        )));
    }
    let design = TensorDesign::new(gtab)?;
    let grid = dwi.grid;
    let mut fa = ScalarMap::zeros(grid);
    let mut md = ScalarMap::zeros(grid);
    let mut dirs = VectorField::zeros(grid);
    let mut flags = vec![false; grid.n_voxels()];
    Zip::from(dwi.signals.rows())
        .and(&mask.values)
        .and(&mut fa.values)
        .and(&mut md.values)
        .and(&mut dirs.values)
        .and(&mut flags)
        .par_for_each(|sig, &m, fa, md, dir, flag| {
            if !m {
                return;
            }
            let (t, clamped) = design.fit(sig);
            let s = tensor_scalars(&t);
            *fa = s.fa;
            *md = s.md;
            *dir = s.principal_dir;
            *flag = clamped || s.has_negative_eigenvalue();
        });
    let flagged_voxels = flags.iter().filter(|&&f| f).count();
    Ok(TensorMaps {
        fa,
        md,
        principal_dir: dirs,
        flagged_voxels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn six_plus_directions() -> GradientTable {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut dirs = vec![[0.0; 3]];
        dirs.extend([
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [s, s, 0.0],
            [s, 0.0, s],
            [0.0, s, s],
            [s, -s, 0.0],
            [0.0, s, -s],
        ]);
        let mut b = vec![1000.0; dirs.len()];
        b[0] = 0.0;
        GradientTable::new(dirs, b).unwrap()
    }

    fn synth(t: &DiffusionTensor, g: &GradientTable) -> Vec<f64> {
        (0..g.len())
            .map(|i| {
                if g.is_b0(i) {
                    1.0
                } else {
                    (-g.bvalues()[i] * t.quadratic_form(&g.directions()[i])).exp()
                }
            })
            .collect()
    }

    #[test]
    fn isotropic_recovery() {
        let g = six_plus_directions();
        let d = 0.8e-3;
        let (t, clamped) = fit_tensor(&synth(&DiffusionTensor::isotropic(d), &g), &g).unwrap();
        assert!(!clamped);
        let want = DiffusionTensor::isotropic(d);
        for k in 0..6 {
            assert!((t.0[k] - want.0[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_signal_is_clamped_not_fatal() {
        let g = six_plus_directions();
        let mut s = synth(&DiffusionTensor::isotropic(1e-3), &g);
        s[3] = 0.0;
        let (t, clamped) = fit_tensor(&s, &g).unwrap();
        assert!(clamped);
        assert!(t.0.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn collinear_design_is_ill_posed() {
        let dirs = vec![[0.0, 0.0, 1.0]; 7];
        let g = GradientTable::new(dirs, vec![1000.0; 7]).unwrap();
        assert!(matches!(TensorDesign::new(&g), Err(HarpError::IllPosed(_))));
    }

    #[test]
    fn closed_form_scalars() {
        let iso = tensor_scalars(&DiffusionTensor::isotropic(0.9e-3));
        assert!(iso.fa.abs() < 1e-12);
        assert!((iso.md - 0.9e-3).abs() < 1e-18);

        let stick = tensor_scalars(&DiffusionTensor([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        assert!((stick.fa - 1.0).abs() < 1e-12);
        assert_eq!(stick.principal_dir, [1.0, 0.0, 0.0]);

        // (1.7, 0.2, 0.2) x 1e-3: FA = sqrt(1.5 * 1.5 / 2.97).
        let prolate = tensor_scalars(&DiffusionTensor([0.2e-3, 0.2e-3, 1.7e-3, 0.0, 0.0, 0.0]));
        assert!((prolate.md - 0.7e-3).abs() < 1e-15);
        assert!((prolate.fa - (2.25f64 / 2.97).sqrt()).abs() < 1e-12);
        assert!((prolate.fa - 0.870).abs() < 5e-4);
        assert_eq!(prolate.principal_dir, [0.0, 0.0, 1.0]);

        let zero = tensor_scalars(&DiffusionTensor([0.0; 6]));
        assert_eq!(
            (zero.fa, zero.md, zero.principal_dir),
            (0.0, 0.0, [0.0, 0.0, 1.0])
        );
    }

    #[test]
    fn principal_direction_sign_is_normalized() {
        let v = crate::geometry::normalize(&[0.3, 0.4, -0.5]);
        let u = crate::geometry::normalize(&crate::geometry::cross(&v, &[1.0, 0.0, 0.0]));
        let w = crate::geometry::cross(&v, &u);
        let t = DiffusionTensor::from_eigen([1.5e-3, 0.4e-3, 0.3e-3], [v, u, w]);
        let s = tensor_scalars(&t);
        assert!(s.principal_dir[2] > 0.0);
        assert!((crate::geometry::dot(&s.principal_dir, &v).abs() - 1.0).abs() < 1e-12);
    }
}
