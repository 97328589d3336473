use std::f64::consts::PI;

use ndarray::Array2;

use super::{check_lmax, n_coeffs};
use crate::error::{HarpError, Result};

const UNIT_TOLERANCE: f64 = 1e-6;

/// Real SH values, one row per sampling direction and one column per
/// basis function.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub lmax: usize,
    pub matrix: Array2<f64>,
}

impl BasisMatrix {
    pub fn n_directions(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_coeffs(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Evaluate the real even SH basis at unit `directions`.
///
/// `m = 0` is the zonal harmonic, `m > 0` is `sqrt(2)` times the cosine part
/// and `m < 0` is `sqrt(2)` times the sine part of the complex harmonic of
/// degree `|m|`. The Condon-Shortley phase is carried by the Legendre
/// recurrence.
pub fn build_basis(directions: &[[f64; 3]], lmax: usize) -> Result<BasisMatrix> {
    check_lmax(lmax)?;
    if directions.is_empty() {
        return Err(HarpError::invalid("basis needs at least one direction"));
    }
    for (i, d) in directions.iter().enumerate() {
        let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(HarpError::invalid(format!(
                "direction {i} has norm {norm}, expected a unit vector"
            )));
        }
    }
    let ncoef = n_coeffs(lmax);
    let mut matrix = Array2::zeros((directions.len(), ncoef));
    let mut row = vec![0.0; ncoef];
    for (i, d) in directions.iter().enumerate() {
        eval_real_sh(d, lmax, &mut row);
        matrix
            .row_mut(i)
            .iter_mut()
            .zip(&row)
            .for_each(|(m, &v)| *m = v);
    }
    Ok(BasisMatrix { lmax, matrix })
}

/// Fill `out` with all even real harmonics up to `lmax` at direction `d`.
/// `d` is assumed unit length.
pub(crate) fn eval_real_sh(d: &[f64; 3], lmax: usize, out: &mut [f64]) {
    let z = d[2].clamp(-1.0, 1.0);
    let legendre = associated_legendre(lmax, z);
    let mut cos_m = [1.0; MAX_DEGREE + 1];
    let mut sin_m = [0.0; MAX_DEGREE + 1];
    // azimuth from x and y directly so that u and -u give exactly negated
    // cos/sin values
    let rho = d[0].hypot(d[1]);
    let (s1, c1) = if rho > 0.0 {
        (d[1] / rho, d[0] / rho)
    } else {
        (0.0, 1.0)
    };
    for m in 1..=lmax {
        cos_m[m] = cos_m[m - 1] * c1 - sin_m[m - 1] * s1;
        sin_m[m] = sin_m[m - 1] * c1 + cos_m[m - 1] * s1;
    }
    let mut k = 0;
    for l in (0..=lmax).step_by(2) {
        for m in -(l as i64)..=(l as i64) {
            let am = m.unsigned_abs() as usize;
            let norm = normalization(l, am) * legendre[l][am];
            out[k] = match m.cmp(&0) {
                std::cmp::Ordering::Equal => norm,
                std::cmp::Ordering::Greater => std::f64::consts::SQRT_2 * norm * cos_m[am],
                std::cmp::Ordering::Less => std::f64::consts::SQRT_2 * norm * sin_m[am],
            };
            k += 1;
        }
    }
}

const MAX_DEGREE: usize = crate::sh::LMAX;

/// sqrt((2l+1)/(4 pi) * (l-m)!/(l+m)!)
fn normalization(l: usize, m: usize) -> f64 {
    let mut ratio = 1.0;
    for j in (l - m + 1)..=(l + m) {
        ratio /= j as f64;
    }
    ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt()
}

/// `P_l^m(x)` for `0 <= m <= l <= lmax`, including the Condon-Shortley phase.
fn associated_legendre(lmax: usize, x: f64) -> [[f64; MAX_DEGREE + 1]; MAX_DEGREE + 1] {
    let mut p = [[0.0; MAX_DEGREE + 1]; MAX_DEGREE + 1];
    let somx2 = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
    let mut pmm = 1.0;
    let mut fact = 1.0;
    for m in 0..=lmax {
        if m > 0 {
            pmm *= -fact * somx2;
            fact += 2.0;
        }
        p[m][m] = pmm;
        if m < lmax {
            p[m + 1][m] = x * (2 * m + 1) as f64 * pmm;
        }
        for l in (m + 2)..=lmax {
            p[l][m] = ((2 * l - 1) as f64 * x * p[l - 1][m] - (l + m - 1) as f64 * p[l - 2][m])
                / (l - m) as f64;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;

    #[test]
    fn constant_harmonic() {
        let b = build_basis(&[[0.0, 0.0, 1.0]], 0).unwrap();
        assert_eq!(b.matrix.dim(), (1, 1));
        assert!((b.matrix[[0, 0]] - 0.5 / PI.sqrt()).abs() < 1e-15);

        let dirs = [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [-0.48, 0.6, -0.64]];
        let b = build_basis(&dirs, 8).unwrap();
        for i in 0..3 {
            assert!((b.matrix[[i, 0]] - 0.282_094_791_773_878_14).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(build_basis(&[[0.0, 0.0, 1.0]], 3).is_err());
        assert!(build_basis(&[[0.0, 0.0, 1.0]], 10).is_err());
        assert!(build_basis(&[[0.0, 0.0, 1.1]], 2).is_err());
        assert!(build_basis(&[], 2).is_err());
    }

    #[test]
    fn zonal_values_match_legendre() {
        // Y_20 at the pole is sqrt(5/(4 pi)).
        let b = build_basis(&[[0.0, 0.0, 1.0]], 2).unwrap();
        assert!((b.matrix[[0, 3]] - (5.0 / (4.0 * PI)).sqrt()).abs() < 1e-14);
        for k in [1, 2, 4, 5] {
            assert!(b.matrix[[0, k]].abs() < 1e-14);
        }
    }

    #[test]
    fn antipodal_symmetry_is_exact() {
        let d = [
            0.267_261_241_912_424_4,
            0.534_522_483_824_848_8,
            0.801_783_725_737_273_2,
        ];
        let n = [-d[0], -d[1], -d[2]];
        let b = build_basis(&[d, n], 8).unwrap();
        for k in 0..45 {
            assert!((b.matrix[[0, k]] - b.matrix[[1, k]]).abs() < 1e-13);
        }
    }

    /// Product Gauss-Legendre (polar) x trapezoid (azimuth) rule, exact for
    /// band-limited integrands of the degree used here.
    #[test]
    fn gram_matrix_is_identity_under_exact_quadrature() {
        let (nodes, weights) = gauss_legendre(24);
        let n_phi = 40;
        let mut dirs = Vec::new();
        let mut w = Vec::new();
        for (x, wx) in nodes.iter().zip(&weights) {
            let s = (1.0 - x * x).sqrt();
            for j in 0..n_phi {
                let phi = 2.0 * PI * j as f64 / n_phi as f64;
                dirs.push([s * phi.cos(), s * phi.sin(), *x]);
                w.push(wx * 2.0 * PI / n_phi as f64);
            }
        }
        let b = build_basis(&dirs, 8).unwrap();
        for a in 0..45 {
            for c in 0..45 {
                let g: f64 = (0..dirs.len())
                    .map(|i| w[i] * b.matrix[[i, a]] * b.matrix[[i, c]])
                    .sum();
                let expected = if a == c { 1.0 } else { 0.0 };
                assert!((g - expected).abs() < 1e-10, "G[{a},{c}] = {g}");
            }
        }
    }
}
