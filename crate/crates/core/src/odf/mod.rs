//! Constrained spherical deconvolution, GFA and fiber peak extraction.

mod csd;
mod peaks;
mod response;
mod sphere;

pub use csd::{csd_deconvolve, Csd, CsdOptions, CsdResult};
pub use peaks::{extract_peaks, extract_peaks_with_basis, PeakOptions};
pub use response::{convolve, single_fiber_response, ResponseKernel};
pub use sphere::{icosphere, Sphere};

use crate::sh::{build_basis, BasisMatrix};

/// Default sphere resolution for ODF sampling.
pub const DEFAULT_SUBDIVISIONS: usize = 3;

/// Real SH basis sampled at the sphere vertices.
pub fn sphere_basis(sphere: &Sphere, lmax: usize) -> BasisMatrix {
    build_basis(&sphere.vertices, lmax).expect("icosphere vertices are unit vectors")
}

/// Generalized fractional anisotropy of an ODF given by SH coefficients,
/// from raw (unclamped) samples at the sphere vertices.
pub fn gfa(odf_sh: &[f64], sphere: &Sphere) -> f64 {
    let lmax = lmax_for(odf_sh.len());
    let basis = sphere_basis(sphere, lmax);
    gfa_with_basis(odf_sh, &basis)
}

/// [`gfa`] with a precomputed sphere basis.
pub fn gfa_with_basis(odf_sh: &[f64], basis: &BasisMatrix) -> f64 {
    if odf_sh.iter().all(|&c| c == 0.0) {
        return 0.0;
    }
    let samples: Vec<f64> = basis
        .matrix
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(odf_sh).map(|(b, c)| b * c).sum())
        .collect();
    let n = samples.len() as f64;
    let sum_sq: f64 = samples.iter().map(|v| v * v).sum();
    if sum_sq == 0.0 || samples.len() < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n;
    let dev: f64 = samples.iter().map(|v| (v - mean) * (v - mean)).sum();
    // n / (n - 1) lets a zero-mean ODF exceed 1 by a hair
    (n * dev / ((n - 1.0) * sum_sq)).sqrt().min(1.0)
}

fn lmax_for(n_coeffs: usize) -> usize {
    match n_coeffs {
        1 => 0,
        6 => 2,
        15 => 4,
        28 => 6,
        45 => 8,
        other => panic!("{other} is not an even-order SH coefficient count"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_odf_has_zero_gfa() {
        let s = icosphere(3).unwrap();
        let mut c = vec![0.0; 45];
        c[0] = 2.7;
        assert!(gfa(&c, &s).abs() < 1e-6);
        assert_eq!(gfa(&[0.0; 45], &s), 0.0);
    }

    #[test]
    fn gfa_is_scale_invariant() {
        let s = icosphere(3).unwrap();
        let c: Vec<f64> = (0..45)
            .map(|k| ((k * 7 % 11) as f64 - 5.0) / (k + 1) as f64)
            .collect();
        let g = gfa(&c, &s);
        for k in [0.01, 3.0, 1e4] {
            let scaled: Vec<f64> = c.iter().map(|v| v * k).collect();
            assert!((gfa(&scaled, &s) - g).abs() < 1e-12);
        }
        assert!((0.0..=1.0).contains(&g));
    }
}
