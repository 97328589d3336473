use std::f64::consts::PI;

use log::warn;

use crate::error::{HarpError, Result};
use crate::quadrature::{gauss_legendre, legendre};
use crate::sh::{order_block, N_COEFFS, N_ORDERS, ORDERS};

const QUADRATURE_NODES: usize = 96;

/// Axially symmetric single-fiber response, as zonal SH coefficients
/// `rho_l` for `l = 0, 2, 4, 6, 8`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseKernel {
    pub rho: [f64; N_ORDERS],
    /// `(lambda_parallel, lambda_perpendicular)` in mm²/s.
    pub eigenvalues: (f64, f64),
    pub bvalue: f64,
}

impl ResponseKernel {
    /// Funk-Hecke factor `rho_l * sqrt(4 pi / (2l + 1))` for each order.
    pub fn convolution_factors(&self) -> [f64; N_ORDERS] {
        let mut k = [0.0; N_ORDERS];
        for (i, l) in ORDERS.iter().enumerate() {
            k[i] = self.rho[i] * (4.0 * PI / (2 * l + 1) as f64).sqrt();
        }
        k
    }

    /// Mean of the response over the sphere.
    pub fn mean_amplitude(&self) -> f64 {
        self.rho[0] / (2.0 * PI.sqrt())
    }
}

/// Project `S(theta) = exp(-b (l_perp + (l_par - l_perp) cos^2 theta))` onto
/// the zonal harmonics by Gauss-Legendre quadrature in `cos theta`.
pub fn single_fiber_response(eigenvalues: (f64, f64), bvalue: f64) -> Result<ResponseKernel> {
    let (par, perp) = eigenvalues;
    if !(par >= perp && perp >= 0.0) {
        return Err(HarpError::invalid(format!(
            "response eigenvalues must satisfy l_par >= l_perp >= 0 (got {par}, {perp})"
        )));
    }
    if !(bvalue > 0.0) {
        return Err(HarpError::invalid(format!(
            "b-value must be positive (got {bvalue})"
        )));
    }
    let (nodes, weights) = gauss_legendre(QUADRATURE_NODES);
    let mut rho = [0.0; N_ORDERS];
    for (i, &l) in ORDERS.iter().enumerate() {
        let norm = ((2 * l + 1) as f64 / (4.0 * PI)).sqrt();
        let integral: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&x, &w)| w * (-bvalue * (perp + (par - perp) * x * x)).exp() * legendre(l, x))
            .sum();
        rho[i] = 2.0 * PI * norm * integral;
    }
    for i in 1..N_ORDERS {
        if rho[i].abs() > rho[i - 1].abs() {
            warn!("response kernel magnitudes are not decreasing with order: {rho:?}");
            break;
        }
    }
    Ok(ResponseKernel {
        rho,
        eigenvalues,
        bvalue,
    })
}

/// Spherical convolution of an fODF with the kernel.
pub fn convolve(fodf_sh: &[f64], kernel: &ResponseKernel) -> Vec<f64> {
    assert_eq!(fodf_sh.len(), N_COEFFS);
    let factors = kernel.convolution_factors();
    let mut out = fodf_sh.to_vec();
    for (i, &l) in ORDERS.iter().enumerate() {
        for k in order_block(l) {
            out[k] *= factors[i];
        }
    }
    out
}
