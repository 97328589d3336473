use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Axis};

use super::{sphere_basis, ResponseKernel, Sphere};
use crate::error::{HarpError, Result};
use crate::sh::{block_of, order_block, N_COEFFS, ORDERS};

/// Orders whose convolution factor is below this fraction of the l = 0 factor
/// are treated as absent from the kernel.
const SINGULAR_RATIO: f64 = 1e-12;

/// Tuning for the constrained deconvolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsdOptions {
    /// Penalty weight, relative to the kernel's mean amplitude.
    pub lambda: f64,
    /// Vertices below `tau` times the mean initial amplitude are constrained.
    pub tau: f64,
    pub max_iter: usize,
}

impl Default for CsdOptions {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            tau: 0.1,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsdResult {
    pub fodf: Vec<f64>,
    /// Constrained re-solves performed (0 when the initial estimate stands).
    pub iterations: usize,
    /// False when `max_iter` was reached with the constraint set still moving.
    pub converged: bool,
}

/// Deconvolution operator for a fixed kernel and sphere.
#[derive(Debug, Clone)]
pub struct Csd {
    factors: [f64; 5],
    active: [bool; 5],
    /// Sphere basis, `n_vertices x 45`.
    basis: Array2<f64>,
    penalty: f64,
    opts: CsdOptions,
}

impl Csd {
    pub fn new(kernel: &ResponseKernel, sphere: &Sphere, opts: CsdOptions) -> Result<Self> {
        let factors = kernel.convolution_factors();
        if factors[0] == 0.0 {
            return Err(HarpError::DeconvolutionSingular(
                "response kernel has zero l = 0 coefficient".into(),
            ));
        }
        let mut active = [true; 5];
        for i in 1..5 {
            active[i] = factors[i].abs() > SINGULAR_RATIO * factors[0].abs();
        }
        let basis = sphere_basis(sphere, 8).matrix;
        let penalty = opts.lambda * kernel.mean_amplitude();
        Ok(Self {
            factors,
            active,
            basis,
            penalty,
            opts,
        })
    }

    fn amplitudes(&self, f: &[f64]) -> Vec<f64> {
        self.basis.dot(&ndarray::ArrayView1::from(f)).to_vec()
    }

    pub fn deconvolve(&self, signal_sh: &[f64]) -> Result<CsdResult> {
        if signal_sh.len() != N_COEFFS {
            return Err(HarpError::invalid(format!(
                "CSD expects {N_COEFFS} signal coefficients, got {}",
                signal_sh.len()
            )));
        }
        for (i, &l) in ORDERS.iter().enumerate() {
            if !self.active[i] && order_block(l).any(|k| signal_sh[k] != 0.0) {
                return Err(HarpError::DeconvolutionSingular(format!(
                    "kernel has no order-{l} response but the signal has order-{l} energy"
                )));
            }
        }

        let mut fodf: Vec<f64> = (0..N_COEFFS)
            .map(|k| {
                let b = block_of(k);
                if self.active[b] {
                    signal_sh[k] / self.factors[b]
                } else {
                    0.0
                }
            })
            .collect();
        let initial = self.amplitudes(&fodf);
        let threshold = self.opts.tau * initial.iter().sum::<f64>() / initial.len() as f64;

        let mut constrained: Vec<usize> = Vec::new();
        let mut amplitudes = initial;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.opts.max_iter {
            let next: Vec<usize> = amplitudes
                .iter()
                .enumerate()
                .filter_map(|(i, &a)| (a < threshold).then_some(i))
                .collect();
            if next == constrained {
                converged = true;
                break;
            }
            constrained = next;
            fodf = self.solve(signal_sh, &constrained)?;
            amplitudes = self.amplitudes(&fodf);
            iterations += 1;
        }
        if !converged {
            let next: Vec<usize> = amplitudes
                .iter()
                .enumerate()
                .filter_map(|(i, &a)| (a < threshold).then_some(i))
                .collect();
            converged = next == constrained;
        }
        Ok(CsdResult {
            fodf,
            iterations,
            converged,
        })
    }

    /// Minimize `|K f - s|^2 + penalty^2 |B_C f|^2`.
    fn solve(&self, signal_sh: &[f64], constrained: &[usize]) -> Result<Vec<f64>> {
        let bc = self.basis.select(Axis(0), constrained);
        let gram = bc.t().dot(&bc);
        let p2 = self.penalty * self.penalty;
        let mut normal = DMatrix::<f64>::zeros(N_COEFFS, N_COEFFS);
        let mut rhs = DVector::<f64>::zeros(N_COEFFS);
        for i in 0..N_COEFFS {
            let bi = block_of(i);
            if !self.active[bi] {
                normal[(i, i)] = 1.0;
                continue;
            }
            normal[(i, i)] = self.factors[bi] * self.factors[bi];
            rhs[i] = self.factors[bi] * signal_sh[i];
            for j in 0..N_COEFFS {
                if self.active[block_of(j)] {
                    normal[(i, j)] += p2 * gram[[i, j]];
                }
            }
        }
        let chol = normal
            .cholesky()
            .ok_or_else(|| HarpError::IllPosed("CSD normal equations are singular".into()))?;
        Ok(chol.solve(&rhs).iter().copied().collect())
    }
}

/// One-shot deconvolution; see [`Csd`].
pub fn csd_deconvolve(
    signal_sh: &[f64],
    kernel: &ResponseKernel,
    sphere: &Sphere,
    opts: CsdOptions,
) -> Result<CsdResult> {
    Csd::new(kernel, sphere, opts)?.deconvolve(signal_sh)
}

#[cfg(test)]
mod tests {
    use super::super::{icosphere, single_fiber_response};
    use super::*;

    #[test]
    fn isotropic_signal_keeps_only_order_zero() {
        let kernel = single_fiber_response((1.7e-3, 0.2e-3), 1000.0).unwrap();
        let sphere = icosphere(3).unwrap();
        let mut s = vec![0.0; 45];
        s[0] = 1.3;
        let r = csd_deconvolve(&s, &kernel, &sphere, CsdOptions::default()).unwrap();
        assert!(r.fodf[1..].iter().all(|&c| c.abs() < 1e-12));
        assert!(r.fodf[0] > 0.0);
    }

    #[test]
    fn isotropic_kernel_cannot_deconvolve_anisotropic_signal() {
        let kernel = single_fiber_response((1e-3, 1e-3), 1000.0).unwrap();
        let sphere = icosphere(2).unwrap();
        let mut s = vec![0.0; 45];
        s[0] = 1.0;
        s[3] = 0.2;
        assert!(matches!(
            csd_deconvolve(&s, &kernel, &sphere, CsdOptions::default()),
            Err(HarpError::DeconvolutionSingular(_))
        ));
        s[3] = 0.0;
        assert!(csd_deconvolve(&s, &kernel, &sphere, CsdOptions::default()).is_ok());
    }
}
