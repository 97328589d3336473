//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::PI;

use harp::geometry::{normalize, Vec3};
use harp::sh::{build_basis, GradientTable, ORDERS};
use harp::sim::hemisphere_directions;
use harp::volume::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v: Vec3 = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return normalize(&v);
        }
    }
}

/// Uniform entries in `[-scale, scale]`.
pub fn random_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
}

pub fn line_grid(n: usize) -> Grid {
    Grid::new([n, 1, 1], [1.0; 3])
}

/// `n_b0` zero-direction b0 entries followed by `n_dirs` spread directions.
pub fn single_shell(n_dirs: usize, bvalue: f64, n_b0: usize) -> GradientTable {
    let mut dirs = vec![[0.0; 3]; n_b0];
    dirs.extend(hemisphere_directions(n_dirs));
    let mut bvals = vec![0.0; n_b0];
    bvals.extend(std::iter::repeat_n(bvalue, n_dirs));
    GradientTable::new(dirs, bvals).unwrap()
}

/// Legendre polynomial by the Bonnet recurrence.
pub fn legendre(l: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if l == 0 {
        return p0;
    }
    for n in 1..l {
        let p2 = ((2 * n + 1) as f64 * x * p1 - n as f64 * p0) / (n + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// SH coefficients of the axially symmetric function
/// `f(u) = sum_l w_l P_l(u . axis)`, by the addition theorem.
pub fn zonal_coeffs(axis: &Vec3, weights: &[f64; 5]) -> Vec<f64> {
    let y = build_basis(&[*axis], 8).unwrap().matrix;
    let mut c = vec![0.0; 45];
    let mut k = 0;
    for (i, &l) in ORDERS.iter().enumerate() {
        let f = weights[i] * 4.0 * PI / (2 * l + 1) as f64;
        for _ in 0..2 * l + 1 {
            c[k] = f * y[[0, k]];
            k += 1;
        }
    }
    c
}

/// Direct evaluation of `sum_l w_l P_l(u . axis)`.
pub fn zonal_value(u: &Vec3, axis: &Vec3, weights: &[f64; 5]) -> f64 {
    let t = u[0] * axis[0] + u[1] * axis[1] + u[2] * axis[2];
    ORDERS
        .iter()
        .zip(weights)
        .map(|(&l, w)| w * legendre(l, t))
        .sum()
}

/// Random rotation matrix (row-major) from a random axis and angle.
pub fn random_rotation(rng: &mut impl Rng) -> [[f64; 3]; 3] {
    let axis = unit_vector(rng);
    let angle = rng.random_range(0.0..2.0 * PI);
    harp::geometry::rotation_matrix(&axis, angle)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

use harp::harp::MlpParams;
use harp::sh::{fit_sh_volume, ShFitOptions, ShVolume};
use harp::sim::{Layout, PairedDataset, Protocol, SimConfig};
use harp::volume::{DwiVolume, Mask};
use ndarray::ArrayView2;

pub fn sim_config(
    dims: [usize; 3],
    layout: Layout,
    protocol: Protocol,
    site_scales: [f64; 5],
    noise_sigma: [f64; 2],
    scans: usize,
    seed: u64,
) -> SimConfig {
    SimConfig {
        dims,
        voxel_size: [1.0; 3],
        protocol,
        layout,
        site_scales,
        gain_field: None,
        noise_sigma,
        scans,
        seed,
    }
}

pub fn fit_all(dwis: &[DwiVolume], data: &PairedDataset, opts: &ShFitOptions) -> Vec<ShVolume> {
    dwis.iter()
        .map(|d| fit_sh_volume(d, &data.gtab, &data.mask, opts).unwrap().sh)
        .collect()
}

pub fn fit_one(
    dwi: &DwiVolume,
    data: &PairedDataset,
    mask: &Mask,
    opts: &ShFitOptions,
) -> ShVolume {
    fit_sh_volume(dwi, &data.gtab, mask, opts).unwrap().sh
}

/// Result of comparing analytic and central-difference gradients.
#[derive(Debug, Default)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters whose central differences at steps h and h/2 disagree,
    /// i.e. a ReLU kink lies within the stencil.
    pub skipped_kinks: usize,
    /// Distinct units (layer, output row) with a skipped stencil; one
    /// pre-activation near zero skips every weight feeding that unit.
    pub kink_units: usize,
}

/// Lower bound on the denominator of the relative error.
pub const FD_FLOOR: f64 = 1e-7;

/// Rounding error of one loss evaluation, in units of eps |L|.
pub const LOSS_ROUNDING: f64 = 16.0;

/// Relative tolerance the check is designed for.
pub const FD_TOLERANCE: f64 = 1e-5;

/// Which parameter of a layer to perturb.
#[derive(Clone, Copy)]
enum Slot {
    Weight(usize, usize),
    Bias(usize),
}

impl Slot {
    fn row(self) -> usize {
        match self {
            Slot::Weight(i, _) | Slot::Bias(i) => i,
        }
    }
}

fn param_mut(p: &mut MlpParams, layer: usize, slot: Slot) -> &mut f64 {
    match slot {
        Slot::Weight(i, j) => &mut p.layers[layer].weights[[i, j]],
        Slot::Bias(i) => &mut p.layers[layer].bias[i],
    }
}

/// Loss at `w + h` and `w - h` for one parameter.
fn perturbed_losses(
    p: &mut MlpParams,
    layer: usize,
    slot: Slot,
    h: f64,
    src: ArrayView2<f64>,
    tgt: ArrayView2<f64>,
) -> (f64, f64) {
    let w0 = *param_mut(p, layer, slot);
    *param_mut(p, layer, slot) = w0 + h;
    let lp = p.loss(src, tgt);
    *param_mut(p, layer, slot) = w0 - h;
    let lm = p.loss(src, tgt);
    *param_mut(p, layer, slot) = w0;
    (lp, lm)
}

/// Compare every gradient entry selected by `pick(layer, flat_index)`.
pub fn finite_difference_check(
    p: &MlpParams,
    src: ArrayView2<f64>,
    tgt: ArrayView2<f64>,
    mut pick: impl FnMut(usize, usize) -> bool,
) -> FdReport {
    let (loss, grads) = p.loss_and_grad(src, tgt).unwrap();
    let mut q = p.clone();
    let mut report = FdReport::default();
    let mut kinked = BTreeSet::new();
    let mut check =
        |q: &mut MlpParams, layer: usize, slot: Slot, analytic: f64, report: &mut FdReport| {
            let w0 = *param_mut(q, layer, slot);
            let h = 1e-4 * w0.abs().max(1.0);
            let (lp, lm) = perturbed_losses(q, layer, slot, h, src, tgt);
            let (lp2, lm2) = perturbed_losses(q, layer, slot, h / 2.0, src, tgt);
            let fd = (lp - lm) / (2.0 * h);
            let fd_half = (lp2 - lm2) / h;
            // rounding in L(w +- h), which sums hundreds of terms, limits the
            // central difference to about 16 eps |L| / h absolutely; below that
            // magnitude errors are judged against the resolvable level instead
            let floor = FD_FLOOR.max(LOSS_ROUNDING * f64::EPSILON * loss.abs() / h / FD_TOLERANCE);
            let scale = fd.abs().max(fd_half.abs()).max(floor);
            // an off-centre kink changes the central difference with the step;
            // a kink at w itself shows up as a jump between one-sided slopes;
            // curvature adds a part linear in the step, which extrapolates out
            let jump = ((lp - loss) - (loss - lm)) / h;
            let jump_half = ((lp2 - loss) - (loss - lm2)) / (h / 2.0);
            let at_kink = (2.0 * jump_half - jump).abs() / scale > FD_TOLERANCE;
            if (fd - fd_half).abs() / scale > FD_TOLERANCE || at_kink {
                report.skipped_kinks += 1;
                kinked.insert((layer, slot.row()));
                return;
            }
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(floor);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        };
    for layer in 0..p.layers.len() {
        let (rows, cols) = p.layers[layer].weights.dim();
        for i in 0..rows {
            for j in 0..cols {
                if pick(layer, i * cols + j) {
                    let g = grads.layers[layer].weights[[i, j]];
                    check(&mut q, layer, Slot::Weight(i, j), g, &mut report);
                }
            }
        }
        for i in 0..rows {
            if pick(layer, rows * cols + i) {
                check(
                    &mut q,
                    layer,
                    Slot::Bias(i),
                    grads.layers[layer].bias[i],
                    &mut report,
                );
            }
        }
    }
    report.kink_units = kinked.len();
    report
}
