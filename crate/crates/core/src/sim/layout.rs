use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dti::DiffusionTensor;
use crate::error::{HarpError, Result};
use crate::geometry::{cross, dot, normalize, rotate, rotation_matrix, Vec3};
use crate::sim::noise::{stream_rng, StreamId};
use crate::volume::Grid;

const PURPOSE_LAYOUT: u8 = 2;

pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_CSF: u8 = 1;
pub const LABEL_GM: u8 = 2;
pub const LABEL_WM: u8 = 3;

/// Synthetic anatomy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layout {
    /// Cylinder filled with a lattice of cells, each holding one fiber
    /// population or two crossing ones.
    Phantom {
        #[serde(default = "d_cell_size")]
        cell_size: usize,
        #[serde(default = "d_crossing_angle")]
        crossing_angle_deg: f64,
        #[serde(default = "d_crossing_probability")]
        crossing_probability: f64,
        #[serde(default = "d_lambda_par")]
        lambda_par: f64,
        #[serde(default = "d_lambda_perp_range")]
        lambda_perp_range: [f64; 2],
    },
    /// Nested ellipsoids of CSF, grey matter and white matter.
    Subject {
        #[serde(default = "d_anatomy_jitter")]
        anatomy_jitter: f64,
    },
}

fn d_cell_size() -> usize {
    3
}
fn d_crossing_angle() -> f64 {
    60.0
}
fn d_crossing_probability() -> f64 {
    0.5
}
fn d_lambda_par() -> f64 {
    1.7e-3
}
fn d_lambda_perp_range() -> [f64; 2] {
    [0.2e-3, 0.2e-3]
}
fn d_anatomy_jitter() -> f64 {
    0.05
}

impl Layout {
    pub fn phantom() -> Self {
        Layout::Phantom {
            cell_size: d_cell_size(),
            crossing_angle_deg: d_crossing_angle(),
            crossing_probability: d_crossing_probability(),
            lambda_par: d_lambda_par(),
            lambda_perp_range: d_lambda_perp_range(),
        }
    }

    pub fn subject() -> Self {
        Layout::Subject {
            anatomy_jitter: d_anatomy_jitter(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Layout::Phantom {
                cell_size,
                crossing_angle_deg,
                crossing_probability,
                lambda_par,
                lambda_perp_range,
            } => {
                if *cell_size == 0 {
                    return Err(HarpError::invalid("phantom cell_size must be positive"));
                }
                if !(0.0..=90.0).contains(crossing_angle_deg) {
                    return Err(HarpError::invalid(
                        "crossing angle must lie in [0, 90] degrees",
                    ));
                }
                if !(0.0..=1.0).contains(crossing_probability) {
                    return Err(HarpError::invalid(
                        "crossing probability must lie in [0, 1]",
                    ));
                }
                let [lo, hi] = *lambda_perp_range;
                if !(lo > 0.0 && lo <= hi && hi <= *lambda_par) {
                    return Err(HarpError::invalid(
                        "diffusivities must satisfy 0 < perp_lo <= perp_hi <= par",
                    ));
                }
                Ok(())
            }
            Layout::Subject { anatomy_jitter } => {
                if !(0.0..0.3).contains(anatomy_jitter) {
                    return Err(HarpError::invalid("anatomy_jitter must lie in [0, 0.3)"));
                }
                Ok(())
            }
        }
    }
}

/// One tissue compartment mixture: `S(g)/S0 = sum f_i exp(-b g^T D_i g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelModel {
    pub s0: f64,
    pub label: u8,
    pub compartments: Vec<(f64, DiffusionTensor)>,
    /// Fiber axes, strongest first; empty for isotropic tissue.
    pub fibers: Vec<Vec3>,
}

impl VoxelModel {
    pub fn background() -> Self {
        Self {
            s0: 0.0,
            label: LABEL_BACKGROUND,
            compartments: Vec::new(),
            fibers: Vec::new(),
        }
    }

    pub fn attenuation(&self, g: &Vec3, bvalue: f64) -> f64 {
        self.compartments
            .iter()
            .map(|(f, d)| f * (-bvalue * d.quadratic_form(g)).exp())
            .sum()
    }
}

fn prolate(axis: &Vec3, par: f64, perp: f64) -> DiffusionTensor {
    let a = normalize(axis);
    let helper = if a[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let e2 = normalize(&cross(&a, &helper));
    let e3 = cross(&a, &e2);
    DiffusionTensor::from_eigen([par, perp, perp], [a, e2, e3])
}

fn random_axis<R: Rng>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

fn perpendicular<R: Rng>(a: &Vec3, rng: &mut R) -> Vec3 {
    loop {
        let v = random_axis(rng);
        let c = cross(a, &v);
        if dot(&c, &c) > 1e-6 {
            return normalize(&c);
        }
    }
}

/// Per-voxel tissue models, indexed like the grid.
pub fn build_layout(layout: &Layout, grid: &Grid, seed: u64) -> Result<Vec<VoxelModel>> {
    layout.validate()?;
    match layout {
        Layout::Phantom {
            cell_size,
            crossing_angle_deg,
            crossing_probability,
            lambda_par,
            lambda_perp_range,
        } => Ok(phantom(
            grid,
            seed,
            *cell_size,
            crossing_angle_deg.to_radians(),
            *crossing_probability,
            *lambda_par,
            *lambda_perp_range,
        )),
        Layout::Subject { anatomy_jitter } => Ok(subject(grid, seed, *anatomy_jitter)),
    }
}

fn phantom(
    grid: &Grid,
    seed: u64,
    cell: usize,
    crossing: f64,
    p_cross: f64,
    par: f64,
    perp: [f64; 2],
) -> Vec<VoxelModel> {
    let [nx, ny, nz] = grid.dims;
    let cx = (nx as f64 - 1.0) / 2.0;
    let cy = (ny as f64 - 1.0) / 2.0;
    let radius = 0.45 * nx.min(ny) as f64;
    let cells = [nx.div_ceil(cell), ny.div_ceil(cell), nz.div_ceil(cell)];
    let cell_models: Vec<VoxelModel> = (0..cells[0] * cells[1] * cells[2])
        .map(|ci| {
            let mut rng = stream_rng(
                seed,
                StreamId {
                    purpose: PURPOSE_LAYOUT,
                    site: 0,
                    scan: 0,
                    index: ci as u64,
                },
            );
            let a = random_axis(&mut rng);
            let lp = rng.random_range(perp[0]..=perp[1]);
            if rng.random_bool(p_cross) {
                let axis = perpendicular(&a, &mut rng);
                let b = rotate(&rotation_matrix(&axis, crossing), &a);
                let f1: f64 = rng.random_range(0.5..0.8);
                VoxelModel {
                    s0: 1.0,
                    label: LABEL_WM,
                    compartments: vec![
                        (f1, prolate(&a, par, lp)),
                        (1.0 - f1, prolate(&b, par, lp)),
                    ],
                    fibers: vec![a, b],
                }
            } else {
                VoxelModel {
                    s0: 1.0,
                    label: LABEL_WM,
                    compartments: vec![(1.0, prolate(&a, par, lp))],
                    fibers: vec![a],
                }
            }
        })
        .collect();
    (0..grid.n_voxels())
        .map(|i| {
            let [x, y, z] = grid.coords(i);
            let r = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            if r > radius {
                return VoxelModel::background();
            }
            let ci = (x / cell) + cells[0] * ((y / cell) + cells[1] * (z / cell));
            cell_models[ci].clone()
        })
        .collect()
}

fn subject(grid: &Grid, seed: u64, jitter: f64) -> Vec<VoxelModel> {
    let mut rng = stream_rng(
        seed,
        StreamId {
            purpose: PURPOSE_LAYOUT,
            site: 1,
            scan: 0,
            index: 0,
        },
    );
    let mut j = || 1.0 + rng.random_range(-jitter..=jitter);
    let semi = grid.dims.map(|d| 0.45 * d as f64);
    let outer = [semi[0] * j(), semi[1] * j(), semi[2] * j()];
    let gm_frac = 0.85 * j();
    let wm_frac = 0.68 * j();
    let wm_par = 1.7e-3 * j();
    let wm_perp = 0.3e-3 * j();
    let twist = 0.6 * j();
    let center = grid.dims.map(|d| (d as f64 - 1.0) / 2.0);

    (0..grid.n_voxels())
        .map(|i| {
            let c = grid.coords(i);
            let p = [
                (c[0] as f64 - center[0]) / outer[0],
                (c[1] as f64 - center[1]) / outer[1],
                (c[2] as f64 - center[2]) / outer[2],
            ];
            let rho = dot(&p, &p).sqrt();
            if rho > 1.0 {
                VoxelModel::background()
            } else if rho > gm_frac {
                VoxelModel {
                    s0: 1.6,
                    label: LABEL_CSF,
                    compartments: vec![(1.0, DiffusionTensor::isotropic(3.0e-3))],
                    fibers: Vec::new(),
                }
            } else if rho > wm_frac {
                let radial = if rho > 0.0 {
                    normalize(&p)
                } else {
                    [0.0, 0.0, 1.0]
                };
                VoxelModel {
                    s0: 1.15,
                    label: LABEL_GM,
                    compartments: vec![(1.0, prolate(&radial, 1.0e-3, 0.7e-3))],
                    fibers: Vec::new(),
                }
            } else {
                // Circumferential bundles that tilt with height, crossed by a
                // vertical tract in the central slab.
                let circ = [-p[1], p[0], twist * p[2]];
                let a = if dot(&circ, &circ) > 1e-12 {
                    normalize(&circ)
                } else {
                    [0.0, 0.0, 1.0]
                };
                if p[0].abs() < 0.25 * wm_frac {
                    let b = [0.0, 0.0, 1.0];
                    VoxelModel {
                        s0: 1.0,
                        label: LABEL_WM,
                        compartments: vec![
                            (0.6, prolate(&a, wm_par, wm_perp)),
                            (0.4, prolate(&b, wm_par, wm_perp)),
                        ],
                        fibers: vec![a, b],
                    }
                } else {
                    VoxelModel {
                        s0: 1.0,
                        label: LABEL_WM,
                        compartments: vec![(1.0, prolate(&a, wm_par, wm_perp))],
                        fibers: vec![a],
                    }
                }
            }
        })
        .collect()
}
