//! Paired two-site synthetic datasets with a known site effect.

mod layout;
mod noise;
mod protocol;

pub use layout::{
    build_layout, Layout, VoxelModel, LABEL_BACKGROUND, LABEL_CSF, LABEL_GM, LABEL_WM,
};
pub use noise::{add_rician_noise, stream_rng, StreamId};
pub use protocol::{hemisphere_directions, Protocol, BVALUE_PRESETS, DIRECTION_PRESETS};

use ndarray::{Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{HarpError, Result};
use crate::geometry::Vec3;
use crate::quadrature::gauss_legendre;
use crate::sh::{self, build_basis, GradientTable, ShVolume, LMAX, N_COEFFS, N_ORDERS};
use crate::volume::{DwiVolume, Grid, Mask, ScalarMap, VectorField};

const PURPOSE_NOISE: u8 = 1;
const PROJECTION_THETA: usize = 24;
const PROJECTION_PHI: usize = 48;

pub const SOURCE_SITE: u8 = 0;
pub const TARGET_SITE: u8 = 1;

/// Smooth multiplicative field `1 + a cos(2 pi x / nx) cos(2 pi y / ny)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainField {
    pub amplitude: f64,
}

impl GainField {
    pub fn sample(&self, grid: &Grid) -> ScalarMap {
        let [nx, ny, _] = grid.dims;
        let tau = std::f64::consts::TAU;
        let values = (0..grid.n_voxels())
            .map(|i| {
                let [x, y, _] = grid.coords(i);
                1.0 + self.amplitude
                    * (tau * x as f64 / nx as f64).cos()
                    * (tau * y as f64 / ny as f64).cos()
            })
            .collect();
        ScalarMap {
            grid: *grid,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dims: [usize; 3],
    #[serde(default = "unit_voxel")]
    pub voxel_size: [f64; 3],
    pub protocol: Protocol,
    pub layout: Layout,
    pub site_scales: [f64; N_ORDERS],
    #[serde(default)]
    pub gain_field: Option<GainField>,
    /// Rician sigma for the source and target sites, relative to a unit b0.
    pub noise_sigma: [f64; 2],
    #[serde(default = "one")]
    pub scans: usize,
    #[serde(default)]
    pub seed: u64,
}

fn unit_voxel() -> [f64; 3] {
    [1.0; 3]
}

fn one() -> usize {
    1
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(HarpError::invalid("grid dimensions must be positive"));
        }
        if self.voxel_size.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(HarpError::invalid("voxel size must be finite and positive"));
        }
        self.protocol.validate()?;
        self.layout.validate()?;
        if self
            .site_scales
            .iter()
            .any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(HarpError::invalid(
                "site scales must be finite and positive",
            ));
        }
        if self
            .noise_sigma
            .iter()
            .any(|s| !(s.is_finite() && *s >= 0.0))
        {
            return Err(HarpError::invalid(
                "noise sigma must be finite and non-negative",
            ));
        }
        if let Some(g) = &self.gain_field {
            if !(g.amplitude.is_finite() && g.amplitude.abs() < 1.0) {
                return Err(HarpError::invalid("gain amplitude must lie in (-1, 1)"));
            }
        }
        if self.scans == 0 {
            return Err(HarpError::invalid("at least one scan per site is required"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.dims, self.voxel_size)
    }
}

/// What the simulator knows and the methods under test do not.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub config: SimConfig,
    pub labels: Vec<u8>,
    pub s0: ScalarMap,
    pub primary_fiber: VectorField,
    pub secondary_fiber: VectorField,
    /// Compartment tensors `[xx, yy, zz, xy, xz, yz]`, volume-fraction weighted.
    pub mean_tensor: Vec<[f64; 6]>,
    pub gain: Option<ScalarMap>,
}

/// JSON-serialisable part of [`GroundTruth`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthSidecar {
    pub site_scales: [f64; N_ORDERS],
    pub noise_sigma: [f64; 2],
    pub gain_field: Option<GainField>,
    pub layout: Layout,
    pub protocol: Protocol,
    pub seed: u64,
}

impl GroundTruth {
    pub fn sidecar(&self) -> GroundTruthSidecar {
        GroundTruthSidecar {
            site_scales: self.config.site_scales,
            noise_sigma: self.config.noise_sigma,
            gain_field: self.config.gain_field,
            layout: self.config.layout.clone(),
            protocol: self.config.protocol.clone(),
            seed: self.config.seed,
        }
    }

    pub fn label_mask(&self, label: u8) -> Mask {
        Mask {
            grid: self.s0.grid,
            values: self.labels.iter().map(|&l| l == label).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairedDataset {
    pub gtab: GradientTable,
    /// One DWI per scan.
    pub source: Vec<DwiVolume>,
    pub target: Vec<DwiVolume>,
    pub mask: Mask,
    pub truth: GroundTruth,
    /// Noise-free normalised SH of each site.
    pub clean_source_sh: ShVolume,
    pub clean_target_sh: ShVolume,
}

/// Per-order block scaling, then optional voxel-wise gain.
pub fn apply_site_effect(
    signal_sh: &ShVolume,
    scales: &[f64; N_ORDERS],
    gain: Option<&ScalarMap>,
) -> Result<ShVolume> {
    if let Some(g) = gain {
        g.grid.ensure_same(&signal_sh.grid, "gain field")?;
    }
    let mut out = signal_sh.clone();
    for (v, mut row) in out.coeffs.axis_iter_mut(Axis(0)).enumerate() {
        let g = gain.map_or(1.0, |g| g.values[v]);
        for (k, c) in row.iter_mut().enumerate() {
            *c *= scales[sh::block_of(k)] * g;
        }
    }
    Ok(out)
}

/// Projects per-voxel analytic signals onto the order-8 basis with an
/// exact product quadrature.
struct Projector {
    points: Vec<Vec3>,
    /// `N_COEFFS x n_points`, quadrature-weighted transposed basis.
    weighted: Array2<f64>,
}

impl Projector {
    fn new() -> Result<Self> {
        let (nodes, weights) = gauss_legendre(PROJECTION_THETA);
        let dphi = std::f64::consts::TAU / PROJECTION_PHI as f64;
        let mut points = Vec::with_capacity(PROJECTION_THETA * PROJECTION_PHI);
        let mut w = Vec::with_capacity(points.capacity());
        for (x, wt) in nodes.iter().zip(&weights) {
            let s = (1.0 - x * x).sqrt();
            for j in 0..PROJECTION_PHI {
                let phi = (j as f64 + 0.5) * dphi;
                points.push([s * phi.cos(), s * phi.sin(), *x]);
                w.push(wt * dphi);
            }
        }
        let basis = build_basis(&points, LMAX)?;
        let mut weighted = basis.matrix.t().to_owned();
        for (mut col, wt) in weighted.axis_iter_mut(Axis(1)).zip(&w) {
            col *= *wt;
        }
        Ok(Self { points, weighted })
    }

    fn project(&self, model: &VoxelModel, bvalue: f64) -> Vec<f64> {
        if model.compartments.is_empty() {
            return vec![0.0; N_COEFFS];
        }
        let samples: ndarray::Array1<f64> = self
            .points
            .iter()
            .map(|g| model.attenuation(g, bvalue))
            .collect();
        self.weighted.dot(&samples).to_vec()
    }
}

fn synthesize(
    sh: &ShVolume,
    s0: &ScalarMap,
    gtab: &GradientTable,
    sigma: f64,
    seed: u64,
    site: u8,
    scan: u16,
) -> Result<DwiVolume> {
    let basis = build_basis(
        &gtab
            .dw_indices()
            .iter()
            .map(|&i| gtab.directions()[i])
            .collect::<Vec<_>>(),
        sh.lmax,
    )?;
    let dw = gtab.dw_indices();
    let b0 = gtab.b0_indices();
    let n_vox = sh.grid.n_voxels();
    let mut signals = Array2::<f64>::zeros((n_vox, gtab.len()));
    let clean_dw = sh.coeffs.dot(&basis.matrix.t());
    Zip::indexed(signals.axis_iter_mut(Axis(0)))
        .and(clean_dw.axis_iter(Axis(0)))
        .par_for_each(|v, mut row, dwrow| {
            let amp = s0.values[v];
            let mut clean = vec![0.0; gtab.len()];
            for &i in &b0 {
                clean[i] = amp;
            }
            for (k, &i) in dw.iter().enumerate() {
                clean[i] = amp * dwrow[k];
            }
            let noisy = if sigma > 0.0 {
                let mut rng = stream_rng(
                    seed,
                    StreamId {
                        purpose: PURPOSE_NOISE,
                        site,
                        scan,
                        index: v as u64,
                    },
                );
                add_rician_noise(&clean, sigma, &mut rng)
            } else {
                clean
            };
            for (o, x) in row.iter_mut().zip(noisy) {
                *o = x;
            }
        });
    DwiVolume::new(sh.grid, signals)
}

pub fn simulate_paired_dataset(cfg: &SimConfig) -> Result<PairedDataset> {
    cfg.validate()?;
    let grid = cfg.grid();
    let gtab = cfg.protocol.gradient_table()?;
    let models = build_layout(&cfg.layout, &grid, cfg.seed)?;
    let projector = Projector::new()?;

    let mut coeffs = Array2::<f64>::zeros((grid.n_voxels(), N_COEFFS));
    Zip::from(coeffs.axis_iter_mut(Axis(0)))
        .and(ndarray::ArrayView1::from(&models[..]))
        .par_for_each(|mut row, m| {
            for (o, c) in row
                .iter_mut()
                .zip(projector.project(m, cfg.protocol.bvalue))
            {
                *o = c;
            }
        });
    let clean_source_sh = ShVolume::new(grid, LMAX, coeffs)?;
    let gain = cfg.gain_field.map(|g| g.sample(&grid));
    let clean_target_sh = apply_site_effect(&clean_source_sh, &cfg.site_scales, gain.as_ref())?;

    let s0 = ScalarMap {
        grid,
        values: models.iter().map(|m| m.s0).collect(),
    };
    let mut source = Vec::with_capacity(cfg.scans);
    let mut target = Vec::with_capacity(cfg.scans);
    for scan in 0..cfg.scans {
        let scan = scan as u16;
        source.push(synthesize(
            &clean_source_sh,
            &s0,
            &gtab,
            cfg.noise_sigma[0],
            cfg.seed,
            SOURCE_SITE,
            scan,
        )?);
        target.push(synthesize(
            &clean_target_sh,
            &s0,
            &gtab,
            cfg.noise_sigma[1],
            cfg.seed,
            TARGET_SITE,
            scan,
        )?);
    }

    let mask = Mask {
        grid,
        values: models.iter().map(|m| m.label != LABEL_BACKGROUND).collect(),
    };
    let fiber = |k: usize| VectorField {
        grid,
        values: models
            .iter()
            .map(|m| m.fibers.get(k).copied().unwrap_or([0.0; 3]))
            .collect(),
    };
    let mean_tensor = models
        .iter()
        .map(|m| {
            let mut t = [0.0; 6];
            for (f, d) in &m.compartments {
                for (o, x) in t.iter_mut().zip(d.0) {
                    *o += f * x;
                }
            }
            t
        })
        .collect();
    let truth = GroundTruth {
        config: cfg.clone(),
        labels: models.iter().map(|m| m.label).collect(),
        s0,
        primary_fiber: fiber(0),
        secondary_fiber: fiber(1),
        mean_tensor,
        gain,
    };
    Ok(PairedDataset {
        gtab,
        source,
        target,
        mask,
        truth,
        clean_source_sh,
        clean_target_sh,
    })
}

/// Subjects share the site model; anatomy and noise vary with
/// `seed + subject`.
pub fn simulate_traveling_subjects(
    base: &SimConfig,
    n_subjects: usize,
) -> Result<Vec<PairedDataset>> {
    if n_subjects == 0 {
        return Err(HarpError::invalid("at least one subject is required"));
    }
    (0..n_subjects)
        .map(|i| {
            let mut cfg = base.clone();
            cfg.seed = base.seed.wrapping_add(i as u64);
            simulate_paired_dataset(&cfg)
        })
        .collect()
}
