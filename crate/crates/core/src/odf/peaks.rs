use super::{sphere_basis, Sphere};
use crate::geometry::{axis_angle_deg, canonical_axis, cross, normalize, Vec3};
use crate::sh::basis::eval_real_sh;
use crate::sh::{BasisMatrix, N_COEFFS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakOptions {
    /// Peaks below this fraction of the maximum amplitude are dropped.
    pub rel_threshold: f64,
    /// Minimum axis separation between retained peaks, degrees.
    pub min_sep_deg: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            rel_threshold: 0.5,
            min_sep_deg: 25.0,
        }
    }
}

fn amplitude(odf_sh: &[f64], d: &Vec3, buf: &mut [f64]) -> f64 {
    eval_real_sh(d, 8, buf);
    buf.iter().zip(odf_sh).map(|(b, c)| b * c).sum()
}

/// Pattern search on the sphere starting from a vertex.
fn refine(odf_sh: &[f64], start: Vec3, start_value: f64, buf: &mut [f64]) -> (Vec3, f64) {
    let mut p = start;
    let mut best = start_value;
    let mut step = 0.05;
    while step > 1e-9 {
        let helper = if p[0].abs() < 0.9 {
            [1.0, 0.0, 0.0]
        } else {
            [0.0, 1.0, 0.0]
        };
        let u = normalize(&cross(&p, &helper));
        let w = cross(&p, &u);
        let mut moved = false;
        for (a, b) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            let q = normalize(&[
                p[0] + step * (a * u[0] + b * w[0]),
                p[1] + step * (a * u[1] + b * w[1]),
                p[2] + step * (a * u[2] + b * w[2]),
            ]);
            let v = amplitude(odf_sh, &q, buf);
            if v > best {
                best = v;
                p = q;
                moved = true;
                break;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (p, best)
}

/// Fiber directions of an ODF, strongest first.
///
/// Candidates are sphere vertices that are local maxima over the vertex
/// adjacency and reach `rel_threshold` of the largest sampled amplitude.
/// Each candidate is refined on the continuous ODF, then peaks closer than
/// `min_sep_deg` (as axes) to a stronger one are discarded.
pub fn extract_peaks(odf_sh: &[f64], sphere: &Sphere, opts: &PeakOptions) -> Vec<Vec3> {
    extract_peaks_with_basis(odf_sh, sphere, &sphere_basis(sphere, 8), opts)
}

/// [`extract_peaks`] with a precomputed order-8 sphere basis.
pub fn extract_peaks_with_basis(
    odf_sh: &[f64],
    sphere: &Sphere,
    basis: &BasisMatrix,
    opts: &PeakOptions,
) -> Vec<Vec3> {
    assert_eq!(odf_sh.len(), N_COEFFS);
    assert_eq!(basis.matrix.dim(), (sphere.len(), N_COEFFS));
    assert!(opts.rel_threshold > 0.0 && opts.rel_threshold <= 1.0);
    assert!(opts.min_sep_deg > 0.0);
    if odf_sh.iter().all(|&c| c == 0.0) {
        return Vec::new();
    }
    let amps = basis
        .matrix
        .dot(&ndarray::ArrayView1::from(odf_sh))
        .to_vec();
    let max = amps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Vec::new();
    }
    let mut buf = vec![0.0; N_COEFFS];
    let mut candidates: Vec<(Vec3, f64)> = (0..sphere.len())
        .filter(|&i| amps[i] >= opts.rel_threshold * max)
        .filter(|&i| sphere.neighbors[i].iter().all(|&j| amps[i] >= amps[j]))
        .map(|i| refine(odf_sh, sphere.vertices[i], amps[i], &mut buf))
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
    if opts.rel_threshold >= 1.0 {
        // only the strongest peak reaches a threshold of 1, even among ties
        candidates.truncate(1);
    }

    let mut peaks: Vec<Vec3> = Vec::new();
    for (dir, _) in candidates {
        let dir = canonical_axis(&dir);
        if peaks
            .iter()
            .all(|p| axis_angle_deg(p, &dir) >= opts.min_sep_deg)
        {
            peaks.push(dir);
        }
    }
    peaks
}
