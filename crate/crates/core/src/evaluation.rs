//! Derived maps (FA, MD, GFA, peaks) and the variability reports built on them.

use ndarray::{Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::dti::{tensor_maps, TensorMaps};
use crate::error::{HarpError, Result};
use crate::metrics::{
    angular_error, percentage_difference, standard_error, wdice, MeasurementTable, WeightedMap,
};
use crate::odf::{
    extract_peaks_with_basis, gfa_with_basis, sphere_basis, Csd, CsdOptions, PeakOptions,
    ResponseKernel, Sphere,
};
use crate::sh::{reconstruct_dwi, GradientTable, ShVolume, LMAX};
use crate::volume::{Mask, ScalarMap, VectorField};

/// Tensor scalars of the signal an SH volume represents.
pub fn tensor_maps_from_sh(sh: &ShVolume, gtab: &GradientTable, mask: &Mask) -> Result<TensorMaps> {
    let dwi = reconstruct_dwi(sh, gtab)?;
    tensor_maps(&dwi, gtab, mask)
}

/// fODF-derived maps.
#[derive(Debug, Clone)]
pub struct OdfMaps {
    pub fodf: ShVolume,
    pub gfa: ScalarMap,
    /// Strongest peak per voxel; zero where none was found.
    pub principal_peak: VectorField,
    pub unconverged_voxels: usize,
}

pub fn odf_maps(
    sh: &ShVolume,
    kernel: &ResponseKernel,
    sphere: &Sphere,
    mask: &Mask,
    csd: CsdOptions,
    peaks: &PeakOptions,
) -> Result<OdfMaps> {
    sh.ensure_full_order()?;
    sh.grid.ensure_same(&mask.grid, "odf_maps")?;
    let solver = Csd::new(kernel, sphere, csd)?;
    let basis = sphere_basis(sphere, LMAX);
    let n = sh.grid.n_voxels();
    let mut fodf = Array2::<f64>::zeros(sh.coeffs.raw_dim());
    let mut gfa = vec![0.0; n];
    let mut peak = vec![[0.0; 3]; n];
    let mut status: Vec<Result<bool>> = (0..n).map(|_| Ok(true)).collect();
    Zip::indexed(fodf.axis_iter_mut(Axis(0)))
        .and(&mut gfa[..])
        .and(&mut peak[..])
        .and(&mut status[..])
        .par_for_each(|v, mut f, g, p, st| {
            if !mask.values[v] {
                return;
            }
            let signal: Vec<f64> = sh.coeffs.row(v).to_vec();
            match solver.deconvolve(&signal) {
                Ok(res) => {
                    *g = gfa_with_basis(&res.fodf, &basis);
                    if let Some(first) =
                        extract_peaks_with_basis(&res.fodf, sphere, &basis, peaks).first()
                    {
                        *p = *first;
                    }
                    f.iter_mut().zip(&res.fodf).for_each(|(o, &x)| *o = x);
                    *st = Ok(res.converged);
                }
                Err(e) => *st = Err(e),
            }
        });
    let mut unconverged = 0;
    for st in status {
        if !st? {
            unconverged += 1;
        }
    }
    Ok(OdfMaps {
        fodf: ShVolume::new(sh.grid, LMAX, fodf)?,
        gfa: ScalarMap::new(sh.grid, gfa)?,
        principal_peak: VectorField {
            grid: sh.grid,
            values: peak,
        },
        unconverged_voxels: unconverged,
    })
}

/// Standard error pooled over subjects and voxels: every masked voxel
/// of every subject contributes one group of `K = maps.len()` measurements.
///
/// `subjects[i]` holds the K co-registered maps of subject `i`.
pub fn pooled_standard_error(subjects: &[Vec<&ScalarMap>], masks: &[&Mask]) -> Result<f64> {
    if subjects.len() != masks.len() || subjects.is_empty() {
        return Err(HarpError::invalid(
            "need one mask per subject and at least one subject",
        ));
    }
    let k = subjects[0].len();
    let mut rows = Vec::new();
    for (maps, mask) in subjects.iter().zip(masks) {
        if maps.len() != k {
            return Err(HarpError::invalid(
                "every subject needs the same number of measurements",
            ));
        }
        for m in maps {
            m.grid.ensure_same(&mask.grid, "pooled_standard_error")?;
        }
        for v in mask.indices() {
            rows.push(maps.iter().map(|m| m.values[v]).collect::<Vec<f64>>());
        }
    }
    if rows.is_empty() {
        return Err(HarpError::invalid("all masks are empty"));
    }
    Ok(standard_error(&MeasurementTable::new(rows)?))
}

/// Per-subject maps for one metric: scans at the source and target site.
#[derive(Debug, Clone)]
pub struct SiteScans<'a> {
    pub source: Vec<&'a ScalarMap>,
    pub target: Vec<&'a ScalarMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterScanner {
    pub method: String,
    pub sigma: f64,
    /// Against max(source, target) scan-rescan error.
    pub pct_vs_max: f64,
    /// Against the source scan-rescan error.
    pub pct_vs_source: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilityRow {
    pub metric: String,
    pub scenario: String,
    pub scan_rescan_source: f64,
    pub scan_rescan_target: f64,
    pub inter: Vec<InterScanner>,
}

/// Scan-rescan and inter-scanner errors for one metric.
///
/// `methods` pairs a label with per-subject source-site maps after that
/// method was applied; the unharmonized source maps should be passed as one
/// of them for the "none" column.
pub fn variability_row(
    metric: &str,
    scenario: &str,
    subjects: &[SiteScans<'_>],
    methods: &[(&str, Vec<Vec<&ScalarMap>>)],
    masks: &[&Mask],
) -> Result<VariabilityRow> {
    let src: Vec<Vec<&ScalarMap>> = subjects.iter().map(|s| s.source.clone()).collect();
    let tgt: Vec<Vec<&ScalarMap>> = subjects.iter().map(|s| s.target.clone()).collect();
    let sr_src = pooled_standard_error(&src, masks)?;
    let sr_tgt = pooled_standard_error(&tgt, masks)?;
    let baseline = sr_src.max(sr_tgt);
    let mut inter = Vec::with_capacity(methods.len());
    for (name, per_subject) in methods {
        if per_subject.len() != subjects.len() {
            return Err(HarpError::invalid(format!(
                "method {name} lacks maps for some subjects"
            )));
        }
        let groups: Vec<Vec<&ScalarMap>> = per_subject
            .iter()
            .zip(subjects)
            .map(|(h, s)| h.iter().chain(&s.target).copied().collect())
            .collect();
        let sigma = pooled_standard_error(&groups, masks)?;
        inter.push(InterScanner {
            method: name.to_string(),
            sigma,
            pct_vs_max: percentage_difference(sigma, baseline)?,
            pct_vs_source: percentage_difference(sigma, sr_src)?,
        });
    }
    Ok(VariabilityRow {
        metric: metric.to_string(),
        scenario: scenario.to_string(),
        scan_rescan_source: sr_src,
        scan_rescan_target: sr_tgt,
        inter,
    })
}

/// CSV with one row per metric/scenario and three columns per method.
pub fn report_csv(rows: &[VariabilityRow]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        for i in &r.inter {
            if !methods.contains(&i.method.as_str()) {
                methods.push(&i.method);
            }
        }
    }
    let mut out = String::from("metric,scenario,scan_rescan_source,scan_rescan_target");
    for m in &methods {
        out.push_str(&format!(",inter_{m},pct_{m}_vs_max,pct_{m}_vs_source"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}",
            r.metric, r.scenario, r.scan_rescan_source, r.scan_rescan_target
        ));
        for m in &methods {
            match r.inter.iter().find(|i| i.method == *m) {
                Some(i) => out.push_str(&format!(
                    ",{},{},{}",
                    i.sigma, i.pct_vs_max, i.pct_vs_source
                )),
                None => out.push_str(",,,"),
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberPreservation {
    pub angular_error_deg: f64,
    pub wdice: f64,
    pub compared_voxels: usize,
}

/// Angular error between principal peaks (voxels where both have one) and
/// wDICE of the FA maps thresholded at `fa_threshold`, inside `mask`.
pub fn fiber_preservation(
    peaks_before: &VectorField,
    peaks_after: &VectorField,
    fa_before: &ScalarMap,
    fa_after: &ScalarMap,
    mask: &Mask,
    fa_threshold: f64,
) -> Result<FiberPreservation> {
    let both = Mask::new(
        mask.grid,
        mask.values
            .iter()
            .zip(peaks_before.values.iter().zip(&peaks_after.values))
            .map(|(&m, (a, b))| m && a.iter().any(|&x| x != 0.0) && b.iter().any(|&x| x != 0.0))
            .collect(),
    )?;
    let ang = angular_error(peaks_before, peaks_after, &both)?;
    let wa = WeightedMap::thresholded(fa_before, fa_threshold, mask)?;
    let wb = WeightedMap::thresholded(fa_after, fa_threshold, mask)?;
    Ok(FiberPreservation {
        angular_error_deg: ang.mean_deg,
        wdice: wdice(&wa, &wb)?,
        compared_voxels: both.count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;

    fn map(grid: Grid, v: &[f64]) -> ScalarMap {
        ScalarMap::new(grid, v.to_vec()).unwrap()
    }

    #[test]
    fn pooled_error_matches_table() {
        let grid = Grid::new([2, 1, 1], [1.0; 3]);
        let mask = Mask::full(grid);
        let a = map(grid, &[0.5, 0.4]);
        let b = map(grid, &[0.7, 0.4]);
        let se = pooled_standard_error(&[vec![&a, &b]], &[&mask]).unwrap();
        assert!((se - 0.1).abs() < 1e-15);
    }

    #[test]
    fn report_has_columns_for_each_method() {
        let grid = Grid::new([2, 1, 1], [1.0; 3]);
        let mask = Mask::full(grid);
        let s1 = map(grid, &[1.0, 2.0]);
        let s2 = map(grid, &[1.1, 2.1]);
        let t1 = map(grid, &[1.3, 2.2]);
        let t2 = map(grid, &[1.2, 2.3]);
        let subjects = [SiteScans {
            source: vec![&s1, &s2],
            target: vec![&t1, &t2],
        }];
        let methods = [
            ("none", vec![vec![&s1, &s2]]),
            ("harp", vec![vec![&t1, &t2]]),
        ];
        let row = variability_row("FA", "phantom", &subjects, &methods, &[&mask]).unwrap();
        assert!(row.inter[1].sigma < row.inter[0].sigma);
        let csv = report_csv(&[row]);
        assert!(csv.starts_with("metric,scenario,scan_rescan_source,scan_rescan_target,inter_none"));
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().all(|l| l.split(',').count() == 10));
    }
}
