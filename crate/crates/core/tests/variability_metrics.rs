mod common;

use common::*;
use harp::evaluation::{
    fiber_preservation, pooled_standard_error, report_csv, variability_row, SiteScans,
};
use harp::geometry::normalize;
use harp::metrics::{
    angular_error, axis_angle, percentage_difference, standard_error, wdice, MeasurementTable,
    WeightedMap,
};
use harp::volume::{Grid, Mask, ScalarMap, VectorField};
use harp::HarpError;
use proptest::prelude::*;
use rand::Rng;

fn random_table(r: &mut impl Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..k).map(|_| r.random_range(-5.0..5.0)).collect())
        .collect()
}

/// Two explicit loops over subjects and measurements.
fn brute_force_se(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let k = rows[0].len();
    let mut ss = 0.0;
    for row in rows {
        let mut mean = 0.0;
        for y in row {
            mean += y;
        }
        mean /= k as f64;
        for y in row {
            ss += (y - mean) * (y - mean);
        }
    }
    (ss / (n as f64 * (k as f64 - 1.0))).sqrt()
}

fn map(grid: Grid, values: Vec<f64>) -> ScalarMap {
    ScalarMap::new(grid, values).unwrap()
}

fn weights(values: &[f64]) -> WeightedMap {
    WeightedMap::new(map(line_grid(values.len()), values.to_vec())).unwrap()
}

#[test]
fn standard_error_examples() {
    let equal = MeasurementTable::new(vec![vec![2.0, 2.0], vec![-1.0, -1.0]]).unwrap();
    assert_eq!(standard_error(&equal), 0.0);
    let t = MeasurementTable::new(vec![vec![0.5, 0.7], vec![0.4, 0.4]]).unwrap();
    assert!((standard_error(&t) - 0.1).abs() < 1e-12);
    assert!(matches!(
        MeasurementTable::new(vec![vec![1.0], vec![2.0]]),
        Err(HarpError::InvalidArgument(_))
    ));
    assert!(MeasurementTable::new(vec![]).is_err());
    assert!(MeasurementTable::new(vec![vec![1.0, f64::NAN]]).is_err());
    assert!(MeasurementTable::new(vec![vec![1.0, 2.0], vec![1.0, 2.0, 3.0]]).is_err());
}

#[test]
fn percentage_difference_examples() {
    let up = percentage_difference(46.5, 42.2).unwrap();
    assert!((up - 10.0).abs() < 0.5, "{up}");
    let down = percentage_difference(39.9, 42.2).unwrap();
    assert!((down + 5.0).abs() < 0.5, "{down}");
    assert_eq!(percentage_difference(3.0, 3.0).unwrap(), 0.0);
    assert!(matches!(
        percentage_difference(1.0, 0.0),
        Err(HarpError::UndefinedBaseline)
    ));
}

#[test]
fn wdice_examples() {
    let a = weights(&[1.0, 1.0, 0.0]);
    let b = weights(&[0.0, 1.0, 1.0]);
    assert_eq!(wdice(&a, &b).unwrap(), 0.5);
    assert_eq!(wdice(&a, &a).unwrap(), 1.0);
    // identical supports, different weights
    assert_eq!(wdice(&a, &weights(&[3.0, 0.5, 0.0])).unwrap(), 1.0);
    assert_eq!(
        wdice(&weights(&[1.0, 0.0, 0.0]), &weights(&[0.0, 0.0, 2.0])).unwrap(),
        0.0
    );
    let zero = weights(&[0.0; 3]);
    assert!(matches!(
        wdice(&zero, &zero),
        Err(HarpError::UndefinedOverlap)
    ));
    assert!(WeightedMap::new(map(line_grid(2), vec![1.0, -0.1])).is_err());
    assert!(wdice(&a, &weights(&[1.0, 1.0])).is_err());
}

#[test]
fn thresholded_weights() {
    let grid = line_grid(4);
    let fa = map(grid, vec![0.1, 0.3, 0.5, 0.7]);
    let mask = Mask::new(grid, vec![true, true, true, false]).unwrap();
    let w = WeightedMap::thresholded(&fa, 0.3, &mask).unwrap();
    assert_eq!(w.0.values, vec![0.0, 0.3, 0.5, 0.0]);
}

fn field(values: Vec<[f64; 3]>) -> VectorField {
    VectorField {
        grid: line_grid(values.len()),
        values,
    }
}

#[test]
fn angular_error_examples() {
    let a = field(vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    let b = field(vec![
        [0.0, 0.0, -1.0],
        [0.0, 1.0, 0.0],
        normalize(&[1.0, 1.0, 0.0]),
    ]);
    let e = angular_error(&a, &b, &Mask::full(a.grid)).unwrap();
    assert!(e.map.values[0].abs() < 1e-12);
    assert!((e.map.values[1] - 90.0).abs() < 1e-12);
    assert!((e.map.values[2] - 45.0).abs() < 1e-10);
    assert!((e.mean_deg - 45.0).abs() < 1e-10);

    let partial = Mask::new(a.grid, vec![false, true, false]).unwrap();
    let e = angular_error(&a, &b, &partial).unwrap();
    assert!((e.mean_deg - 90.0).abs() < 1e-12);
    assert_eq!(e.map.values[0], 0.0);
    assert!(matches!(
        angular_error(&a, &b, &Mask::empty(a.grid)),
        Err(HarpError::InvalidArgument(_))
    ));
}

#[test]
fn pooled_error_and_report() {
    let grid = line_grid(3);
    let mask = Mask::new(grid, vec![true, true, false]).unwrap();
    let s1 = map(grid, vec![0.5, 0.4, 9.0]);
    let s2 = map(grid, vec![0.7, 0.4, -9.0]);
    // rows (0.5, 0.7) and (0.4, 0.4): the unmasked voxel is ignored
    let se = pooled_standard_error(&[vec![&s1, &s2]], &[&mask]).unwrap();
    assert!((se - 0.1).abs() < 1e-12);
    assert!(pooled_standard_error(&[vec![&s1, &s2]], &[&Mask::empty(grid)]).is_err());
    assert!(pooled_standard_error(&[vec![&s1, &s2], vec![&s1]], &[&mask, &mask]).is_err());

    let t1 = map(grid, vec![0.6, 0.5, 0.0]);
    let t2 = map(grid, vec![0.6, 0.7, 0.0]);
    let scans = [SiteScans {
        source: vec![&s1, &s2],
        target: vec![&t1, &t2],
    }];
    let methods = [
        ("none", vec![vec![&s1, &s2]]),
        ("harp", vec![vec![&t1, &t2]]),
    ];
    let row = variability_row("FA", "phantom", &scans, &methods, &[&mask]).unwrap();
    assert!((row.scan_rescan_source - 0.1).abs() < 1e-12);
    assert!((row.scan_rescan_target - 0.1).abs() < 1e-12);
    // inter-scanner groups are [harmonized source scans, target scans]
    let none =
        MeasurementTable::new(vec![vec![0.5, 0.7, 0.6, 0.6], vec![0.4, 0.4, 0.5, 0.7]]).unwrap();
    assert!((row.inter[0].sigma - standard_error(&none)).abs() < 1e-12);
    let harp =
        MeasurementTable::new(vec![vec![0.6, 0.6, 0.6, 0.6], vec![0.5, 0.7, 0.5, 0.7]]).unwrap();
    assert!((row.inter[1].sigma - standard_error(&harp)).abs() < 1e-12);
    let expect = percentage_difference(row.inter[1].sigma, 0.1).unwrap();
    assert!((row.inter[1].pct_vs_max - expect).abs() < 1e-9);

    let csv = report_csv(&[row]);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "metric,scenario,scan_rescan_source,scan_rescan_target,inter_none,pct_none_vs_max,pct_none_vs_source,inter_harp,pct_harp_vs_max,pct_harp_vs_source"
    );
    let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(fields.len(), 10);
    assert_eq!(&fields[..2], &["FA", "phantom"]);
    assert!(lines.next().is_none());
}

#[test]
fn fiber_preservation_of_identical_fields() {
    let grid = line_grid(4);
    let peaks = VectorField {
        grid,
        values: vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0; 3], [0.0, 1.0, 0.0]],
    };
    let fa = map(grid, vec![0.5, 0.6, 0.1, 0.8]);
    let f = fiber_preservation(&peaks, &peaks, &fa, &fa, &Mask::full(grid), 0.2).unwrap();
    assert_eq!(f.angular_error_deg, 0.0);
    assert_eq!(f.wdice, 1.0);
    assert_eq!(f.compared_voxels, 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standard_error_matches_brute_force(seed in any::<u64>(), n in 1usize..8, k in 2usize..6) {
        let rows = random_table(&mut rng(seed), n, k);
        let se = standard_error(&MeasurementTable::new(rows.clone()).unwrap());
        let brute = brute_force_se(&rows);
        prop_assert!((se - brute).abs() <= 1e-12 * brute.max(1.0));
    }

    #[test]
    fn standard_error_centering_and_scaling(seed in any::<u64>(), shift in -100.0f64..100.0, k in -10.0f64..10.0) {
        let mut r = rng(seed);
        let rows = random_table(&mut r, 4, 3);
        let base = standard_error(&MeasurementTable::new(rows.clone()).unwrap());
        let mut shifted = rows.clone();
        shifted[1].iter_mut().for_each(|y| *y += shift);
        let s = standard_error(&MeasurementTable::new(shifted).unwrap());
        prop_assert!((s - base).abs() < 1e-10);
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|y| y * k).collect()).collect();
        let s = standard_error(&MeasurementTable::new(scaled).unwrap());
        prop_assert!((s - k.abs() * base).abs() < 1e-12 * base.max(1.0) * k.abs().max(1.0));
    }

    #[test]
    fn wdice_symmetric_scale_invariant_bounded(seed in any::<u64>(), k in 0.01f64..100.0) {
        let mut r = rng(seed);
        let mut draw = || -> Vec<f64> {
            (0..20).map(|_| if r.random::<f64>() < 0.4 { 0.0 } else { r.random_range(0.0..2.0) }).collect()
        };
        let (a, b) = (draw(), draw());
        prop_assume!(a.iter().chain(&b).any(|&w| w > 0.0));
        let d = wdice(&weights(&a), &weights(&b)).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, wdice(&weights(&b), &weights(&a)).unwrap());
        let ka: Vec<f64> = a.iter().map(|w| w * k).collect();
        let kb: Vec<f64> = b.iter().map(|w| w * k).collect();
        prop_assert!((wdice(&weights(&ka), &weights(&kb)).unwrap() - d).abs() < 1e-12);
    }

    #[test]
    fn angular_error_bounds(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a: Vec<[f64; 3]> = (0..16).map(|_| unit_vector(&mut r)).collect();
        let b: Vec<[f64; 3]> = (0..16).map(|_| unit_vector(&mut r)).collect();
        let fa = field(a.clone());
        let mask = Mask::full(fa.grid);
        prop_assert_eq!(angular_error(&fa, &fa, &mask).unwrap().mean_deg, 0.0);
        let e = angular_error(&fa, &field(b.clone()), &mask).unwrap();
        prop_assert!(e.map.values.iter().all(|t| (0.0..=90.0).contains(t)));
        let flipped: Vec<[f64; 3]> = a.iter().map(|v| [-v[0], -v[1], -v[2]]).collect();
        prop_assert_eq!(angular_error(&fa, &field(flipped), &mask).unwrap().mean_deg, 0.0);
        for (u, v) in a.iter().zip(&b) {
            prop_assert_eq!(axis_angle(u, v), axis_angle(v, u));
        }
    }
}
