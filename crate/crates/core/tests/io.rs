mod common;

use std::path::Path;

use common::*;
use harp::harp::{Architecture, MlpParams, TrainConfig};
use harp::io::{
    atomic_write, encode_volume, parse_gradients, parse_volume, read_dwi, read_frames, read_json,
    read_mask, read_model, read_scalar, read_sh, read_vectors, read_volume, write_dwi,
    write_frames, write_gradients, write_json, write_mask, write_model, write_scalar, write_sh,
    write_vectors, write_volume, Datatype, VolumeHeader, DATA_OFFSET, MODEL_VERSION,
};
use harp::sh::ShVolume;
use harp::sim::SimConfig;
use harp::volume::{DwiVolume, Grid, Mask, ScalarMap, VectorField};
use harp::HarpError;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn sample_bytes(datatype: Datatype) -> Vec<u8> {
    let h = VolumeHeader::new(&[2, 3, 2], [1.0; 3], datatype);
    encode_volume(&h, &[3.0; 12]).unwrap()
}

fn format_offset(e: &HarpError) -> u64 {
    match e {
        HarpError::Format { offset, .. } => *offset,
        other => panic!("expected a format error, got {other:?}"),
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn float64_volumes_round_trip_bitwise(seed in any::<u64>(), dims in prop::collection::vec(1usize..5, 1..=4)) {
        let mut r = rng(seed);
        let n: usize = dims.iter().product();
        let data: Vec<f64> = (0..n).map(|_| r.random_range(-1e6..1e6) * r.random::<f64>()).collect();
        let h = VolumeHeader::new(&dims, [0.5, 1.0, 2.5], Datatype::Float64);
        let bytes = encode_volume(&h, &data).unwrap();
        let back = parse_volume(Path::new("mem.nii"), &bytes).unwrap();
        prop_assert_eq!(bits(&back.data), bits(&data));
        prop_assert_eq!(&back.header, &h);
    }

    #[test]
    fn float32_volumes_round_trip_bitwise(seed in any::<u64>(), dims in prop::collection::vec(1usize..5, 4..=4)) {
        let mut r = rng(seed);
        let n: usize = dims.iter().product();
        // values representable in f32 survive exactly
        let data: Vec<f64> = (0..n).map(|_| r.random_range(-1e3f32..1e3f32) as f64).collect();
        let h = VolumeHeader::new(&dims, [1.0; 3], Datatype::Float32);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.nii");
        write_volume(&path, &h, &data).unwrap();
        let back = read_volume(&path).unwrap();
        prop_assert_eq!(bits(&back.data), bits(&data));
        prop_assert_eq!(back.header.datatype, Datatype::Float32);
        prop_assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, DATA_OFFSET + 4 * n);
    }
}

#[test]
fn detached_and_big_endian_files_are_unsupported() {
    let mut b = sample_bytes(Datatype::Float32);
    b[344..348].copy_from_slice(b"ni1\0");
    assert!(matches!(
        parse_volume(Path::new("x"), &b),
        Err(HarpError::UnsupportedEncoding { .. })
    ));

    let mut b = sample_bytes(Datatype::Float32);
    b[0..4].copy_from_slice(&348i32.to_be_bytes());
    assert!(matches!(
        parse_volume(Path::new("x"), &b),
        Err(HarpError::UnsupportedEncoding { .. })
    ));

    let mut b = sample_bytes(Datatype::Float32);
    b[344..348].copy_from_slice(b"abcd");
    assert_eq!(
        format_offset(&parse_volume(Path::new("x"), &b).unwrap_err()),
        344
    );
}

#[test]
fn slope_and_intercept_are_applied() {
    let mut b = sample_bytes(Datatype::Float32);
    b[112..116].copy_from_slice(&2.0f32.to_le_bytes());
    b[116..120].copy_from_slice(&1.0f32.to_le_bytes());
    let v = parse_volume(Path::new("x"), &b).unwrap();
    assert!(v.data.iter().all(|&x| x == 7.0));
    // slope 0 means unscaled
    b[112..116].copy_from_slice(&0.0f32.to_le_bytes());
    let v = parse_volume(Path::new("x"), &b).unwrap();
    assert!(v.data.iter().all(|&x| x == 3.0));
}

#[test]
fn malformed_files_report_byte_offsets() {
    let b = sample_bytes(Datatype::Float64);
    let e = parse_volume(Path::new("x"), &b[..200]).unwrap_err();
    assert_eq!(format_offset(&e), 200);
    let e = parse_volume(Path::new("x"), &b[..b.len() - 3]).unwrap_err();
    assert_eq!(format_offset(&e), (b.len() - 3) as u64);
    assert!(e.to_string().contains("truncated"));

    let mut bad = b.clone();
    bad[70..72].copy_from_slice(&4i16.to_le_bytes());
    let e = parse_volume(Path::new("x"), &bad).unwrap_err();
    assert_eq!(format_offset(&e), 70);
    assert!(e.is_format());

    let mut bad = b.clone();
    bad[108..112].copy_from_slice(&100.0f32.to_le_bytes());
    assert_eq!(
        format_offset(&parse_volume(Path::new("x"), &bad).unwrap_err()),
        108
    );

    assert!(matches!(
        read_volume("/nonexistent/file.nii"),
        Err(HarpError::Io { .. })
    ));
}

#[test]
fn writer_rejects_non_finite_or_misshaped_data() {
    let h = VolumeHeader::new(&[2, 2], [1.0; 3], Datatype::Float64);
    assert!(encode_volume(&h, &[1.0, 2.0, f64::NAN, 0.0]).is_err());
    assert!(encode_volume(&h, &[1.0; 3]).is_err());
}

fn gradient_text(n: usize, nb0: usize) -> (String, String) {
    let dirs = harp::sim::hemisphere_directions(n - nb0);
    let bvals: Vec<String> = (0..n)
        .map(|i| if i < nb0 { "0".into() } else { "1000".into() })
        .collect();
    let mut rows = vec![Vec::new(); 3];
    for _ in 0..nb0 {
        rows.iter_mut().for_each(|r| r.push("0".to_string()));
    }
    for d in dirs {
        for c in 0..3 {
            rows[c].push(format!("{}", d[c]));
        }
    }
    let bvec = rows
        .iter()
        .map(|r| r.join(" "))
        .collect::<Vec<_>>()
        .join("\n");
    (bvals.join(" "), bvec)
}

#[test]
fn gradient_table_examples() {
    let (bval, bvec) = gradient_text(60, 2);
    let p = Path::new("g");
    let g = parse_gradients(p, &bval, p, &bvec, 60).unwrap();
    assert_eq!(g.len(), 60);
    assert_eq!(g.b0_indices(), vec![0, 1]);

    let short_bvec: String = bvec
        .lines()
        .map(|l| l.rsplit_once(' ').unwrap().0)
        .collect::<Vec<_>>()
        .join("\n");
    let e = parse_gradients(p, &bval, p, &short_bvec, 60).unwrap_err();
    assert!(e.is_format());
    let msg = e.to_string();
    assert!(msg.contains("60") && msg.contains("59"), "{msg}");

    let e = parse_gradients(p, &bval, p, &bvec, 61).unwrap_err();
    assert!(e.to_string().contains("61"));

    let e = parse_gradients(p, "0 1000", p, "0 0\n0 0\n0 0", 2).unwrap_err();
    assert!(e.to_string().contains("invalid gradient"), "{e}");

    let g = parse_gradients(p, "0 1000", p, "0 0\n0 0\n0 2", 2).unwrap();
    assert_eq!(g.directions()[1], [0.0, 0.0, 1.0]);

    let e = parse_gradients(p, "0 abc", p, "0 0\n0 0\n0 1", 2).unwrap_err();
    assert_eq!(format_offset(&e), 2);
    assert!(parse_gradients(p, "0 1000", p, "0 0\n0 1", 2).is_err());
}

#[test]
fn gradient_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = single_shell(30, 2000.0, 3);
    let (bval, bvec) = (dir.path().join("b.bval"), dir.path().join("b.bvec"));
    write_gradients(&bval, &bvec, &g).unwrap();
    let back = harp::io::read_gradients(&bval, &bvec, 33).unwrap();
    assert_eq!(back.bvalues(), g.bvalues());
    for (a, b) in back.directions().iter().zip(g.directions()) {
        // re-reading renormalizes, which may move the last bit
        for c in 0..3 {
            assert!((a[c] - b[c]).abs() < 1e-15);
        }
    }
}

#[test]
fn typed_volumes_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::new([3, 2, 2], [1.5, 1.5, 2.0]);
    let mut r = rng(3);
    let sh = ShVolume::new(
        grid,
        8,
        Array2::from_shape_fn((12, 45), |_| r.random_range(-1.0..1.0)),
    )
    .unwrap();
    write_sh(dir.path().join("sh.nii"), &sh).unwrap();
    assert_eq!(read_sh(dir.path().join("sh.nii")).unwrap(), sh);

    let low = ShVolume::new(
        grid,
        4,
        Array2::from_shape_fn((12, 15), |_| r.random::<f64>()),
    )
    .unwrap();
    write_sh(dir.path().join("low.nii"), &low).unwrap();
    assert_eq!(read_sh(dir.path().join("low.nii")).unwrap().lmax, 4);
    write_frames(dir.path().join("bad.nii"), &grid, &Array2::zeros((12, 7))).unwrap();
    assert!(read_sh(dir.path().join("bad.nii")).unwrap_err().is_format());
    assert_eq!(
        read_frames(dir.path().join("bad.nii")).unwrap().1.ncols(),
        7
    );

    let dwi = DwiVolume::new(
        grid,
        Array2::from_shape_fn((12, 7), |_| r.random_range(0.0f32..1.0) as f64),
    )
    .unwrap();
    write_dwi(dir.path().join("dwi.nii"), &dwi, Datatype::Float32).unwrap();
    assert_eq!(read_dwi(dir.path().join("dwi.nii")).unwrap(), dwi);

    let map = ScalarMap::new(grid, (0..12).map(|i| i as f64 / 7.0).collect()).unwrap();
    write_scalar(dir.path().join("fa.nii"), &map).unwrap();
    assert_eq!(read_scalar(dir.path().join("fa.nii")).unwrap(), map);
    assert!(read_scalar(dir.path().join("dwi.nii")).is_err());

    let mask = Mask::new(grid, (0..12).map(|i| i % 3 == 0).collect()).unwrap();
    write_mask(dir.path().join("m.nii"), &mask).unwrap();
    assert_eq!(read_mask(dir.path().join("m.nii")).unwrap(), mask);

    let field = VectorField {
        grid,
        values: (0..12).map(|_| unit_vector(&mut r)).collect(),
    };
    write_vectors(dir.path().join("v.nii"), &field).unwrap();
    assert_eq!(read_vectors(dir.path().join("v.nii")).unwrap(), field);
}

#[test]
fn model_files_round_trip_and_check_version() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let p = MlpParams::init(&Architecture::with_hidden(vec![5, 4, 6]), 3).unwrap();
    let cfg = TrainConfig {
        iterations: 12,
        ..Default::default()
    };
    write_model(&path, &p, Some(&cfg), &[(0, 1.5), (11, 0.25)]).unwrap();
    let file = read_model(&path).unwrap();
    assert_eq!(file.to_params().unwrap(), p);
    assert_eq!(file.train_config, Some(cfg));
    assert_eq!(file.loss_log, vec![(0, 1.5), (11, 0.25)]);

    let text = std::fs::read_to_string(&path).unwrap();
    let bumped = text.replacen(&format!("\"version\":{MODEL_VERSION}"), "\"version\":99", 1);
    assert_ne!(bumped, text);
    std::fs::write(&path, bumped).unwrap();
    let e = read_model(&path).unwrap_err();
    assert!(e.is_format() && e.to_string().contains("99"), "{e}");

    std::fs::write(&path, r#"{"format":"something-else","version":1}"#).unwrap();
    assert!(read_model(&path).unwrap_err().is_format());

    // a layer whose shape disagrees with the architecture
    let mut file = harp::io::ModelFile::from_params(&p, None, &[]);
    file.layers[0].rows = 4;
    let cols = file.layers[0].cols;
    file.layers[0].weights.truncate(4 * cols);
    file.layers[0].bias.truncate(4);
    write_json(&path, &file).unwrap();
    assert!(read_model(&path).unwrap_err().is_format());
}

#[test]
fn configs_reject_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.json");
    std::fs::write(
        &path,
        r#"{"dims":[4,4,4],"protocol":{"bvalue":1000,"directions":30},"layout":{"kind":"phantom"},
            "site_scales":[1,1,1,1,1],"noise_sigma":[0,0],"seeed":3}"#,
    )
    .unwrap();
    assert!(matches!(
        read_json::<SimConfig>(&path),
        Err(HarpError::Json { .. })
    ));
    let fixed = std::fs::read_to_string(&path)
        .unwrap()
        .replace("seeed", "seed");
    std::fs::write(&path, fixed).unwrap();
    let cfg: SimConfig = read_json(&path).unwrap();
    assert_eq!((cfg.seed, cfg.scans, cfg.protocol.n_b0), (3, 1, 6));

    std::fs::write(&path, r#"{"learning_rate":1e-3,"momentum":0.9}"#).unwrap();
    assert!(read_json::<TrainConfig>(&path).is_err());
}

#[test]
fn atomic_write_replaces_whole_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.txt");
    std::fs::write(&path, "old contents that are longer").unwrap();
    atomic_write(&path, b"new").unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), b"new");
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 1);
    assert!(atomic_write(&dir.path().join("missing/dir/x"), b"x").is_err());
}
