//! File formats: NIfTI-1 volumes, bval/bvec tables, JSON models and configs.

mod gradients;
mod model;
mod nifti;

pub use gradients::{parse_gradients, read_gradient_table, read_gradients, write_gradients};
pub use model::{read_model, write_model, ModelFile, MODEL_FORMAT, MODEL_VERSION};
pub use nifti::{
    encode_volume, parse_volume, read_volume, write_volume, Datatype, NiftiVolume, VolumeHeader,
    DATA_OFFSET, HEADER_SIZE,
};

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{HarpError, Result};
use crate::sh::{n_coeffs, ShVolume, LMAX};
use crate::volume::{DwiVolume, Grid, Mask, ScalarMap, VectorField};

/// Write via a sibling temporary file and rename, so readers never see a
/// partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HarpError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| HarpError::io(path, e))?;
    tmp.flush().map_err(|e| HarpError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| HarpError::io(path, e.error))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HarpError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| HarpError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| HarpError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

fn grid_of(header: &VolumeHeader) -> Grid {
    Grid::new(header.spatial_dims(), header.voxel_size)
}

/// Frames become the fourth axis: value `(v, t)` sits at `t * n_vox + v`.
fn frames_to_file(grid: &Grid, rows: &Array2<f64>, datatype: Datatype) -> (VolumeHeader, Vec<f64>) {
    let n_vox = grid.n_voxels();
    let n_t = rows.ncols();
    let mut data = vec![0.0; n_vox * n_t];
    for ((v, t), &x) in rows.indexed_iter() {
        data[t * n_vox + v] = x;
    }
    let d = grid.dims;
    (
        VolumeHeader::new(&[d[0], d[1], d[2], n_t], grid.voxel_size, datatype),
        data,
    )
}

fn file_to_frames(vol: &NiftiVolume) -> (Grid, Array2<f64>) {
    let grid = grid_of(&vol.header);
    let n_vox = grid.n_voxels();
    let n_t = vol.header.n_frames();
    let rows = Array2::from_shape_fn((n_vox, n_t), |(v, t)| vol.data[t * n_vox + v]);
    (grid, rows)
}

/// Per-voxel rows (e.g. scale maps) as a 4D float64 volume.
pub fn write_frames(path: impl AsRef<Path>, grid: &Grid, rows: &Array2<f64>) -> Result<()> {
    let (h, d) = frames_to_file(grid, rows, Datatype::Float64);
    write_volume(path, &h, &d)
}

pub fn read_frames(path: impl AsRef<Path>) -> Result<(Grid, Array2<f64>)> {
    Ok(file_to_frames(&read_volume(path)?))
}

pub fn write_dwi(path: impl AsRef<Path>, dwi: &DwiVolume, datatype: Datatype) -> Result<()> {
    let (h, d) = frames_to_file(&dwi.grid, &dwi.signals, datatype);
    write_volume(path, &h, &d)
}

pub fn read_dwi(path: impl AsRef<Path>) -> Result<DwiVolume> {
    let vol = read_volume(path)?;
    let (grid, rows) = file_to_frames(&vol);
    DwiVolume::new(grid, rows)
}

pub fn write_sh(path: impl AsRef<Path>, sh: &ShVolume) -> Result<()> {
    let (h, d) = frames_to_file(&sh.grid, &sh.coeffs, Datatype::Float64);
    write_volume(path, &h, &d)
}

/// The order is inferred from the frame count.
pub fn read_sh(path: impl AsRef<Path>) -> Result<ShVolume> {
    let path = path.as_ref();
    let vol = read_volume(path)?;
    let n_t = vol.header.n_frames();
    let lmax = (0..=LMAX)
        .step_by(2)
        .find(|&l| n_coeffs(l) == n_t)
        .ok_or_else(|| {
            HarpError::format(
                path,
                0,
                format!("{n_t} frames is not an even SH coefficient count (1, 6, 15, 28 or 45)"),
            )
        })?;
    let (grid, rows) = file_to_frames(&vol);
    ShVolume::new(grid, lmax, rows)
}

pub fn write_scalar(path: impl AsRef<Path>, map: &ScalarMap) -> Result<()> {
    let h = VolumeHeader::new(&map.grid.dims, map.grid.voxel_size, Datatype::Float64);
    write_volume(path, &h, &map.values)
}

pub fn read_scalar(path: impl AsRef<Path>) -> Result<ScalarMap> {
    let path = path.as_ref();
    let vol = read_volume(path)?;
    if vol.header.n_frames() != 1 {
        return Err(HarpError::format(path, 0, "expected a 3D scalar volume"));
    }
    ScalarMap::new(grid_of(&vol.header), vol.data)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    let h = VolumeHeader::new(&mask.grid.dims, mask.grid.voxel_size, Datatype::Float32);
    let d: Vec<f64> = mask
        .values
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    write_volume(path, &h, &d)
}

/// Nonzero voxels are inside.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let vol = read_volume(path)?;
    if vol.header.n_frames() != 1 {
        return Err(HarpError::format(path, 0, "expected a 3D mask volume"));
    }
    Mask::new(
        grid_of(&vol.header),
        vol.data.iter().map(|&v| v != 0.0).collect(),
    )
}

pub fn write_vectors(path: impl AsRef<Path>, field: &VectorField) -> Result<()> {
    let rows = Array2::from_shape_fn((field.values.len(), 3), |(v, c)| field.values[v][c]);
    let (h, d) = frames_to_file(&field.grid, &rows, Datatype::Float64);
    write_volume(path, &h, &d)
}

pub fn read_vectors(path: impl AsRef<Path>) -> Result<VectorField> {
    let path = path.as_ref();
    let vol = read_volume(path)?;
    if vol.header.n_frames() != 3 {
        return Err(HarpError::format(
            path,
            0,
            "expected a 4D volume with 3 components",
        ));
    }
    let (grid, rows) = file_to_frames(&vol);
    Ok(VectorField {
        grid,
        values: rows
            .rows()
            .into_iter()
            .map(|r| [r[0], r[1], r[2]])
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dwi_frames_round_trip() {
        let grid = Grid::new([2, 3, 1], [1.0, 1.0, 2.0]);
        let rows = Array2::from_shape_fn((6, 4), |(v, t)| (v * 10 + t) as f64);
        let dwi = DwiVolume::new(grid, rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dwi.nii");
        write_dwi(&p, &dwi, Datatype::Float32).unwrap();
        let back = read_dwi(&p).unwrap();
        assert_eq!(back.signals, dwi.signals);
        assert_eq!(back.grid, dwi.grid);
    }

    #[test]
    fn sh_order_is_inferred() {
        let grid = Grid::new([2, 2, 2], [1.0; 3]);
        let sh = ShVolume::new(grid, 4, Array2::from_elem((8, 15), 0.5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sh.nii");
        write_sh(&p, &sh).unwrap();
        assert_eq!(read_sh(&p).unwrap(), sh);
        let dwi = DwiVolume::new(grid, Array2::zeros((8, 7))).unwrap();
        write_dwi(&p, &dwi, Datatype::Float64).unwrap();
        assert!(read_sh(&p).unwrap_err().is_format());
    }
}
