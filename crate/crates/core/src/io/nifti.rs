//! Single-file, uncompressed NIfTI-1 volumes with float payloads.

use std::path::Path;

use super::atomic_write;
use crate::error::{HarpError, Result};

pub const HEADER_SIZE: usize = 348;
pub const DATA_OFFSET: usize = 352;
const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_XYZT_UNITS: usize = 123;
const OFF_DESCRIP: usize = 148;
const OFF_SFORM_CODE: usize = 254;
const OFF_SROW: usize = 280;
const OFF_MAGIC: usize = 344;

const UNITS_MM_SEC: u8 = 2 | 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Float32,
    Float64,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::Float32 => 16,
            Datatype::Float64 => 64,
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            Datatype::Float32 => 4,
            Datatype::Float64 => 8,
        }
    }

    fn from_code(code: i16) -> Option<Self> {
        match code {
            16 => Some(Datatype::Float32),
            64 => Some(Datatype::Float64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeHeader {
    /// One to four extents, x fastest.
    pub dims: Vec<usize>,
    pub voxel_size: [f64; 3],
    pub datatype: Datatype,
    pub scl_slope: f64,
    pub scl_inter: f64,
    pub vox_offset: usize,
}

impl VolumeHeader {
    pub fn new(dims: &[usize], voxel_size: [f64; 3], datatype: Datatype) -> Self {
        Self {
            dims: dims.to_vec(),
            voxel_size,
            datatype,
            scl_slope: 1.0,
            scl_inter: 0.0,
            vox_offset: DATA_OFFSET,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.dims.iter().product()
    }

    /// Spatial extents, padded with ones.
    pub fn spatial_dims(&self) -> [usize; 3] {
        let mut d = [1; 3];
        for (o, &v) in d.iter_mut().zip(&self.dims) {
            *o = v;
        }
        d
    }

    /// Extent of the fourth axis, 1 for 3D volumes.
    pub fn n_frames(&self) -> usize {
        self.dims.get(3).copied().unwrap_or(1)
    }
}

/// Header plus values in file order (x fastest, fourth axis slowest),
/// with slope/intercept already applied.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiVolume {
    pub header: VolumeHeader,
    pub data: Vec<f64>,
}

fn le_i16(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn le_f32(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes(b[off..off + 4].try_into().expect("4-byte slice"))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<NiftiVolume> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| HarpError::io(path, e))?;
    parse_volume(path, &bytes)
}

pub fn parse_volume(path: &Path, bytes: &[u8]) -> Result<NiftiVolume> {
    if bytes.len() < HEADER_SIZE {
        return Err(HarpError::format(
            path,
            bytes.len() as u64,
            format!("truncated header: {} of {HEADER_SIZE} bytes", bytes.len()),
        ));
    }
    let sizeof_hdr_le = i32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes"));
    let sizeof_hdr_be = i32::from_be_bytes(bytes[0..4].try_into().expect("4 bytes"));
    if sizeof_hdr_le != HEADER_SIZE as i32 {
        if sizeof_hdr_be == HEADER_SIZE as i32 {
            return Err(HarpError::UnsupportedEncoding {
                path: path.to_path_buf(),
                message: "big-endian NIfTI files are not supported".into(),
            });
        }
        return Err(HarpError::format(
            path,
            0,
            format!("sizeof_hdr is {sizeof_hdr_le}, expected {HEADER_SIZE}"),
        ));
    }
    let magic = &bytes[OFF_MAGIC..OFF_MAGIC + 4];
    if magic == MAGIC_PAIR {
        return Err(HarpError::UnsupportedEncoding {
            path: path.to_path_buf(),
            message: "detached header/image pairs (magic \"ni1\") are not supported".into(),
        });
    }
    if magic != MAGIC_SINGLE {
        return Err(HarpError::format(
            path,
            OFF_MAGIC as u64,
            format!("bad magic {magic:?}"),
        ));
    }

    let ndim = le_i16(bytes, OFF_DIM);
    if !(1..=4).contains(&ndim) {
        return Err(HarpError::format(
            path,
            OFF_DIM as u64,
            format!("dim[0] = {ndim}; only 1 to 4 dimensions are supported"),
        ));
    }
    let mut dims = Vec::with_capacity(ndim as usize);
    for k in 1..=ndim as usize {
        let off = OFF_DIM + 2 * k;
        let d = le_i16(bytes, off);
        if d < 1 {
            return Err(HarpError::format(
                path,
                off as u64,
                format!("dim[{k}] = {d} is not positive"),
            ));
        }
        dims.push(d as usize);
    }

    let code = le_i16(bytes, OFF_DATATYPE);
    let datatype = Datatype::from_code(code).ok_or_else(|| {
        HarpError::format(
            path,
            OFF_DATATYPE as u64,
            format!("datatype {code} is not float32 (16) or float64 (64)"),
        )
    })?;
    let bitpix = le_i16(bytes, OFF_BITPIX);
    if bitpix as usize != 8 * datatype.bytes() {
        return Err(HarpError::format(
            path,
            OFF_BITPIX as u64,
            format!("bitpix {bitpix} disagrees with datatype {code}"),
        ));
    }

    let mut voxel_size = [1.0; 3];
    for (k, v) in voxel_size.iter_mut().enumerate() {
        let p = le_f32(bytes, OFF_PIXDIM + 4 * (k + 1)) as f64;
        if p.is_finite() && p > 0.0 {
            *v = p;
        }
    }

    let vox_offset = le_f32(bytes, OFF_VOX_OFFSET);
    if !(vox_offset >= DATA_OFFSET as f32) || vox_offset.fract() != 0.0 {
        return Err(HarpError::format(
            path,
            OFF_VOX_OFFSET as u64,
            format!("vox_offset {vox_offset} must be an integer >= {DATA_OFFSET}"),
        ));
    }
    let vox_offset = vox_offset as usize;
    let slope = le_f32(bytes, OFF_SCL_SLOPE) as f64;
    let inter = le_f32(bytes, OFF_SCL_INTER) as f64;

    let n: usize = dims.iter().product();
    let need = vox_offset + n * datatype.bytes();
    if bytes.len() < need {
        return Err(HarpError::format(
            path,
            bytes.len() as u64,
            format!(
                "truncated data: file has {} bytes, payload needs {need}",
                bytes.len()
            ),
        ));
    }
    let payload = &bytes[vox_offset..need];
    let mut data: Vec<f64> = match datatype {
        Datatype::Float32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Datatype::Float64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    let scaled = slope != 0.0 && slope.is_finite() && (slope != 1.0 || inter != 0.0);
    if scaled {
        let inter = if inter.is_finite() { inter } else { 0.0 };
        data.iter_mut().for_each(|v| *v = *v * slope + inter);
    }
    Ok(NiftiVolume {
        header: VolumeHeader {
            dims,
            voxel_size,
            datatype,
            scl_slope: if scaled { slope } else { 1.0 },
            scl_inter: if scaled { inter } else { 0.0 },
            vox_offset,
        },
        data,
    })
}

/// Header bytes for `header`, with identity scaling and a diagonal sform.
pub fn encode_header(header: &VolumeHeader) -> Result<Vec<u8>> {
    if header.dims.is_empty() || header.dims.len() > 4 {
        return Err(HarpError::invalid(format!(
            "volumes have 1 to 4 dimensions, got {}",
            header.dims.len()
        )));
    }
    let mut h = vec![0u8; DATA_OFFSET];
    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    let put_i16 =
        |h: &mut [u8], off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    put_i16(&mut h, OFF_DIM, header.dims.len() as i16);
    for k in 0..7 {
        let d = header.dims.get(k).copied().unwrap_or(1);
        let d = i16::try_from(d)
            .map_err(|_| HarpError::invalid(format!("dimension {d} exceeds the NIfTI-1 limit")))?;
        put_i16(&mut h, OFF_DIM + 2 * (k + 1), d);
    }
    put_i16(&mut h, OFF_DATATYPE, header.datatype.code());
    put_i16(&mut h, OFF_BITPIX, (8 * header.datatype.bytes()) as i16);
    put_i16(&mut h, OFF_SFORM_CODE, 1);
    let put_f32 =
        |h: &mut [u8], off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());
    put_f32(&mut h, OFF_PIXDIM, 1.0);
    for k in 0..3 {
        put_f32(
            &mut h,
            OFF_PIXDIM + 4 * (k + 1),
            header.voxel_size[k] as f32,
        );
    }
    for k in 3..7 {
        put_f32(&mut h, OFF_PIXDIM + 4 * (k + 1), 1.0);
    }
    put_f32(&mut h, OFF_VOX_OFFSET, DATA_OFFSET as f32);
    put_f32(&mut h, OFF_SCL_SLOPE, 1.0);
    put_f32(&mut h, OFF_SCL_INTER, 0.0);
    h[OFF_XYZT_UNITS] = UNITS_MM_SEC;
    let descrip = b"harp";
    h[OFF_DESCRIP..OFF_DESCRIP + descrip.len()].copy_from_slice(descrip);
    for r in 0..3 {
        put_f32(
            &mut h,
            OFF_SROW + 16 * r + 4 * r,
            header.voxel_size[r] as f32,
        );
    }
    h[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(MAGIC_SINGLE);
    Ok(h)
}

/// Serialise a volume. Float32 payloads are rounded from `data`.
pub fn encode_volume(header: &VolumeHeader, data: &[f64]) -> Result<Vec<u8>> {
    if data.len() != header.n_elements() {
        return Err(HarpError::invalid(format!(
            "volume of shape {:?} needs {} values, got {}",
            header.dims,
            header.n_elements(),
            data.len()
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(HarpError::invalid(
            "refusing to write non-finite voxel values",
        ));
    }
    let mut bytes = encode_header(header)?;
    bytes.reserve(data.len() * header.datatype.bytes());
    match header.datatype {
        Datatype::Float32 => data
            .iter()
            .for_each(|&v| bytes.extend((v as f32).to_le_bytes())),
        Datatype::Float64 => data.iter().for_each(|&v| bytes.extend(v.to_le_bytes())),
    }
    Ok(bytes)
}

pub fn write_volume(path: impl AsRef<Path>, header: &VolumeHeader, data: &[f64]) -> Result<()> {
    let bytes = encode_volume(header, data)?;
    atomic_write(path.as_ref(), &bytes)
}
