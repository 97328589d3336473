use std::path::Path;

use super::atomic_write;
use crate::error::{HarpError, Result};
use crate::sh::GradientTable;

/// Numbers of one whitespace-separated text row, with the byte offset of
/// each token for error reporting.
fn parse_row(path: &Path, line: &str, line_offset: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut pos = 0;
    for tok in line.split_whitespace() {
        let at = line[pos..].find(tok).map_or(pos, |i| pos + i);
        pos = at + tok.len();
        let v: f64 = tok.parse().map_err(|_| {
            HarpError::format(
                path,
                (line_offset + at) as u64,
                format!("'{tok}' is not a number"),
            )
        })?;
        out.push(v);
    }
    Ok(out)
}

fn rows(path: &Path, text: &str) -> Result<Vec<Vec<f64>>> {
    let mut offset = 0;
    let mut out = Vec::new();
    for line in text.split_inclusive('\n') {
        if !line.trim().is_empty() {
            out.push(parse_row(path, line, offset)?);
        }
        offset += line.len();
    }
    Ok(out)
}

/// Parse bval/bvec text; `n_volumes` is the DWI frame count the table must match.
pub fn parse_gradients(
    bval_path: &Path,
    bval_text: &str,
    bvec_path: &Path,
    bvec_text: &str,
    n_volumes: usize,
) -> Result<GradientTable> {
    let bvals: Vec<f64> = rows(bval_path, bval_text)?.into_iter().flatten().collect();
    let bvec_rows = rows(bvec_path, bvec_text)?;
    if bvec_rows.len() != 3 {
        return Err(HarpError::format(
            bvec_path,
            0,
            format!(
                "bvec file must have 3 rows (x, y, z), found {}",
                bvec_rows.len()
            ),
        ));
    }
    let n_vec = bvec_rows[0].len();
    if bvec_rows.iter().any(|r| r.len() != n_vec) {
        return Err(HarpError::format(
            bvec_path,
            0,
            format!(
                "bvec rows have unequal lengths {}, {}, {}",
                bvec_rows[0].len(),
                bvec_rows[1].len(),
                bvec_rows[2].len()
            ),
        ));
    }
    if bvals.len() != n_vec {
        return Err(HarpError::format(
            bvec_path,
            0,
            format!("{} b-values but {} bvec columns", bvals.len(), n_vec),
        ));
    }
    if bvals.len() != n_volumes {
        return Err(HarpError::format(
            bval_path,
            0,
            format!(
                "{} gradient entries but {} DWI volumes",
                bvals.len(),
                n_volumes
            ),
        ));
    }
    let dirs = (0..n_vec)
        .map(|j| [bvec_rows[0][j], bvec_rows[1][j], bvec_rows[2][j]])
        .collect();
    GradientTable::new(dirs, bvals)
}

pub fn read_gradients(
    bval_path: impl AsRef<Path>,
    bvec_path: impl AsRef<Path>,
    n_volumes: usize,
) -> Result<GradientTable> {
    let (bp, vp) = (bval_path.as_ref(), bvec_path.as_ref());
    let bval = std::fs::read_to_string(bp).map_err(|e| HarpError::io(bp, e))?;
    let bvec = std::fs::read_to_string(vp).map_err(|e| HarpError::io(vp, e))?;
    parse_gradients(bp, &bval, vp, &bvec, n_volumes)
}

/// Table whose length is taken from the bval file itself.
pub fn read_gradient_table(
    bval_path: impl AsRef<Path>,
    bvec_path: impl AsRef<Path>,
) -> Result<GradientTable> {
    let (bp, vp) = (bval_path.as_ref(), bvec_path.as_ref());
    let bval = std::fs::read_to_string(bp).map_err(|e| HarpError::io(bp, e))?;
    let bvec = std::fs::read_to_string(vp).map_err(|e| HarpError::io(vp, e))?;
    let n = bval.split_whitespace().count();
    parse_gradients(bp, &bval, vp, &bvec, n)
}

fn join(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_gradients(
    bval_path: impl AsRef<Path>,
    bvec_path: impl AsRef<Path>,
    gtab: &GradientTable,
) -> Result<()> {
    let bval = format!("{}\n", join(gtab.bvalues().iter().copied()));
    let mut bvec = String::new();
    for c in 0..3 {
        bvec.push_str(&join(gtab.directions().iter().map(|d| d[c])));
        bvec.push('\n');
    }
    atomic_write(bval_path.as_ref(), bval.as_bytes())?;
    atomic_write(bvec_path.as_ref(), bvec.as_bytes())
}
