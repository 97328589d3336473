//! Variability and agreement statistics: pooled standard error, percentage
//! difference, weighted DICE and angular error.

use crate::error::{HarpError, Result};
use crate::geometry::{axis_angle_deg, Vec3};
use crate::volume::{Mask, ScalarMap, VectorField};

/// `N` subjects by `K` repeated measurements, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementTable {
    values: Vec<f64>,
    n_subjects: usize,
    n_measurements: usize,
}

impl MeasurementTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_subjects = rows.len();
        let n_measurements = rows.first().map_or(0, Vec::len);
        if n_subjects == 0 {
            return Err(HarpError::invalid("measurement table has no subjects"));
        }
        if rows.iter().any(|r| r.len() != n_measurements) {
            return Err(HarpError::invalid(
                "measurement table rows have unequal lengths",
            ));
        }
        if n_measurements < 2 {
            return Err(HarpError::invalid(format!(
                "standard error needs K >= 2 measurements per subject (got {n_measurements})"
            )));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HarpError::invalid("measurements must be finite"));
        }
        Ok(Self {
            values,
            n_subjects,
            n_measurements,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_measurements(&self) -> usize {
        self.n_measurements
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_measurements..(i + 1) * self.n_measurements]
    }
}

/// `sigma_e = sqrt( sum_i sum_j (y_ij - mean_i)^2 / (N (K - 1)) )`.
pub fn standard_error(t: &MeasurementTable) -> f64 {
    let k = t.n_measurements();
    let ss: f64 = (0..t.n_subjects())
        .map(|i| {
            let row = t.row(i);
            let mean = row.iter().sum::<f64>() / k as f64;
            row.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>()
        })
        .sum();
    (ss / (t.n_subjects() * (k - 1)) as f64).sqrt()
}

/// Signed percentage `100 (inter - scan) / scan`.
pub fn percentage_difference(sigma_inter: f64, sigma_scan: f64) -> Result<f64> {
    if sigma_scan == 0.0 {
        return Err(HarpError::UndefinedBaseline);
    }
    Ok(100.0 * (sigma_inter - sigma_scan) / sigma_scan)
}

/// Non-negative voxel weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMap(pub ScalarMap);

impl WeightedMap {
    pub fn new(map: ScalarMap) -> Result<Self> {
        if map.values.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(HarpError::invalid(
                "weights must be finite and non-negative",
            ));
        }
        Ok(Self(map))
    }

    /// Weights equal to `map` where it reaches `threshold` (and the mask
    /// allows), zero elsewhere.
    pub fn thresholded(map: &ScalarMap, threshold: f64, mask: &Mask) -> Result<Self> {
        map.grid.ensure_same(&mask.grid, "thresholded weight map")?;
        let values = map
            .values
            .iter()
            .zip(&mask.values)
            .map(|(&v, &m)| {
                if m && v >= threshold && v > 0.0 {
                    v
                } else {
                    0.0
                }
            })
            .collect();
        Self::new(ScalarMap::new(map.grid, values)?)
    }
}

/// Weighted Dice overlap. Support means strictly positive weight.
pub fn wdice(a: &WeightedMap, b: &WeightedMap) -> Result<f64> {
    a.0.grid.ensure_same(&b.0.grid, "wdice")?;
    let (mut shared, mut total) = (0.0, 0.0);
    for (&wa, &wb) in a.0.values.iter().zip(&b.0.values) {
        total += wa + wb;
        if wa > 0.0 && wb > 0.0 {
            shared += wa + wb;
        }
    }
    if total == 0.0 {
        return Err(HarpError::UndefinedOverlap);
    }
    Ok(shared / total)
}

/// Voxel-wise axis angle in degrees and its mask mean.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularError {
    pub mean_deg: f64,
    pub map: ScalarMap,
}

pub fn angular_error(
    dirs_a: &VectorField,
    dirs_b: &VectorField,
    mask: &Mask,
) -> Result<AngularError> {
    dirs_a.grid.ensure_same(&dirs_b.grid, "angular_error")?;
    dirs_a.grid.ensure_same(&mask.grid, "angular_error")?;
    let n = mask.count();
    if n == 0 {
        return Err(HarpError::invalid("angular error needs a non-empty mask"));
    }
    let mut map = ScalarMap::zeros(dirs_a.grid);
    let mut sum = 0.0;
    for (i, (a, b)) in dirs_a.values.iter().zip(&dirs_b.values).enumerate() {
        if mask.values[i] {
            let theta = axis_angle(a, b);
            map.values[i] = theta;
            sum += theta;
        }
    }
    Ok(AngularError {
        mean_deg: sum / n as f64,
        map,
    })
}

/// Angle between two axes, degrees, in `[0, 90]`.
pub fn axis_angle(a: &Vec3, b: &Vec3) -> f64 {
    axis_angle_deg(a, b)
}
