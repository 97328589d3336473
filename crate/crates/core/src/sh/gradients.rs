use log::warn;

use crate::error::{HarpError, Result};

/// Entries with a b-value below this (s/mm²) are treated as non-diffusion-weighted.
pub const B0_THRESHOLD: f64 = 50.0;
/// Entries whose b-values differ by less than this belong to the same shell.
pub const SHELL_TOLERANCE: f64 = 100.0;

/// Off-unit amount above which a direction is renormalized with a warning.
const RENORM_WARN: f64 = 1e-3;

/// Per-volume diffusion encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTable {
    directions: Vec<[f64; 3]>,
    bvalues: Vec<f64>,
}

impl GradientTable {
    /// Validates lengths and normalizes diffusion-weighted directions.
    ///
    /// b0 entries may carry any direction (usually zero); they are never
    /// used as sampling directions.
    pub fn new(directions: Vec<[f64; 3]>, bvalues: Vec<f64>) -> Result<Self> {
        if directions.len() != bvalues.len() {
            return Err(HarpError::invalid(format!(
                "gradient table has {} directions but {} b-values",
                directions.len(),
                bvalues.len()
            )));
        }
        let mut directions = directions;
        for (i, (d, &b)) in directions.iter_mut().zip(&bvalues).enumerate() {
            if !b.is_finite() || b < 0.0 {
                return Err(HarpError::invalid(format!(
                    "b-value {b} at entry {i} is invalid"
                )));
            }
            if b < B0_THRESHOLD {
                continue;
            }
            let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(HarpError::invalid(format!(
                    "invalid gradient: entry {i} has b = {b} but a zero-length direction"
                )));
            }
            if (norm - 1.0).abs() > RENORM_WARN {
                warn!("gradient entry {i} has norm {norm:.6}; renormalizing");
            }
            for c in d.iter_mut() {
                *c /= norm;
            }
        }
        Ok(Self {
            directions,
            bvalues,
        })
    }

    pub fn len(&self) -> usize {
        self.bvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bvalues.is_empty()
    }

    pub fn directions(&self) -> &[[f64; 3]] {
        &self.directions
    }

    pub fn bvalues(&self) -> &[f64] {
        &self.bvalues
    }

    pub fn is_b0(&self, i: usize) -> bool {
        self.bvalues[i] < B0_THRESHOLD
    }

    pub fn b0_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_b0(i)).collect()
    }

    /// Indices of diffusion-weighted entries.
    pub fn dw_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_b0(i)).collect()
    }

    /// Representative b-value of each shell, ascending.
    pub fn shells(&self) -> Vec<f64> {
        let mut bs: Vec<f64> = self.dw_indices().iter().map(|&i| self.bvalues[i]).collect();
        bs.sort_by(f64::total_cmp);
        let mut shells: Vec<Vec<f64>> = Vec::new();
        for b in bs {
            match shells.last_mut() {
                Some(s) if b - s[0] < SHELL_TOLERANCE => s.push(b),
                _ => shells.push(vec![b]),
            }
        }
        shells
            .iter()
            .map(|s| s.iter().sum::<f64>() / s.len() as f64)
            .collect()
    }

    /// Diffusion-weighted entries of one shell. With `None` the table must be
    /// single-shell.
    pub fn shell_indices(&self, shell: Option<f64>) -> Result<Vec<usize>> {
        let shells = self.shells();
        let target = match shell {
            Some(b) => b,
            None => match shells.as_slice() {
                [] => {
                    return Err(HarpError::invalid(
                        "gradient table has no diffusion-weighted entries",
                    ))
                }
                [b] => *b,
                _ => {
                    return Err(HarpError::invalid(format!(
                        "gradient table has {} shells {:?}; select one b-value",
                        shells.len(),
                        shells
                    )))
                }
            },
        };
        let idx: Vec<usize> = self
            .dw_indices()
            .into_iter()
            .filter(|&i| (self.bvalues[i] - target).abs() < SHELL_TOLERANCE)
            .collect();
        if idx.is_empty() {
            return Err(HarpError::invalid(format!(
                "no entries on shell b = {target}"
            )));
        }
        Ok(idx)
    }

    /// Mean b-value of the entries at `indices`.
    pub fn mean_bvalue(&self, indices: &[usize]) -> f64 {
        indices.iter().map(|&i| self.bvalues[i]).sum::<f64>() / indices.len() as f64
    }
}
