use serde::{Deserialize, Serialize};

use crate::error::{HarpError, Result};
use crate::geometry::{dot, normalize, Vec3};
use crate::sh::GradientTable;

pub const BVALUE_PRESETS: [f64; 4] = [1000.0, 1500.0, 2000.0, 3000.0];
pub const DIRECTION_PRESETS: [usize; 3] = [30, 60, 64];

const REPULSION_ITERATIONS: usize = 300;

/// Single-shell acquisition: b-value, diffusion directions and b0 count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub bvalue: f64,
    pub directions: usize,
    #[serde(default = "default_n_b0")]
    pub n_b0: usize,
}

fn default_n_b0() -> usize {
    6
}

impl Protocol {
    pub fn new(bvalue: f64, directions: usize) -> Self {
        Self {
            bvalue,
            directions,
            n_b0: default_n_b0(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !BVALUE_PRESETS.contains(&self.bvalue) {
            return Err(HarpError::invalid(format!(
                "b-value {} is not a preset {:?}",
                self.bvalue, BVALUE_PRESETS
            )));
        }
        if !DIRECTION_PRESETS.contains(&self.directions) {
            return Err(HarpError::invalid(format!(
                "direction count {} is not a preset {:?}",
                self.directions, DIRECTION_PRESETS
            )));
        }
        if self.n_b0 == 0 {
            return Err(HarpError::invalid("protocol needs at least one b0 volume"));
        }
        Ok(())
    }

    /// b0 volumes first, then the diffusion-weighted directions.
    pub fn gradient_table(&self) -> Result<GradientTable> {
        self.validate()?;
        let mut dirs = vec![[0.0; 3]; self.n_b0];
        let mut bvals = vec![0.0; self.n_b0];
        dirs.extend(hemisphere_directions(self.directions));
        bvals.extend(std::iter::repeat_n(self.bvalue, self.directions));
        GradientTable::new(dirs, bvals)
    }
}

/// Deterministic, well-spread axes on the upper hemisphere: a Fibonacci
/// spiral relaxed by antipodally symmetric electrostatic repulsion.
pub fn hemisphere_directions(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut pts: Vec<Vec3> = (0..n)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect();
    let mut step = 0.05;
    for _ in 0..REPULSION_ITERATIONS {
        let mut forces = vec![[0.0; 3]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for sign in [1.0, -1.0] {
                    let d = [
                        pts[i][0] - sign * pts[j][0],
                        pts[i][1] - sign * pts[j][1],
                        pts[i][2] - sign * pts[j][2],
                    ];
                    let r2 = dot(&d, &d).max(1e-12);
                    let inv = 1.0 / (r2 * r2.sqrt());
                    for c in 0..3 {
                        forces[i][c] += d[c] * inv;
                    }
                }
            }
        }
        let max_f = forces.iter().map(|f| dot(f, f).sqrt()).fold(0.0, f64::max);
        for (p, f) in pts.iter_mut().zip(&forces) {
            let moved = [
                p[0] + step * f[0] / max_f,
                p[1] + step * f[1] / max_f,
                p[2] + step * f[2] / max_f,
            ];
            *p = normalize(&moved);
        }
        step *= 0.99;
    }
    pts.into_iter()
        .map(|p| if p[2] < 0.0 { [-p[0], -p[1], -p[2]] } else { p })
        .collect()
}
