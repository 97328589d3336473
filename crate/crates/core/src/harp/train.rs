use log::info;
use ndarray::{Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::network::{Architecture, MlpParams};
use crate::error::{HarpError, Result};
use crate::sh::{block_of, ShVolume, N_COEFFS, N_ORDERS};
use crate::volume::Mask;

/// Loss is recorded every this many iterations.
pub const LOG_INTERVAL: usize = 100;

const APPLY_CHUNK: usize = 2048;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Voxels whose source c0 falls below this percentile of the reference
    /// c0 distribution are not used for training.
    pub percentile_threshold: f64,
    pub seed: u64,
    pub scale_clamp: Option<[f64; 2]>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-6,
            iterations: 40_000,
            batch_size: 1024,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            percentile_threshold: 30.0,
            seed: 0,
            scale_clamp: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(HarpError::invalid("iterations must be positive"));
        }
        if self.batch_size == 0 {
            return Err(HarpError::invalid("batch_size must be at least 1"));
        }
        if !(0.0..100.0).contains(&self.percentile_threshold) {
            return Err(HarpError::invalid(format!(
                "percentile_threshold must lie in [0, 100) (got {})",
                self.percentile_threshold
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(HarpError::invalid(
                "learning_rate must be positive and finite",
            ));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon > 0.0)
        {
            return Err(HarpError::invalid(
                "Adam requires 0 <= beta < 1 and epsilon > 0",
            ));
        }
        if let Some([lo, hi]) = self.scale_clamp {
            if !(lo <= hi) {
                return Err(HarpError::invalid(format!(
                    "scale clamp [{lo}, {hi}] is empty"
                )));
            }
        }
        Ok(())
    }
}

/// Paired source/target coefficient vectors, one row per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub source: Array2<f64>,
    pub target: Array2<f64>,
    /// Voxel index each pair came from.
    pub voxels: Vec<usize>,
}

impl TrainingSet {
    pub fn new(source: Array2<f64>, target: Array2<f64>, voxels: Vec<usize>) -> Result<Self> {
        if source.dim() != target.dim() || source.nrows() != voxels.len() {
            return Err(HarpError::invalid(format!(
                "training pairs disagree: source {:?}, target {:?}, {} voxel ids",
                source.dim(),
                target.dim(),
                voxels.len()
            )));
        }
        if source.ncols() != N_COEFFS {
            return Err(HarpError::invalid(format!(
                "training rows must have {N_COEFFS} coefficients, got {}",
                source.ncols()
            )));
        }
        if source.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(HarpError::invalid("training pairs must be finite"));
        }
        Ok(Self {
            source,
            target,
            voxels,
        })
    }

    pub fn len(&self) -> usize {
        self.source.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> TrainingSet {
        TrainingSet {
            source: self.source.select(Axis(0), idx),
            target: self.target.select(Axis(0), idx),
            voxels: idx.iter().map(|&i| self.voxels[i]).collect(),
        }
    }

    /// Deterministic split into (training, held-out): every pair is held out
    /// independently with probability `fraction`.
    pub fn split(&self, fraction: f64, seed: u64) -> (TrainingSet, TrainingSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x5eed);
        let (mut keep, mut hold) = (Vec::new(), Vec::new());
        for i in 0..self.len() {
            if rng.random::<f64>() < fraction {
                hold.push(i);
            } else {
                keep.push(i);
            }
        }
        (self.subset(&keep), self.subset(&hold))
    }
}

/// Linear-interpolation percentile (`0..=100`) of `values`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] + (v[hi] - v[lo]) * frac
}

/// Pair masked voxels whose source c0 reaches the `percentile` of
/// `reference_c0`.
pub fn select_training_voxels(
    src: &ShVolume,
    tgt: &ShVolume,
    mask: &Mask,
    reference_c0: &[f64],
    percentile_threshold: f64,
) -> Result<TrainingSet> {
    src.grid.ensure_same(&tgt.grid, "training source/target")?;
    src.grid.ensure_same(&mask.grid, "training mask")?;
    src.ensure_full_order()?;
    tgt.ensure_full_order()?;
    if reference_c0.is_empty() {
        return Err(HarpError::invalid("reference c0 distribution is empty"));
    }
    let threshold = percentile(reference_c0, percentile_threshold);
    let voxels: Vec<usize> = mask
        .indices()
        .into_iter()
        .filter(|&v| src.coeffs[[v, 0]] >= threshold)
        .collect();
    if voxels.is_empty() {
        return Err(HarpError::TrainingSetEmpty);
    }
    TrainingSet::new(
        src.coeffs.select(Axis(0), &voxels),
        tgt.coeffs.select(Axis(0), &voxels),
        voxels,
    )
}

/// Masked c0 values of a volume, the default percentile reference.
pub fn masked_c0(sh: &ShVolume, mask: &Mask) -> Vec<f64> {
    mask.indices()
        .into_iter()
        .map(|v| sh.coeffs[[v, 0]])
        .collect()
}

/// Trained parameters plus the `(iteration, loss)` log.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: MlpParams,
    pub loss_log: Vec<(usize, f64)>,
}

/// Train the full-size network.
pub fn train(training: &TrainingSet, cfg: &TrainConfig) -> Result<TrainOutput> {
    train_with(&Architecture::harp(), training, cfg)
}

/// Train an arbitrary architecture with Adam on uniformly resampled batches.
pub fn train_with(
    arch: &Architecture,
    training: &TrainingSet,
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if training.is_empty() {
        return Err(HarpError::TrainingSetEmpty);
    }
    let mut params = MlpParams::init(arch, cfg.seed)?;
    params.scale_clamp = cfg.scale_clamp;
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let n = training.len();
    let mut loss_log = Vec::new();
    let mut last_finite = f64::NAN;
    let mut idx = vec![0usize; cfg.batch_size];
    for it in 0..cfg.iterations {
        idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
        let src = training.source.select(Axis(0), &idx);
        let tgt = training.target.select(Axis(0), &idx);
        let (loss, grads) = params.loss_and_grad(src.view(), tgt.view())?;
        if !loss.is_finite() {
            return Err(HarpError::NonFiniteLoss {
                iteration: it,
                last_finite_loss: last_finite,
            });
        }
        last_finite = loss;
        if it % LOG_INTERVAL == 0 || it + 1 == cfg.iterations {
            info!("iteration {it}: loss {loss:.6e}");
            loss_log.push((it, loss));
        }
        adam_step(&mut state, &mut params, &grads, cfg)?;
    }
    params.validate()?;
    Ok(TrainOutput { params, loss_log })
}

/// Multiply each coefficient by its order's scale.
pub fn harmonize_voxel(c_src: &[f64], s: &[f64; N_ORDERS]) -> Vec<f64> {
    c_src
        .iter()
        .enumerate()
        .map(|(k, &c)| c * s[block_of(k)])
        .collect()
}

/// Harmonize every masked voxel; unmasked voxels are copied.
pub fn apply_volume(p: &MlpParams, sh: &ShVolume, mask: &Mask) -> Result<ShVolume> {
    sh.grid.ensure_same(&mask.grid, "apply_volume")?;
    if sh.n_coeffs() != p.arch.input {
        return Err(HarpError::ModelMismatch {
            model_lmax: crate::sh::LMAX,
            model_coeffs: p.arch.input,
            volume_lmax: sh.lmax,
            volume_coeffs: sh.n_coeffs(),
        });
    }
    let idx = mask.indices();
    let harmonized: Vec<(usize, Vec<f64>)> = idx
        .par_chunks(APPLY_CHUNK)
        .flat_map_iter(|chunk| {
            let x = sh.coeffs.select(Axis(0), chunk);
            let scales = p.predict_scales(x.view());
            let rows: Vec<(usize, Vec<f64>)> = chunk
                .iter()
                .zip(x.rows())
                .zip(scales.rows())
                .map(|((&v, c), s)| {
                    let mut out = c.to_vec();
                    out.iter_mut()
                        .enumerate()
                        .for_each(|(k, o)| *o *= s[block_of(k)]);
                    (v, out)
                })
                .collect();
            rows
        })
        .collect();
    let mut out = sh.clone();
    for (v, row) in harmonized {
        out.coeffs
            .row_mut(v)
            .iter_mut()
            .zip(&row)
            .for_each(|(o, &r)| *o = r);
    }
    if out.coeffs.iter().any(|v| !v.is_finite()) {
        return Err(HarpError::invalid("harmonized coefficients are not finite"));
    }
    Ok(out)
}

/// Median of each predicted scale over the rows of `inputs`.
pub fn median_scales(p: &MlpParams, inputs: &Array2<f64>) -> [f64; N_ORDERS] {
    let scales = p.predict_scales(inputs.view());
    let mut out = [0.0; N_ORDERS];
    Zip::from(&mut out[..])
        .and(scales.columns())
        .for_each(|o, col| {
            *o = percentile(&col.to_vec(), 50.0);
        });
    out
}
