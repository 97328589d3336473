use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::atomic_write;
use crate::error::{HarpError, Result};
use crate::harp::{Architecture, Dense, MlpParams, TrainConfig};
use crate::sh::LMAX;

pub const MODEL_FORMAT: &str = "harp-model";
pub const MODEL_VERSION: u32 = 1;

/// One dense layer, weights flattened row-major (`rows` outputs by `cols` inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// On-disk model: parameters plus the training configuration that made them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub lmax: usize,
    pub architecture: Architecture,
    pub scale_clamp: Option<[f64; 2]>,
    pub layers: Vec<LayerFile>,
    pub train_config: Option<TrainConfig>,
    pub loss_log: Vec<(usize, f64)>,
}

impl ModelFile {
    pub fn from_params(
        p: &MlpParams,
        cfg: Option<&TrainConfig>,
        loss_log: &[(usize, f64)],
    ) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            lmax: LMAX,
            architecture: p.arch.clone(),
            scale_clamp: p.scale_clamp,
            layers: p
                .layers
                .iter()
                .map(|l| LayerFile {
                    rows: l.weights.nrows(),
                    cols: l.weights.ncols(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
            train_config: cfg.cloned(),
            loss_log: loss_log.to_vec(),
        }
    }

    pub fn to_params(&self) -> Result<MlpParams> {
        if self.lmax != LMAX {
            return Err(HarpError::invalid(format!(
                "model lmax {} is unsupported; only {LMAX} is",
                self.lmax
            )));
        }
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let weights = Array2::from_shape_vec((l.rows, l.cols), l.weights.clone())
                    .map_err(|e| HarpError::invalid(format!("layer weights: {e}")))?;
                Ok(Dense {
                    weights,
                    bias: Array1::from(l.bias.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let p = MlpParams {
            arch: self.architecture.clone(),
            layers,
            scale_clamp: self.scale_clamp,
        };
        p.validate()?;
        Ok(p)
    }
}

pub fn write_model(
    path: impl AsRef<Path>,
    p: &MlpParams,
    cfg: Option<&TrainConfig>,
    loss_log: &[(usize, f64)],
) -> Result<()> {
    let path = path.as_ref();
    let file = ModelFile::from_params(p, cfg, loss_log);
    let bytes = serde_json::to_vec(&file).map_err(|source| HarpError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    atomic_write(path, &bytes)
}

/// Unknown formats or versions are format errors; structural problems in
/// the parameters are reported as format errors too.
pub fn read_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HarpError::io(path, e))?;
    let header: serde_json::Value =
        serde_json::from_str(&text).map_err(|source| HarpError::Json {
            path: path.to_path_buf(),
            source,
        })?;
    let format = header.get("format").and_then(|v| v.as_str());
    if format != Some(MODEL_FORMAT) {
        return Err(HarpError::format(
            path,
            0,
            format!("not a {MODEL_FORMAT} file"),
        ));
    }
    let version = header.get("version").and_then(|v| v.as_u64());
    if version != Some(MODEL_VERSION as u64) {
        return Err(HarpError::format(
            path,
            0,
            format!("unsupported model version {version:?}; expected {MODEL_VERSION}"),
        ));
    }
    let file: ModelFile = serde_json::from_value(header).map_err(|source| HarpError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    file.to_params()
        .map_err(|e| HarpError::format(path, 0, format!("inconsistent parameters: {e}")))?;
    Ok(file)
}
