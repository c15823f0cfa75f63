//! Portable JSON checkpoints.
//!
//! ```json
//! { "format": "tda-densenet", "version": 1, "dropout": 0.0,
//!   "layers": [ { "inputs": 25, "outputs": 64, "activation": "elu",
//!                 "weights": [/* row-major, outputs x inputs */],
//!                 "bias": [/* outputs */] } ] }
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::net::{Activation, Dense, DenseNet};
use crate::error::{Result, TdaError};

pub const FORMAT: &str = "tda-densenet";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerRecord {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetRecord {
    pub format: String,
    pub version: u32,
    pub dropout: f64,
    pub layers: Vec<LayerRecord>,
}

impl From<&DenseNet> for NetRecord {
    fn from(net: &DenseNet) -> Self {
        NetRecord {
            format: FORMAT.into(),
            version: VERSION,
            dropout: net.dropout(),
            layers: net
                .layers()
                .iter()
                .map(|l| LayerRecord {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    activation: l.activation,
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<NetRecord> for DenseNet {
    type Error = TdaError;

    fn try_from(rec: NetRecord) -> Result<Self> {
        if rec.format != FORMAT {
            return Err(TdaError::Serde(format!("unknown checkpoint format `{}`", rec.format)));
        }
        if rec.version != VERSION {
            return Err(TdaError::Serde(format!(
                "unsupported checkpoint version {}",
                rec.version
            )));
        }
        let layers = rec
            .layers
            .into_iter()
            .map(|l| {
                let w = Array2::from_shape_vec((l.outputs, l.inputs), l.weights)
                    .map_err(|e| TdaError::Serde(e.to_string()))?;
                Dense::new(w, Array1::from(l.bias), l.activation)
            })
            .collect::<Result<Vec<_>>>()?;
        DenseNet::new(layers, rec.dropout)
    }
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string(value).map_err(|e| TdaError::Serde(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| TdaError::io(path, e))
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| TdaError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| TdaError::Serde(format!("{}: {e}", path.display())))
}

pub fn save(net: &DenseNet, path: &Path) -> Result<()> {
    save_json(&NetRecord::from(net), path)
}

pub fn load(path: &Path) -> Result<DenseNet> {
    DenseNet::try_from(load_json::<NetRecord>(path)?)
}
