//! JSON checkpoints.
//!
//! ```json
//! {"format": "psiflat-checkpoint", "version": 1, "dims": [2, 1, 2],
//!  "weights": [[1.0, 2.0], [1.0, 3.0]], "seed": 0, "meta": {}}
//! ```
//!
//! Weight layers are row-major. Floats are written in shortest round-trip
//! form and parsed with correct rounding, so weights survive bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::net::{InitConfig, Mlp};
use crate::train::{DatasetSpec, TrainConfig, TrainRecord};

pub const FORMAT_TAG: &str = "psiflat-checkpoint";
pub const FORMAT_VERSION: u64 = 1;

/// Free-form provenance stored next to the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<TrainRecord>,
    /// Anything else a producer wants to keep.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Mlp,
    pub seed: u64,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn new(net: Mlp, seed: u64) -> Self {
        Self {
            net,
            seed,
            meta: CheckpointMeta::default(),
        }
    }

    pub fn to_value(&self) -> Result<Value> {
        if let Some(i) = self.net.flatten().iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite(format!("weight {i} cannot be serialized")));
        }
        Ok(json!({
            "format": FORMAT_TAG,
            "version": FORMAT_VERSION,
            "dims": self.net.dims(),
            "weights": self.net.layers(),
            "seed": self.seed,
            "meta": serde_json::to_value(&self.meta)?,
        }))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_value()?)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        Self::from_value(&v)
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::schema("$", "expected an object"))?;
        let field = |name: &str| {
            obj.get(name)
                .ok_or_else(|| Error::schema(name, "missing field"))
        };
        if let Some(tag) = obj.get("format") {
            if tag.as_str() != Some(FORMAT_TAG) {
                return Err(Error::schema("format", format!("expected \"{FORMAT_TAG}\"")));
            }
        }
        let version = field("version")?
            .as_u64()
            .ok_or_else(|| Error::schema("version", "expected an unsigned integer"))?;
        if version != FORMAT_VERSION {
            return Err(Error::IncompatibleVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let dims: Vec<usize> = field("dims")?
            .as_array()
            .ok_or_else(|| Error::schema("dims", "expected an array"))?
            .iter()
            .enumerate()
            .map(|(i, d)| {
                d.as_u64()
                    .map(|d| d as usize)
                    .ok_or_else(|| Error::schema(format!("dims[{i}]"), "expected an unsigned integer"))
            })
            .collect::<Result<_>>()?;
        crate::net::validate_dims(&dims).map_err(|e| Error::schema("dims", e.to_string()))?;
        let layers = field("weights")?
            .as_array()
            .ok_or_else(|| Error::schema("weights", "expected an array of layers"))?;
        if layers.len() != dims.len() - 1 {
            return Err(Error::schema(
                "weights",
                format!("expected {} layers, found {}", dims.len() - 1, layers.len()),
            ));
        }
        let mut weights = Vec::with_capacity(layers.len());
        for (l, layer) in layers.iter().enumerate() {
            let arr = layer
                .as_array()
                .ok_or_else(|| Error::schema(format!("weights[{l}]"), "expected an array"))?;
            let expected = dims[l] * dims[l + 1];
            if arr.len() != expected {
                return Err(Error::schema(
                    format!("weights[{l}]"),
                    format!("expected {expected} entries, found {}", arr.len()),
                ));
            }
            let row = arr
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    x.as_f64()
                        .ok_or_else(|| Error::schema(format!("weights[{l}][{i}]"), "expected a number"))
                })
                .collect::<Result<Vec<f64>>>()?;
            weights.push(row);
        }
        let seed = field("seed")?
            .as_u64()
            .ok_or_else(|| Error::schema("seed", "expected an unsigned integer"))?;
        let meta = match obj.get("meta") {
            None | Some(Value::Null) => CheckpointMeta::default(),
            Some(m) => serde_json::from_value(m.clone())
                .map_err(|e| Error::schema("meta", e.to_string()))?,
        };
        Ok(Self {
            net: Mlp::new(dims, weights)?,
            seed,
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
