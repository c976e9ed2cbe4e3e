//! Model JSON.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "num_cells": 20, "input_channels": 4, "timesteps": 96,
//!   "tensors": {
//!     "u.i": [[...20], ...20 rows], "w.i": [[...4], ...], "b.i": [...20],
//!     "u.f": ..., "u.g": ..., "u.o": ...,
//!     "fc1.w": [[...20], ...20 rows], "fc1.b": [...20],
//!     "fc2.w": [[...20], [...20]], "fc2.b": [a, b]
//!   },
//!   "metadata": {}
//! }
//! ```
//!
//! Row `n` of `u.q`, `w.q` and entry `n` of `b.q` belong to cell `n`.

use std::collections::BTreeMap;
use std::path::Path;

use fxlstm_core::net::{Dims, Gate, GateParams, ModelParams, Neuron, FC1_NEURONS, FC2_NEURONS};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema_version: u32,
    num_cells: usize,
    input_channels: usize,
    timesteps: usize,
    tensors: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    metadata: serde_json::Map<String, serde_json::Value>,
}

/// A model together with free-form metadata (training history, accuracy).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDoc {
    pub params: ModelParams,
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

fn tensor_names() -> Vec<String> {
    let mut v = Vec::new();
    for fam in ["u", "w", "b"] {
        for g in Gate::ALL {
            v.push(format!("{fam}.{}", g.name()));
        }
    }
    v.extend(["fc1.w", "fc1.b", "fc2.w", "fc2.b"].map(String::from));
    v
}

pub fn to_json(params: &ModelParams, metadata: &serde_json::Map<String, serde_json::Value>) -> serde_json::Value {
    use serde_json::json;
    let mut tensors = BTreeMap::new();
    for g in Gate::ALL {
        let q = g.index();
        let n = g.name();
        tensors.insert(format!("u.{n}"), json!(params.cells.iter().map(|c| &c[q].u).collect::<Vec<_>>()));
        tensors.insert(format!("w.{n}"), json!(params.cells.iter().map(|c| &c[q].w).collect::<Vec<_>>()));
        tensors.insert(format!("b.{n}"), json!(params.cells.iter().map(|c| c[q].b).collect::<Vec<_>>()));
    }
    for (name, layer) in [("fc1", &params.fc1), ("fc2", &params.fc2)] {
        tensors.insert(format!("{name}.w"), json!(layer.iter().map(|n| &n.w).collect::<Vec<_>>()));
        tensors.insert(format!("{name}.b"), json!(layer.iter().map(|n| n.b).collect::<Vec<_>>()));
    }
    let file = ModelFile {
        schema_version: SCHEMA_VERSION,
        num_cells: params.dims.num_cells,
        input_channels: params.dims.input_channels,
        timesteps: params.dims.timesteps,
        tensors,
        metadata: metadata.clone(),
    };
    serde_json::to_value(file).expect("model serializes")
}

fn vector(name: &str, v: &serde_json::Value, len: usize) -> std::result::Result<Vec<f64>, String> {
    let arr = v.as_array().ok_or_else(|| format!("tensor {name}: expected an array"))?;
    if arr.len() != len {
        return Err(format!("tensor {name}: expected {len} values, found {}", arr.len()));
    }
    arr.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = x.as_f64().ok_or_else(|| format!("tensor {name}[{i}]: not a number"))?;
            if f.is_finite() {
                Ok(f)
            } else {
                Err(format!("tensor {name}[{i}]: non-finite value"))
            }
        })
        .collect()
}

fn matrix(name: &str, v: &serde_json::Value, rows: usize, cols: usize) -> std::result::Result<Vec<Vec<f64>>, String> {
    let arr = v.as_array().ok_or_else(|| format!("tensor {name}: expected an array of rows"))?;
    if arr.len() != rows {
        return Err(format!("tensor {name}: expected {rows} rows, found {}", arr.len()));
    }
    arr.iter()
        .enumerate()
        .map(|(r, row)| vector(&format!("{name}[{r}]"), row, cols))
        .collect()
}

pub fn from_json(value: serde_json::Value) -> std::result::Result<ModelDoc, String> {
    let file: ModelFile = serde_json::from_value(value).map_err(|e| e.to_string())?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            file.schema_version
        ));
    }
    let names = tensor_names();
    for name in &names {
        if !file.tensors.contains_key(name) {
            return Err(format!("missing tensor {name}"));
        }
    }
    if let Some(extra) = file.tensors.keys().find(|k| !names.contains(k)) {
        return Err(format!("unknown tensor {extra}"));
    }
    let dims = Dims {
        num_cells: file.num_cells,
        input_channels: file.input_channels,
        timesteps: file.timesteps,
    };
    let (n, d) = (dims.num_cells, dims.input_channels);
    let t = |name: &str| &file.tensors[name];
    let mut per_gate = Vec::new();
    for g in Gate::ALL {
        let q = g.name();
        per_gate.push((
            matrix(&format!("u.{q}"), t(&format!("u.{q}")), n, n)?,
            matrix(&format!("w.{q}"), t(&format!("w.{q}")), n, d)?,
            vector(&format!("b.{q}"), t(&format!("b.{q}")), n)?,
        ));
    }
    let cells = (0..n)
        .map(|cell| {
            core::array::from_fn(|q| GateParams {
                u: per_gate[q].0[cell].clone(),
                w: per_gate[q].1[cell].clone(),
                b: per_gate[q].2[cell],
            })
        })
        .collect();
    let layer = |name: &str, neurons: usize, inputs: usize| -> std::result::Result<Vec<Neuron<f64>>, String> {
        let w = matrix(&format!("{name}.w"), t(&format!("{name}.w")), neurons, inputs)?;
        let b = vector(&format!("{name}.b"), t(&format!("{name}.b")), neurons)?;
        Ok(w.into_iter().zip(b).map(|(w, b)| Neuron { w, b }).collect())
    };
    let params = ModelParams {
        dims,
        cells,
        fc1: layer("fc1", FC1_NEURONS, n)?,
        fc2: layer("fc2", FC2_NEURONS, FC1_NEURONS)?,
    };
    params.validate().map_err(|e| e.to_string())?;
    Ok(ModelDoc {
        params,
        metadata: file.metadata,
    })
}

pub fn load_model(path: &Path) -> Result<ModelDoc> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::schema(path, Some(e.line() as u64), e))?;
    from_json(value).map_err(|msg| Error::schema(path, None, msg))
}

pub fn save_model(params: &ModelParams, metadata: &serde_json::Map<String, serde_json::Value>, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&to_json(params, metadata)).expect("model serializes");
    text.push('\n');
    crate::write_file(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use fxlstm_core::net::gen_fixture_model;

    #[test]
    fn round_trip_is_lossless() {
        let m = gen_fixture_model(42);
        let doc = from_json(to_json(&m, &Default::default())).unwrap();
        assert_eq!(doc.params, m);
        let text = serde_json::to_string(&to_json(&m, &Default::default())).unwrap();
        let again = from_json(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(again.params, m);
    }

    #[test]
    fn short_row_names_the_tensor() {
        let m = gen_fixture_model(1);
        let mut v = to_json(&m, &Default::default());
        v["tensors"]["u.g"][3].as_array_mut().unwrap().pop();
        let err = from_json(v).unwrap_err();
        assert!(err.contains("u.g[3]"), "{err}");
        assert!(err.contains("expected 20 values, found 19"), "{err}");
    }

    #[test]
    fn missing_and_unknown_tensors() {
        let m = gen_fixture_model(1);
        let mut v = to_json(&m, &Default::default());
        v["tensors"].as_object_mut().unwrap().remove("fc2.b");
        assert!(from_json(v).unwrap_err().contains("fc2.b"));
        let mut v = to_json(&m, &Default::default());
        v["tensors"]["x.q"] = serde_json::json!([]);
        assert!(from_json(v).unwrap_err().contains("x.q"));
    }
}
