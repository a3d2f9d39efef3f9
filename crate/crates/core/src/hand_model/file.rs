//! JSON model files.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "name": "...",
//!   "mirror": false,
//!   "shape_dim": 10,
//!   "links": [{ "name", "parent", "rest_offset", "offset_regressor", "radius",
//!               "radius_regressor", "capsule" }, ...],
//!   "contact_table": [{ "name", "group", "finger"?, "pose", "pairs" }, ...],
//!   "fingertips": [thumb, index, middle, ring, little]
//! }
//! ```
//!
//! `offset_regressor` is three rows of `shape_dim` entries. `capsule` is either
//! `{"child": <link>}` or `{"terminal": {"axis", "length", "length_regressor"}}`.
//! Numbers are written in shortest round-trip form, so save/load is exact.

use std::path::Path;

use nalgebra::{DVector, Matrix3xX, Vector3};
use serde::{Deserialize, Serialize};

use super::{serde_vec3, CapsuleSpec, ContactPairTable, FingertipTable, HandModel, LinkDef, ModelError, SkeletonDef};

pub const MODEL_SCHEMA_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkDoc {
    name: String,
    parent: Option<usize>,
    #[serde(with = "serde_vec3")]
    rest_offset: Vector3<f64>,
    offset_regressor: [Vec<f64>; 3],
    radius: f64,
    radius_regressor: Vec<f64>,
    capsule: CapsuleSpec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    schema_version: u64,
    name: String,
    mirror: bool,
    shape_dim: usize,
    links: Vec<LinkDoc>,
    contact_table: ContactPairTable,
    fingertips: FingertipTable,
}

fn link_to_doc(l: &LinkDef) -> LinkDoc {
    let rows = [0, 1, 2].map(|r| l.offset_regressor.row(r).iter().copied().collect());
    LinkDoc {
        name: l.name.clone(),
        parent: l.parent,
        rest_offset: l.rest_offset,
        offset_regressor: rows,
        radius: l.radius,
        radius_regressor: l.radius_regressor.iter().copied().collect(),
        capsule: l.capsule.clone(),
    }
}

fn link_from_doc(d: LinkDoc, shape_dim: usize, index: usize) -> Result<LinkDef, ModelError> {
    if d.offset_regressor.iter().any(|r| r.len() != shape_dim) || d.radius_regressor.len() != shape_dim {
        return Err(ModelError::Schema(format!("link {index} regressors do not have {shape_dim} columns")));
    }
    let reg = &d.offset_regressor;
    Ok(LinkDef {
        name: d.name,
        parent: d.parent,
        rest_offset: d.rest_offset,
        offset_regressor: Matrix3xX::from_fn(shape_dim, |r, c| reg[r][c]),
        radius: d.radius,
        radius_regressor: DVector::from_vec(d.radius_regressor),
        capsule: d.capsule,
    })
}

/// Canonical JSON text of a model (pretty-printed, fixed field order).
pub fn model_to_json(model: &HandModel) -> String {
    let (skeleton, contacts) = model.raw_parts();
    let doc = ModelDoc {
        schema_version: MODEL_SCHEMA_VERSION,
        name: model.name.clone(),
        mirror: model.mirror,
        shape_dim: skeleton.shape_dim(),
        links: skeleton.links().iter().map(link_to_doc).collect(),
        contact_table: contacts.clone(),
        fingertips: model.fingertips,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("model documents always serialize");
    s.push('\n');
    s
}

pub fn model_from_json(text: &str) -> Result<HandModel, ModelError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    let version = value
        .get("schema_version")
        .ok_or_else(|| ModelError::Schema("missing schema_version".into()))?;
    let version = version
        .as_u64()
        .ok_or_else(|| ModelError::Schema("schema_version must be a non-negative integer".into()))?;
    if version != MODEL_SCHEMA_VERSION {
        return Err(ModelError::Version { found: version, expected: MODEL_SCHEMA_VERSION });
    }
    let doc: ModelDoc = serde_json::from_value(value).map_err(|e| ModelError::Schema(e.to_string()))?;
    let links = doc
        .links
        .into_iter()
        .enumerate()
        .map(|(i, l)| link_from_doc(l, doc.shape_dim, i))
        .collect::<Result<Vec<_>, _>>()?;
    let skeleton = SkeletonDef::new(links, doc.shape_dim)?;
    HandModel::new(doc.name, doc.mirror, skeleton, doc.contact_table, doc.fingertips)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<HandModel, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
    model_from_json(&text)
}

pub fn save_model(model: &HandModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model))
        .map_err(|source| ModelError::Io { path: path.display().to_string(), source })
}
