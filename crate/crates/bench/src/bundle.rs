//! Explanation bundles: `bundle.json` plus one NPY file per array.

use std::fs;
use std::path::Path;

use ndarray::{Ix1, Ix2};
use serde::{Deserialize, Serialize};
use surf_core::explanation::{ClassConcepts, ConceptExplanation, ProjectionRule};
use surf_core::numerics::sae::SaeDict;

use crate::error::{BenchError, Result};
use crate::npy;

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub group_sizes: Vec<usize>,
    pub offset: f64,
    pub cavs: String,
    pub importances: String,
    pub complement: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeEntry {
    pub k: usize,
    pub decoder: String,
    pub encoder: String,
    pub encoder_bias: String,
    pub pre_bias: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub version: u32,
    pub method: String,
    pub k: usize,
    pub projection_rule: ProjectionRule,
    pub dim: usize,
    pub seed: u64,
    pub classes: Vec<ClassEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sae: Option<SaeEntry>,
}

/// An explanation together with the settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub explanation: ConceptExplanation,
    pub k: usize,
    pub seed: u64,
}

pub fn write_bundle(dir: &Path, bundle: &Bundle) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let e = &bundle.explanation;
    let mut classes = Vec::with_capacity(e.num_classes());
    for (i, c) in e.classes.iter().enumerate() {
        let entry = ClassEntry {
            group_sizes: c.group_sizes.clone(),
            offset: c.offset,
            cavs: format!("class{i:04}_cavs.npy"),
            importances: format!("class{i:04}_importances.npy"),
            complement: format!("class{i:04}_complement.npy"),
        };
        npy::write_array(&dir.join(&entry.cavs), &c.cavs)?;
        npy::write_array(&dir.join(&entry.importances), &c.importances)?;
        npy::write_array(&dir.join(&entry.complement), &c.complement)?;
        classes.push(entry);
    }
    let sae = match &e.sae {
        Some(s) => {
            let entry = SaeEntry {
                k: s.k,
                decoder: "sae_decoder.npy".into(),
                encoder: "sae_encoder.npy".into(),
                encoder_bias: "sae_encoder_bias.npy".into(),
                pre_bias: "sae_pre_bias.npy".into(),
            };
            npy::write_array(&dir.join(&entry.decoder), &s.decoder)?;
            npy::write_array(&dir.join(&entry.encoder), &s.encoder)?;
            npy::write_array(&dir.join(&entry.encoder_bias), &s.encoder_bias)?;
            npy::write_array(&dir.join(&entry.pre_bias), &s.pre_bias)?;
            Some(entry)
        }
        None => None,
    };
    let meta = BundleMeta {
        version: BUNDLE_VERSION,
        method: e.method.clone(),
        k: bundle.k,
        projection_rule: e.rule,
        dim: e.dim,
        seed: bundle.seed,
        classes,
        sae,
    };
    let path = dir.join("bundle.json");
    let text = serde_json::to_string_pretty(&meta).map_err(|err| BenchError::json(&path, err))?;
    fs::write(&path, text + "\n").map_err(|err| BenchError::io(&path, err))
}

fn mat(dir: &Path, name: &str) -> Result<ndarray::Array2<f64>> {
    let p = dir.join(name);
    npy::read_array(&p)?
        .into_dimensionality::<Ix2>()
        .map_err(|_| BenchError::Format {
            path: p,
            reason: "expected a 2-D array".into(),
        })
}

fn vec1(dir: &Path, name: &str) -> Result<ndarray::Array1<f64>> {
    let p = dir.join(name);
    npy::read_array(&p)?
        .into_dimensionality::<Ix1>()
        .map_err(|_| BenchError::Format {
            path: p,
            reason: "expected a 1-D array".into(),
        })
}

/// Reads a bundle and re-checks every explanation invariant.
pub fn read_bundle(dir: &Path) -> Result<Bundle> {
    let path = dir.join("bundle.json");
    let text = fs::read_to_string(&path).map_err(|e| BenchError::io(&path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| BenchError::json(&path, e))?;
    let found = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != BUNDLE_VERSION {
        return Err(BenchError::Version {
            path: dir.to_path_buf(),
            found,
            expected: BUNDLE_VERSION,
        });
    }
    let meta: BundleMeta = serde_json::from_value(value).map_err(|e| BenchError::json(&path, e))?;
    let classes = meta
        .classes
        .iter()
        .map(|c| {
            Ok(ClassConcepts {
                cavs: mat(dir, &c.cavs)?,
                group_sizes: c.group_sizes.clone(),
                importances: vec1(dir, &c.importances)?,
                complement: mat(dir, &c.complement)?,
                offset: c.offset,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sae = match &meta.sae {
        Some(s) => Some(SaeDict {
            decoder: mat(dir, &s.decoder)?,
            encoder: mat(dir, &s.encoder)?,
            encoder_bias: vec1(dir, &s.encoder_bias)?,
            pre_bias: vec1(dir, &s.pre_bias)?,
            k: s.k,
        }),
        None => None,
    };
    let explanation = ConceptExplanation {
        method: meta.method,
        rule: meta.projection_rule,
        dim: meta.dim,
        classes,
        sae,
    };
    // a bundle that fails the invariants is bad input, not an internal error
    explanation.validate().map_err(|e| BenchError::Format {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(Bundle {
        explanation,
        k: meta.k,
        seed: meta.seed,
    })
}
