//! Manifest JSON: where a split's arrays live and what task they describe.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Ix1, Ix2};
use serde::{Deserialize, Serialize};
use surf_core::metrics::argmax;
use surf_core::model::{validate_pair, EmbeddingSet, Labels, LinearHead, Split, Task};

use crate::error::{BenchError, Result};
use crate::npy;

/// Paths are relative to the manifest's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub embeddings: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    pub weights: PathBuf,
    pub bias: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<PathBuf>,
    pub task: Task,
    #[serde(default = "default_split")]
    pub split: Split,
    #[serde(default)]
    pub provenance: String,
}

fn default_split() -> Split {
    Split::Train
}

/// A manifest with every array loaded and checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub head: LinearHead,
    pub data: EmbeddingSet,
    pub reference_logits: Option<Array2<f64>>,
    pub provenance: String,
}

fn bad(path: &Path, reason: impl Into<String>) -> BenchError {
    BenchError::Manifest {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn matrix(path: &Path, file: &Path, what: &str) -> Result<Array2<f64>> {
    npy::read_array(file)?
        .into_dimensionality::<Ix2>()
        .map_err(|_| bad(path, format!("{what} must be 2-D")))
}

fn vector(path: &Path, file: &Path, what: &str) -> Result<Array1<f64>> {
    npy::read_array(file)?
        .into_dimensionality::<Ix1>()
        .map_err(|_| bad(path, format!("{what} must be 1-D")))
}

fn read_labels(path: &Path, file: &Path, task: Task, n: usize, c: usize) -> Result<Labels> {
    let raw = npy::read_ints(file)?;
    match task {
        Task::Classification => {
            let v = raw
                .into_dimensionality::<Ix1>()
                .map_err(|_| bad(path, "classification labels must be 1-D"))?;
            v.iter()
                .enumerate()
                .map(|(i, &l)| usize::try_from(l).map_err(|_| bad(path, format!("label {l} at row {i} is negative"))))
                .collect::<Result<Vec<_>>>()
                .map(Labels::Classes)
        }
        Task::Multilabel => {
            let m = raw
                .into_dimensionality::<Ix2>()
                .map_err(|_| bad(path, "multilabel labels must be N x C"))?;
            if m.dim() != (n, c) {
                return Err(bad(path, format!("labels are {:?}, expected ({n}, {c})", m.dim())));
            }
            Ok(Labels::Attributes(m.mapv(|v| v != 0)))
        }
        Task::Regression => Ok(Labels::None),
    }
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| BenchError::json(path, e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| BenchError::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| BenchError::io(path, e))
    }

    fn resolve(base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// Reads the manifest at `path` and every array it references.
    pub fn load(path: &Path) -> Result<Loaded> {
        let m = Self::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let file = |p: &Path| Self::resolve(base, p);
        let h = matrix(path, &file(&m.embeddings), "embeddings")?;
        let w = matrix(path, &file(&m.weights), "weights")?;
        let b = vector(path, &file(&m.bias), "bias")?;
        let (n, d) = h.dim();
        let (c, dw) = w.dim();
        if dw != d {
            return Err(bad(path, format!("embeddings have D = {d}, weights have D = {dw}")));
        }
        if b.len() != c {
            return Err(bad(path, format!("bias has {} entries for C = {c}", b.len())));
        }
        let labels = match (&m.labels, m.task) {
            (Some(l), task) => read_labels(path, &file(l), task, n, c)?,
            (None, Task::Regression) => Labels::None,
            (None, task) => return Err(bad(path, format!("{task} manifests need a labels file"))),
        };
        if let Labels::Classes(l) = &labels {
            if l.len() != n {
                return Err(bad(path, format!("{} labels for {n} embeddings", l.len())));
            }
        }
        let logits = match &m.logits {
            Some(p) => {
                let z = matrix(path, &file(p), "logits")?;
                if z.dim() != (n, c) {
                    return Err(bad(path, format!("logits are {:?}, expected ({n}, {c})", z.dim())));
                }
                Some(z)
            }
            None => None,
        };
        let head = LinearHead::new(w, b, m.task)?;
        let data = EmbeddingSet::new(h, labels, m.split)?;
        let violations = validate_pair(&head, &data);
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(bad(path, list.join("; ")));
        }
        Ok(Loaded {
            head,
            data,
            reference_logits: logits,
            provenance: m.provenance,
        })
    }
}

/// Writes `<prefix>_embeddings.npy`, `<prefix>_labels.npy` (when there are
/// labels), `head_weights.npy`, `head_bias.npy` and `<prefix>.json` into
/// `dir`. Returns the manifest path.
pub fn save(
    dir: &Path,
    prefix: &str,
    head: &LinearHead,
    data: &EmbeddingSet,
    logits: Option<&Array2<f64>>,
    provenance: &str,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let emb = PathBuf::from(format!("{prefix}_embeddings.npy"));
    npy::write_array(&dir.join(&emb), &data.embeddings)?;
    let labels = match &data.labels {
        Labels::Classes(l) => {
            let p = PathBuf::from(format!("{prefix}_labels.npy"));
            npy::write_ints(&dir.join(&p), &Array1::from_iter(l.iter().map(|&x| x as i64)))?;
            Some(p)
        }
        Labels::Attributes(a) => {
            let p = PathBuf::from(format!("{prefix}_labels.npy"));
            npy::write_ints(&dir.join(&p), &a.mapv(i64::from))?;
            Some(p)
        }
        Labels::None => None,
    };
    let weights = PathBuf::from("head_weights.npy");
    let bias = PathBuf::from("head_bias.npy");
    npy::write_array(&dir.join(&weights), &head.weights)?;
    npy::write_array(&dir.join(&bias), &head.bias)?;
    let logits = match logits {
        Some(z) => {
            let p = PathBuf::from(format!("{prefix}_logits.npy"));
            npy::write_array(&dir.join(&p), z)?;
            Some(p)
        }
        None => None,
    };
    let m = Manifest {
        embeddings: emb,
        labels,
        weights,
        bias,
        logits,
        task: head.task,
        split: data.split,
        provenance: provenance.to_string(),
    };
    let path = dir.join(format!("{prefix}.json"));
    m.write(&path)?;
    Ok(path)
}

/// Agreement between the stored reference logits and H·Wᵀ + b.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrip {
    pub max_abs_diff: f64,
    /// Rows whose stored label differs from the argmax of the stored logits
    /// (classification only).
    pub label_mismatches: usize,
    pub rows: usize,
}

impl RoundTrip {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_abs_diff <= tol && self.label_mismatches == 0
    }
}

/// Tolerance for exported single-precision logits.
pub const EXPORT_TOLERANCE: f64 = 1e-3;

pub fn check_roundtrip(loaded: &Loaded) -> Result<RoundTrip> {
    let reference = loaded
        .reference_logits
        .as_ref()
        .ok_or_else(|| BenchError::Usage("manifest has no reference logits to check".into()))?;
    let recomputed = loaded.head.forward(loaded.data.embeddings.view())?;
    let max_abs_diff = recomputed
        .iter()
        .zip(reference.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let label_mismatches = match &loaded.data.labels {
        Labels::Classes(l) => reference
            .rows()
            .into_iter()
            .zip(l)
            .filter(|(r, &l)| argmax(*r) != l)
            .count(),
        _ => 0,
    };
    Ok(RoundTrip {
        max_abs_diff,
        label_mismatches,
        rows: reference.nrows(),
    })
}
