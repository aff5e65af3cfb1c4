//! Shared data model: embeddings, the final linear head, and surrogate
//! outputs, plus the softmax used by every probability-space metric.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Classification,
    Multilabel,
    Regression,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classification => "classification",
            Task::Multilabel => "multilabel",
            Task::Regression => "regression",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "multilabel" => Ok(Task::Multilabel),
            "regression" => Ok(Task::Regression),
            other => Err(Error::Parameter(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Labels attached to an embedding set. These are always the model's own
/// predictions, never ground truth.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    /// Predicted class index per sample.
    Classes(Vec<usize>),
    /// Predicted presence of each attribute (N × C).
    Attributes(Array2<bool>),
    /// Regression: no labels.
    None,
}

/// Pooled final-layer embeddings (N × D) with model-predicted labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub embeddings: Array2<f64>,
    pub labels: Labels,
    pub split: Split,
}

impl EmbeddingSet {
    pub fn new(embeddings: Array2<f64>, labels: Labels, split: Split) -> Result<Self> {
        let set = Self {
            embeddings,
            labels,
            split,
        };
        if let Some(v) = set.violations().into_iter().next() {
            return Err(Error::Invalid(v.message));
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    /// Indices of samples that belong to `class` under the predicted labels.
    /// Regression sets pool every sample into class 0.
    pub fn members(&self, class: usize) -> Vec<usize> {
        match &self.labels {
            Labels::Classes(l) => l
                .iter()
                .enumerate()
                .filter(|(_, &c)| c == class)
                .map(|(i, _)| i)
                .collect(),
            Labels::Attributes(a) => (0..a.nrows()).filter(|&i| class < a.ncols() && a[[i, class]]).collect(),
            Labels::None => (0..self.len()).collect(),
        }
    }

    /// Gathers the rows at `idx` into a new matrix.
    pub fn rows(&self, idx: &[usize]) -> Array2<f64> {
        self.embeddings.select(Axis(0), idx)
    }

    /// Class labels, if this is a classification set.
    pub fn class_labels(&self) -> Option<&[usize]> {
        match &self.labels {
            Labels::Classes(l) => Some(l),
            _ => None,
        }
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (n, d) = self.embeddings.dim();
        if n == 0 || d == 0 {
            out.push(Violation::new(
                ViolationKind::EmptyData,
                format!("embedding matrix is {n}x{d}; need N >= 1 and D >= 1"),
            ));
        }
        for ((r, c), v) in self.embeddings.indexed_iter() {
            if !v.is_finite() {
                out.push(Violation::new(
                    ViolationKind::NonFinite,
                    format!("non-finite embedding value at ({r}, {c})"),
                ));
            }
        }
        match &self.labels {
            Labels::Classes(l) if l.len() != n => out.push(Violation::new(
                ViolationKind::ShapeMismatch,
                format!("{} labels for {n} embeddings", l.len()),
            )),
            Labels::Attributes(a) if a.nrows() != n => out.push(Violation::new(
                ViolationKind::ShapeMismatch,
                format!("{} attribute rows for {n} embeddings", a.nrows()),
            )),
            _ => {}
        }
        out
    }
}

/// The model's final linear layer: `y = W h + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    /// C × D; row i is the classification vector of output i.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub task: Task,
}

impl LinearHead {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, task: Task) -> Result<Self> {
        let head = Self { weights, bias, task };
        if let Some(v) = head.violations().into_iter().next() {
            return Err(Error::Invalid(v.message));
        }
        Ok(head)
    }

    pub fn num_outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.weights.row(i)
    }

    /// Logits for each row of `h` (N × D → N × C).
    pub fn forward(&self, h: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if h.ncols() != self.dim() {
            return Err(Error::shape(
                "head forward (embedding dim vs head dim)",
                self.dim(),
                h.ncols(),
            ));
        }
        let mut y = h.dot(&self.weights.t());
        y += &self.bias;
        Ok(y)
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.weights.nrows() == 0 || self.weights.ncols() == 0 {
            out.push(Violation::new(
                ViolationKind::EmptyData,
                "head has no outputs or zero input dimension".to_string(),
            ));
        }
        if self.bias.len() != self.weights.nrows() {
            out.push(Violation::new(
                ViolationKind::ShapeMismatch,
                format!(
                    "bias has {} entries for {} outputs",
                    self.bias.len(),
                    self.weights.nrows()
                ),
            ));
        }
        for ((r, c), v) in self.weights.indexed_iter() {
            if !v.is_finite() {
                out.push(Violation::new(
                    ViolationKind::NonFinite,
                    format!("non-finite head weight at ({r}, {c})"),
                ));
            }
        }
        for (i, v) in self.bias.iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation::new(
                    ViolationKind::NonFinite,
                    format!("non-finite head bias at ({i})"),
                ));
            }
        }
        out
    }
}

/// Surrogate logits ŷ next to the model's reference logits y (both N × C).
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateOutput {
    pub logits: Array2<f64>,
    pub reference_logits: Array2<f64>,
}

impl SurrogateOutput {
    pub fn new(logits: Array2<f64>, reference_logits: Array2<f64>) -> Result<Self> {
        if logits.dim() != reference_logits.dim() {
            return Err(Error::shape(
                "surrogate output (reference vs surrogate logits)",
                format!("{:?}", reference_logits.dim()),
                format!("{:?}", logits.dim()),
            ));
        }
        Ok(Self {
            logits,
            reference_logits,
        })
    }

    pub fn len(&self) -> usize {
        self.logits.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.nrows() == 0
    }

    pub fn num_outputs(&self) -> usize {
        self.logits.ncols()
    }

    /// p̂: softmax of the surrogate logits.
    pub fn probabilities(&self) -> Array2<f64> {
        softmax_rows(self.logits.view())
    }

    /// p: softmax of the model logits.
    pub fn reference_probabilities(&self) -> Array2<f64> {
        softmax_rows(self.reference_logits.view())
    }
}

/// Numerically stable softmax. Rejects non-finite input with the index of
/// the first offending entry.
pub fn softmax(logits: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "softmax input".into(),
            index: vec![i],
        });
    }
    let mut out = logits.to_owned();
    softmax_in_place(out.view_mut());
    Ok(out)
}

fn softmax_in_place(mut row: ndarray::ArrayViewMut1<'_, f64>) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    row.mapv_inplace(|v| (v - max).exp());
    let sum: f64 = row.iter().sum();
    row.mapv_inplace(|v| v / sum);
}

/// Row-wise softmax of an N × C matrix. Inputs are assumed finite.
pub fn softmax_rows(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for row in out.rows_mut() {
        softmax_in_place(row);
    }
    out
}

/// The reference path: surrogate logits equal the model's own logits.
pub fn model_forward(head: &LinearHead, data: &EmbeddingSet) -> Result<SurrogateOutput> {
    let y = head.forward(data.embeddings.view())?;
    SurrogateOutput::new(y.clone(), y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    EmptyData,
    NonFinite,
    ShapeMismatch,
    LabelOutOfRange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl Violation {
    fn new(kind: ViolationKind, message: String) -> Self {
        Self { kind, message }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Checks every invariant of a head/data pair and reports all violations.
pub fn validate_pair(head: &LinearHead, data: &EmbeddingSet) -> Vec<Violation> {
    let mut out = head.violations();
    out.extend(data.violations());
    if head.dim() != data.dim() {
        out.push(Violation::new(
            ViolationKind::ShapeMismatch,
            format!("embedding dim {} does not match head dim {}", data.dim(), head.dim()),
        ));
    }
    let c = head.num_outputs();
    match &data.labels {
        Labels::Classes(l) => {
            for (i, &t) in l.iter().enumerate() {
                if t >= c {
                    out.push(Violation::new(
                        ViolationKind::LabelOutOfRange,
                        format!("label out of range: sample {i} has label {t}, head has {c} classes"),
                    ));
                }
            }
        }
        Labels::Attributes(a) if a.ncols() != c => out.push(Violation::new(
            ViolationKind::ShapeMismatch,
            format!("{} attribute columns for {c} head outputs", a.ncols()),
        )),
        _ => {}
    }
    out
}
