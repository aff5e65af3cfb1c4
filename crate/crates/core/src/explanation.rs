//! Fitted concept explanations and the projection 𝒫(h; Vᵢ) onto them.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::linalg::{lstsq_rows, orthonormality_residual};
use crate::numerics::nnls::NnlsProjector;
use crate::numerics::sae::SaeDict;

pub const UNIT_NORM_TOL: f64 = 1e-9;
pub const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionRule {
    /// Coefficient k is vₖ·h.
    LinearDot,
    /// Non-negative least squares onto the dictionary.
    Nnls,
    /// Exact decomposition onto concepts plus complement, with the
    /// complement coefficients discarded.
    OrthonormalDecompose,
    /// Shared top-k sparse autoencoder codes.
    SaeTopk,
}

impl fmt::Display for ProjectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProjectionRule::LinearDot => "linear-dot",
            ProjectionRule::Nnls => "nnls",
            ProjectionRule::OrthonormalDecompose => "orthonormal-decompose",
            ProjectionRule::SaeTopk => "sae-topk",
        })
    }
}

impl std::str::FromStr for ProjectionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-dot" => Ok(Self::LinearDot),
            "nnls" => Ok(Self::Nnls),
            "orthonormal-decompose" => Ok(Self::OrthonormalDecompose),
            "sae-topk" => Ok(Self::SaeTopk),
            other => Err(Error::Parameter(format!("unknown projection rule `{other}`"))),
        }
    }
}

/// Concepts attached to one output.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassConcepts {
    /// Basis vectors as rows (r × D), groups stored back to back. Empty for
    /// SAE explanations, whose basis is the shared dictionary.
    pub cavs: Array2<f64>,
    /// Number of vectors in each group; singletons are plain CAVs.
    pub group_sizes: Vec<usize>,
    /// One α per basis vector.
    pub importances: Array1<f64>,
    /// Orthonormal completion of the concept span (may have zero rows).
    pub complement: Array2<f64>,
    /// Constant added to the surrogate logit (f_i·b_pre for SAE, else 0).
    pub offset: f64,
}

impl ClassConcepts {
    /// One singleton group per row of `cavs`.
    pub fn singletons(cavs: Array2<f64>, importances: Array1<f64>) -> Self {
        let d = cavs.ncols();
        Self {
            group_sizes: vec![1; cavs.nrows()],
            cavs,
            importances,
            complement: Array2::zeros((0, d)),
            offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptExplanation {
    pub method: String,
    pub rule: ProjectionRule,
    pub dim: usize,
    pub classes: Vec<ClassConcepts>,
    pub sae: Option<SaeDict>,
}

impl ConceptExplanation {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// The basis vectors of class `i` (r × D).
    pub fn basis(&self, i: usize) -> ArrayView2<'_, f64> {
        match (&self.sae, self.rule) {
            (Some(sae), ProjectionRule::SaeTopk) => sae.decoder.view(),
            _ => self.classes[i].cavs.view(),
        }
    }

    pub fn num_basis(&self, i: usize) -> usize {
        self.basis(i).nrows()
    }

    /// Largest number of basis vectors over classes.
    pub fn max_basis(&self) -> usize {
        (0..self.num_classes()).map(|i| self.num_basis(i)).max().unwrap_or(0)
    }

    /// Concept count K of class `i` (groups, not vectors).
    pub fn concepts(&self, i: usize) -> usize {
        match self.rule {
            ProjectionRule::SaeTopk => self.sae.as_ref().map_or(0, |s| s.k),
            _ => self.classes[i].group_sizes.len(),
        }
    }

    /// Checks the stored invariants: unit-norm CAVs, aligned importances
    /// and, for orthonormal decomposition, an orthonormal concept ∪
    /// complement system.
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Consistency("explanation has no classes".into()));
        }
        if self.rule == ProjectionRule::SaeTopk {
            let sae = self
                .sae
                .as_ref()
                .ok_or_else(|| Error::Consistency("sae-topk explanation without SAE parameters".into()))?;
            if sae.dim() != self.dim || sae.encoder.dim() != (self.dim, sae.dict_size()) {
                return Err(Error::Consistency(
                    "SAE parameter shapes disagree with dimension".into(),
                ));
            }
            if sae.k == 0 || sae.k > sae.dict_size() {
                return Err(Error::Consistency(format!("SAE sparsity {} out of range", sae.k)));
            }
        } else if self.sae.is_some() {
            return Err(Error::Consistency(format!(
                "{} explanation carries SAE parameters",
                self.rule
            )));
        }
        for (i, c) in self.classes.iter().enumerate() {
            let basis = self.basis(i);
            if basis.ncols() != self.dim {
                return Err(Error::Consistency(format!(
                    "class {i}: CAVs have dimension {}, expected {}",
                    basis.ncols(),
                    self.dim
                )));
            }
            if c.importances.len() != basis.nrows() {
                return Err(Error::Consistency(format!(
                    "class {i}: {} importances for {} basis vectors",
                    c.importances.len(),
                    basis.nrows()
                )));
            }
            if self.rule != ProjectionRule::SaeTopk && c.group_sizes.iter().sum::<usize>() != c.cavs.nrows() {
                return Err(Error::Consistency(format!(
                    "class {i}: group sizes do not cover the CAVs"
                )));
            }
            for (k, v) in basis.rows().into_iter().enumerate() {
                let n = v.dot(&v).sqrt();
                if n.is_nan() || (n - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(Error::Consistency(format!("class {i}: CAV {k} has norm {n}")));
                }
            }
            if !c.importances.iter().all(|a| a.is_finite()) || !c.offset.is_finite() {
                return Err(Error::Consistency(format!("class {i}: non-finite importance")));
            }
            if c.complement.nrows() > 0 && c.complement.ncols() != self.dim {
                return Err(Error::Consistency(format!("class {i}: complement has wrong dimension")));
            }
            if self.rule == ProjectionRule::OrthonormalDecompose {
                let all = ndarray::concatenate(Axis(0), &[c.cavs.view(), c.complement.view()])
                    .map_err(|e| Error::Consistency(e.to_string()))?;
                let r = orthonormality_residual(all.view());
                if r > ORTHONORMAL_TOL {
                    return Err(Error::Consistency(format!(
                        "class {i}: concept and complement vectors not orthonormal (residual {r:.3e})"
                    )));
                }
            } else if c.complement.nrows() > 0 {
                return Err(Error::Consistency(format!(
                    "class {i}: complement basis only allowed for orthonormal-decompose"
                )));
            }
        }
        Ok(())
    }
}

/// Per-class coefficient matrices (N × rᵢ). SAE codes are shared by every
/// class and stored once.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientSet {
    PerClass(Vec<Array2<f64>>),
    Shared { codes: Array2<f64>, classes: usize },
}

impl CoefficientSet {
    pub fn get(&self, i: usize) -> ArrayView2<'_, f64> {
        match self {
            CoefficientSet::PerClass(v) => v[i].view(),
            CoefficientSet::Shared { codes, .. } => codes.view(),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            CoefficientSet::PerClass(v) => v.len(),
            CoefficientSet::Shared { classes, .. } => *classes,
        }
    }

    pub fn num_samples(&self) -> usize {
        match self {
            CoefficientSet::PerClass(v) => v.first().map_or(0, |m| m.nrows()),
            CoefficientSet::Shared { codes, .. } => codes.nrows(),
        }
    }

    /// Class-`i` coefficients zero-padded to `width` columns.
    pub fn padded(&self, i: usize, width: usize) -> Array2<f64> {
        let c = self.get(i);
        let mut out = Array2::zeros((c.nrows(), width));
        out.slice_mut(s![.., ..c.ncols()]).assign(&c);
        out
    }
}

/// 𝒫(h; Vᵢ) for every row of `h` (N × D).
pub fn project(expl: &ConceptExplanation, class: usize, h: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if class >= expl.num_classes() {
        return Err(Error::Parameter(format!(
            "class {class} out of range for an explanation over {} outputs",
            expl.num_classes()
        )));
    }
    if h.ncols() != expl.dim {
        return Err(Error::shape("projection input dimension", expl.dim, h.ncols()));
    }
    let c = &expl.classes[class];
    match expl.rule {
        ProjectionRule::LinearDot => Ok(h.dot(&c.cavs.t())),
        ProjectionRule::Nnls => Ok(NnlsProjector::new(c.cavs.view()).project_rows(h)),
        ProjectionRule::OrthonormalDecompose => {
            let r = c.cavs.nrows();
            let full = ndarray::concatenate(Axis(0), &[c.cavs.view(), c.complement.view()])
                .map_err(|e| Error::Consistency(e.to_string()))?;
            let coeffs = lstsq_rows(full.view(), h)?;
            Ok(coeffs.slice(s![.., ..r]).to_owned())
        }
        ProjectionRule::SaeTopk => {
            let sae = expl
                .sae
                .as_ref()
                .ok_or_else(|| Error::Consistency("sae-topk explanation without SAE parameters".into()))?;
            Ok(sae.encode(h))
        }
    }
}

/// Projects `h` for every class.
pub fn project_all(expl: &ConceptExplanation, h: ArrayView2<'_, f64>) -> Result<CoefficientSet> {
    if expl.rule == ProjectionRule::SaeTopk {
        return Ok(CoefficientSet::Shared {
            codes: project(expl, 0, h)?,
            classes: expl.num_classes(),
        });
    }
    use rayon::prelude::*;
    let per: Result<Vec<_>> = (0..expl.num_classes())
        .into_par_iter()
        .map(|i| project(expl, i, h))
        .collect();
    Ok(CoefficientSet::PerClass(per?))
}
