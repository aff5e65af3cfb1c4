//! Surrogates mapping concept coefficients back to model outputs, with
//! exact FLOP and parameter accounting.
//!
//! * SURF: ŷᵢ = Σₖ αᵢₖ 𝒫(h; Vᵢ)ₖ + bᵢ (plus the SAE offset when present).
//! * ICE-Eval: ŷᵢ = fᵢ·ψ(pᵢ) + bᵢ with ψ(p) = Σₖ pₖ vₖ.
//! * C-SHAP-Eval: ŷᵢ = fᵢ·ψ_MLP(pᵢ) + bᵢ with a trained two-layer MLP.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::explanation::{project_all, CoefficientSet, ConceptExplanation};
use crate::model::{softmax_rows, EmbeddingSet, LinearHead, SurrogateOutput};
pub use crate::numerics::mlp::DEFAULT_HIDDEN;
use crate::numerics::mlp::{output_loss_grad, relu, MlpLoss, MlpParams};
use crate::numerics::train::{train, Objective, Parameters, TrainConfig, TrainLog};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurrogateTag {
    Surf,
    IceEval,
    CshapEval,
}

impl fmt::Display for SurrogateTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurrogateTag::Surf => "surf",
            SurrogateTag::IceEval => "ice-eval",
            SurrogateTag::CshapEval => "cshap-eval",
        })
    }
}

impl std::str::FromStr for SurrogateTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "surf" => Ok(Self::Surf),
            "ice-eval" | "ice" => Ok(Self::IceEval),
            "cshap-eval" | "cshap" => Ok(Self::CshapEval),
            other => Err(Error::Parameter(format!("unknown surrogate `{other}`"))),
        }
    }
}

/// Whether C-SHAP-Eval uses one reconstruction MLP for every class or one
/// per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MlpSharing {
    Shared,
    PerClass,
}

impl fmt::Display for MlpSharing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MlpSharing::Shared => "shared",
            MlpSharing::PerClass => "per-class",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CshapConfig {
    pub loss: MlpLoss,
    pub sharing: MlpSharing,
    pub hidden: usize,
    pub train: TrainConfig,
}

impl Default for CshapConfig {
    fn default() -> Self {
        Self {
            loss: MlpLoss::CrossEntropy,
            sharing: MlpSharing::Shared,
            hidden: DEFAULT_HIDDEN,
            train: TrainConfig::mlp(),
        }
    }
}

/// A requested surrogate, before any training.
#[derive(Debug, Clone, PartialEq)]
pub enum SurrogateSpec {
    Surf,
    IceEval,
    CshapEval(CshapConfig),
}

impl SurrogateSpec {
    pub fn tag(&self) -> SurrogateTag {
        match self {
            SurrogateSpec::Surf => SurrogateTag::Surf,
            SurrogateSpec::IceEval => SurrogateTag::IceEval,
            SurrogateSpec::CshapEval(_) => SurrogateTag::CshapEval,
        }
    }

    /// Report name, e.g. `surf` or `cshap-eval-cel`.
    pub fn name(&self) -> String {
        match self {
            SurrogateSpec::CshapEval(c) => format!("cshap-eval-{}", c.loss.tag()),
            other => other.tag().to_string(),
        }
    }

    /// Parses `surf`, `ice-eval`, `cshap-eval-cel` or `cshap-eval-l1`.
    pub fn parse(s: &str, sharing: MlpSharing) -> Result<Self> {
        let cshap = |loss| {
            Ok(SurrogateSpec::CshapEval(CshapConfig {
                loss,
                sharing,
                ..CshapConfig::default()
            }))
        };
        match s {
            "cshap-eval-cel" | "cshap-eval" | "cshap" => cshap(MlpLoss::CrossEntropy),
            "cshap-eval-l1" => cshap(MlpLoss::L1),
            other => match other.parse::<SurrogateTag>()? {
                SurrogateTag::Surf => Ok(SurrogateSpec::Surf),
                SurrogateTag::IceEval => Ok(SurrogateSpec::IceEval),
                SurrogateTag::CshapEval => cshap(MlpLoss::CrossEntropy),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CshapParams {
    Shared(MlpParams),
    PerClass(Vec<MlpParams>),
}

impl CshapParams {
    pub fn class(&self, c: usize) -> &MlpParams {
        match self {
            CshapParams::Shared(p) => p,
            CshapParams::PerClass(v) => &v[c],
        }
    }

    pub fn sharing(&self) -> MlpSharing {
        match self {
            CshapParams::Shared(_) => MlpSharing::Shared,
            CshapParams::PerClass(_) => MlpSharing::PerClass,
        }
    }

    /// Total learnt parameters over every stored MLP.
    pub fn num_params(&self) -> usize {
        match self {
            CshapParams::Shared(p) => p.num_params(),
            CshapParams::PerClass(v) => v.num_params(),
        }
    }
}

/// A trained C-SHAP-Eval reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct CshapSurrogate {
    pub params: CshapParams,
    pub loss: MlpLoss,
    pub log: TrainLog,
}

/// A ready-to-evaluate surrogate.
#[derive(Debug, Clone, PartialEq)]
pub enum SurrogateKind {
    Surf,
    IceEval,
    CshapEval(Box<CshapSurrogate>),
}

impl SurrogateKind {
    pub fn tag(&self) -> SurrogateTag {
        match self {
            SurrogateKind::Surf => SurrogateTag::Surf,
            SurrogateKind::IceEval => SurrogateTag::IceEval,
            SurrogateKind::CshapEval(_) => SurrogateTag::CshapEval,
        }
    }

    pub fn params_learnt(&self) -> usize {
        match self {
            SurrogateKind::CshapEval(s) => s.params.num_params(),
            _ => 0,
        }
    }
}

fn check_compatible(expl: &ConceptExplanation, head: &LinearHead) -> Result<()> {
    if expl.num_classes() != head.num_outputs() {
        return Err(Error::Consistency(format!(
            "explanation covers {} outputs, head has {}",
            expl.num_classes(),
            head.num_outputs()
        )));
    }
    if expl.dim != head.dim() {
        return Err(Error::shape("explanation vs head dimension", head.dim(), expl.dim));
    }
    Ok(())
}

/// SURF logits from precomputed coefficients.
pub fn surf_logits(
    expl: &ConceptExplanation,
    bias: ArrayView1<'_, f64>,
    coeffs: &CoefficientSet,
) -> Result<Array2<f64>> {
    let c = expl.num_classes();
    if bias.len() != c || coeffs.num_classes() != c {
        return Err(Error::Consistency(format!(
            "surf: {c} classes, {} biases, {} coefficient sets",
            bias.len(),
            coeffs.num_classes()
        )));
    }
    let n = coeffs.num_samples();
    let mut out = Array2::zeros((n, c));
    for i in 0..c {
        let p = coeffs.get(i);
        let alpha = &expl.classes[i].importances;
        if p.ncols() != alpha.len() {
            return Err(Error::Consistency(format!(
                "class {i}: {} coefficients for {} importances",
                p.ncols(),
                alpha.len()
            )));
        }
        let mut col = p.dot(alpha);
        col += bias[i] + expl.classes[i].offset;
        out.column_mut(i).assign(&col);
    }
    Ok(out)
}

pub fn surf_forward(expl: &ConceptExplanation, head: &LinearHead, data: &EmbeddingSet) -> Result<SurrogateOutput> {
    check_compatible(expl, head)?;
    let h = data.embeddings.view();
    let coeffs = project_all(expl, h)?;
    let y = head.forward(h)?;
    SurrogateOutput::new(surf_logits(expl, head.bias.view(), &coeffs)?, y)
}

/// ICE-Eval logits from precomputed coefficients. Importances are never
/// read.
pub fn ice_eval_logits(expl: &ConceptExplanation, head: &LinearHead, coeffs: &CoefficientSet) -> Result<Array2<f64>> {
    check_compatible(expl, head)?;
    let c = expl.num_classes();
    let mut out = Array2::zeros((coeffs.num_samples(), c));
    for i in 0..c {
        let p = coeffs.get(i);
        let basis = expl.basis(i);
        if p.ncols() != basis.nrows() {
            return Err(Error::Consistency(format!(
                "class {i}: {} coefficients for {} basis vectors",
                p.ncols(),
                basis.nrows()
            )));
        }
        // fᵢ·Σₖ pₖvₖ = Σₖ pₖ (vₖ·fᵢ)
        let vf = basis.dot(&head.row(i));
        let mut col = p.dot(&vf);
        col += head.bias[i] + expl.classes[i].offset;
        out.column_mut(i).assign(&col);
    }
    Ok(out)
}

pub fn ice_eval_forward(expl: &ConceptExplanation, head: &LinearHead, data: &EmbeddingSet) -> Result<SurrogateOutput> {
    let h = data.embeddings.view();
    let coeffs = project_all(expl, h)?;
    let y = head.forward(h)?;
    SurrogateOutput::new(ice_eval_logits(expl, head, &coeffs)?, y)
}

/// Access to the MLP that reconstructs class `c`.
pub trait ClassMlps: Parameters {
    fn class(&self, c: usize) -> &MlpParams;
    fn class_mut(&mut self, c: usize) -> &mut MlpParams;
}

impl ClassMlps for MlpParams {
    fn class(&self, _: usize) -> &MlpParams {
        self
    }
    fn class_mut(&mut self, _: usize) -> &mut MlpParams {
        self
    }
}

impl ClassMlps for Vec<MlpParams> {
    fn class(&self, c: usize) -> &MlpParams {
        &self[c]
    }
    fn class_mut(&mut self, c: usize) -> &mut MlpParams {
        &mut self[c]
    }
}

/// Per-class column ŷ_c for the rows `x` (B × r): with g = W₂ᵗ f_c,
/// ŷ_c = relu(W₁x + b₁)·g + f_c·b₂ + b_c.
fn class_column(p: &MlpParams, f: ArrayView1<'_, f64>, bias: f64, x: ArrayView2<'_, f64>) -> Array1<f64> {
    let a = p.hidden_pre(x).mapv(relu);
    let g = p.w2.t().dot(&f);
    let mut col = a.dot(&g);
    col += f.dot(&p.b2) + bias;
    col
}

type ClassGrad = (Array2<f64>, Array1<f64>, Array1<f64>, f64);

/// Training objective for the reconstruction MLP(s): coefficients of every
/// class are mapped to ℝᴰ and read out through the head.
pub struct CshapObjective<'a> {
    /// Per-class N × r inputs (zero-padded to a common width).
    pub inputs: Vec<Array2<f64>>,
    pub head: &'a LinearHead,
    /// Model probabilities (cross-entropy) or logits (L1), N × C.
    pub targets: Array2<f64>,
    pub loss: MlpLoss,
}

impl<'a> CshapObjective<'a> {
    pub fn new(
        coeffs: &CoefficientSet,
        width: usize,
        head: &'a LinearHead,
        reference: ArrayView2<'_, f64>,
        loss: MlpLoss,
    ) -> Self {
        let inputs = (0..coeffs.num_classes()).map(|i| coeffs.padded(i, width)).collect();
        let targets = match loss {
            MlpLoss::CrossEntropy => softmax_rows(reference),
            MlpLoss::L1 => reference.to_owned(),
        };
        Self {
            inputs,
            head,
            targets,
            loss,
        }
    }

    fn outputs<P: ClassMlps>(&self, p: &P, batch: &[usize]) -> Array2<f64> {
        let c = self.head.num_outputs();
        let cols: Vec<Array1<f64>> = (0..c)
            .into_par_iter()
            .map(|i| {
                let x = self.inputs[i].select(Axis(0), batch);
                class_column(p.class(i), self.head.row(i), self.head.bias[i], x.view())
            })
            .collect();
        let mut out = Array2::zeros((batch.len(), c));
        for (i, col) in cols.into_iter().enumerate() {
            out.column_mut(i).assign(&col);
        }
        out
    }
}

impl<P: ClassMlps> Objective<P> for CshapObjective<'_> {
    fn num_samples(&self) -> usize {
        self.targets.nrows()
    }

    fn loss_grad(&self, p: &P, batch: &[usize], grad: Option<&mut P>) -> f64 {
        let out = self.outputs(p, batch);
        let t = self.targets.select(Axis(0), batch);
        let (loss, d_out) = output_loss_grad(self.loss, out.view(), t.view(), batch.len() as f64, grad.is_some());
        let (Some(grad), Some(d_out)) = (grad, d_out) else {
            return loss;
        };
        let c = self.head.num_outputs();
        // per class: (dW₁, db₁, dG_c = Aᵗg, Σg)
        let parts: Vec<ClassGrad> = (0..c)
            .into_par_iter()
            .map(|i| {
                let pc = p.class(i);
                let f = self.head.row(i);
                let x = self.inputs[i].select(Axis(0), batch);
                let z = pc.hidden_pre(x.view());
                let a = z.mapv(relu);
                let g = d_out.column(i);
                let gvec = pc.w2.t().dot(&f);
                let dg = a.t().dot(&g);
                let mut dz = g.to_owned().insert_axis(Axis(1)).dot(&gvec.insert_axis(Axis(0)));
                ndarray::Zip::from(&mut dz).and(&z).for_each(|d, &zv| {
                    if zv <= 0.0 {
                        *d = 0.0;
                    }
                });
                let dw1 = dz.t().dot(&x);
                let db1 = dz.sum_axis(Axis(0));
                (dw1, db1, dg, g.sum())
            })
            .collect();
        for (i, (dw1, db1, dg, gsum)) in parts.into_iter().enumerate() {
            let f = self.head.row(i);
            let gc = grad.class_mut(i);
            gc.w1 += &dw1;
            gc.b1 += &db1;
            // W₂ gradient is the outer product f_c ⊗ dG_c
            gc.w2 += &f.insert_axis(Axis(1)).dot(&dg.insert_axis(Axis(0)));
            gc.b2.scaled_add(gsum, &f);
        }
        loss
    }
}

/// Trains C-SHAP-Eval on the training set: coefficients → model
/// probabilities (cross-entropy) or model logits (L1).
pub fn train_cshap_surrogate(
    expl: &ConceptExplanation,
    head: &LinearHead,
    train_data: &EmbeddingSet,
    cfg: &CshapConfig,
    rng: &mut Rng,
) -> Result<CshapSurrogate> {
    check_compatible(expl, head)?;
    let h = train_data.embeddings.view();
    let coeffs = project_all(expl, h)?;
    let reference = head.forward(h)?;
    let width = expl.max_basis();
    let obj = CshapObjective::new(&coeffs, width, head, reference.view(), cfg.loss);
    let d = head.dim();
    let c = head.num_outputs();
    let mut init_rng = rng.fork(0);
    let (params, log) = match cfg.sharing {
        MlpSharing::Shared => {
            let p = MlpParams::init(width, cfg.hidden, d, &mut init_rng);
            let (p, log) = train(&obj, p, &cfg.train, rng)?;
            (CshapParams::Shared(p), log)
        }
        MlpSharing::PerClass => {
            let p: Vec<MlpParams> = (0..c)
                .map(|i| MlpParams::init(width, cfg.hidden, d, &mut init_rng.fork(i as u64)))
                .collect();
            let (p, log) = train(&obj, p, &cfg.train, rng)?;
            (CshapParams::PerClass(p), log)
        }
    };
    Ok(CshapSurrogate {
        params,
        loss: cfg.loss,
        log,
    })
}

pub fn cshap_eval_logits(
    surrogate: &CshapSurrogate,
    expl: &ConceptExplanation,
    head: &LinearHead,
    coeffs: &CoefficientSet,
) -> Result<Array2<f64>> {
    check_compatible(expl, head)?;
    let c = head.num_outputs();
    if let CshapParams::PerClass(v) = &surrogate.params {
        if v.len() != c {
            return Err(Error::State(format!("{} class MLPs for {c} outputs", v.len())));
        }
    }
    let width = expl.max_basis();
    for i in 0..c {
        let p = surrogate.params.class(i);
        if p.inputs() != width || p.outputs() != head.dim() {
            return Err(Error::State(format!(
                "MLP for class {i} maps {} → {}, expected {width} → {}",
                p.inputs(),
                p.outputs(),
                head.dim()
            )));
        }
        if !p.is_finite() {
            return Err(Error::State(format!("MLP for class {i} has non-finite parameters")));
        }
    }
    let cols: Vec<Array1<f64>> = (0..c)
        .into_par_iter()
        .map(|i| {
            let x = coeffs.padded(i, width);
            class_column(surrogate.params.class(i), head.row(i), head.bias[i], x.view())
        })
        .collect();
    let mut out = Array2::zeros((coeffs.num_samples(), c));
    for (i, col) in cols.into_iter().enumerate() {
        out.column_mut(i).assign(&col);
    }
    Ok(out)
}

pub fn cshap_eval_forward(
    surrogate: &CshapSurrogate,
    expl: &ConceptExplanation,
    head: &LinearHead,
    data: &EmbeddingSet,
) -> Result<SurrogateOutput> {
    let h = data.embeddings.view();
    let coeffs = project_all(expl, h)?;
    let y = head.forward(h)?;
    SurrogateOutput::new(cshap_eval_logits(surrogate, expl, head, &coeffs)?, y)
}

/// Evaluates any trained surrogate.
pub fn evaluate(
    kind: &SurrogateKind,
    expl: &ConceptExplanation,
    head: &LinearHead,
    data: &EmbeddingSet,
) -> Result<SurrogateOutput> {
    match kind {
        SurrogateKind::Surf => surf_forward(expl, head, data),
        SurrogateKind::IceEval => ice_eval_forward(expl, head, data),
        SurrogateKind::CshapEval(s) => cshap_eval_forward(s, expl, head, data),
    }
}

/// Prepares a surrogate for evaluation, training it when needed.
pub fn build(
    spec: &SurrogateSpec,
    expl: &ConceptExplanation,
    head: &LinearHead,
    train_data: &EmbeddingSet,
    rng: &mut Rng,
) -> Result<SurrogateKind> {
    Ok(match spec {
        SurrogateSpec::Surf => SurrogateKind::Surf,
        SurrogateSpec::IceEval => SurrogateKind::IceEval,
        SurrogateSpec::CshapEval(cfg) => {
            SurrogateKind::CshapEval(Box::new(train_cshap_surrogate(expl, head, train_data, cfg, rng)?))
        }
    })
}

/// Inference FLOPs counting a multiply-add as 2: SURF 2KC, ICE-Eval
/// CD(2K+1), C-SHAP-Eval 2C(H₁K + H₁D + D).
pub fn flops(tag: SurrogateTag, k: u64, c: u64, d: u64, hidden: u64) -> u64 {
    match tag {
        SurrogateTag::Surf => 2 * k * c,
        SurrogateTag::IceEval => c * d * (2 * k + 1),
        SurrogateTag::CshapEval => 2 * c * (hidden * k + hidden * d + d),
    }
}

/// Learnt parameters of one reconstruction MLP: H₁(K+1) + D(H₁+1).
pub fn param_count(tag: SurrogateTag, k: u64, d: u64, hidden: u64) -> u64 {
    match tag {
        SurrogateTag::Surf | SurrogateTag::IceEval => 0,
        SurrogateTag::CshapEval => hidden * (k + 1) + d * (hidden + 1),
    }
}
