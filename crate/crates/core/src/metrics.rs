//! Agreement metrics between model outputs y and surrogate outputs ŷ.

use ndarray::{ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Labels, SurrogateOutput, Task};
use crate::numerics::spearman::spearman;

pub const SURF_MAE: &str = "surf_mae";
pub const SURF_EMD: &str = "surf_emd";
pub const TOP1: &str = "top1";
pub const RANK_CORR: &str = "rank_corr";
pub const NORM_L1: &str = "norm_l1";
pub const CSHAP1: &str = "cshap1";
pub const ATTR_ACC: &str = "attr_acc";

/// Every metric name that may appear in a report.
pub const METRIC_NAMES: [&str; 7] = [SURF_MAE, SURF_EMD, TOP1, RANK_CORR, NORM_L1, CSHAP1, ATTR_ACC];

pub fn is_metric_name(name: &str) -> bool {
    METRIC_NAMES.contains(&name)
}

/// Samples with |y_t| below this are left out of Norm-L1.
pub const NORM_L1_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub name: String,
    /// `None` when every sample was excluded or the metric is undefined.
    pub value: Option<f64>,
    pub n_used: usize,
    pub n_excluded: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl MetricResult {
    fn full(name: &str, value: f64, n: usize) -> Self {
        Self {
            name: name.into(),
            value: Some(value),
            n_used: n,
            n_excluded: 0,
            reason: None,
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_nonempty(out: &SurrogateOutput) -> Result<()> {
    if out.is_empty() || out.num_outputs() == 0 {
        return Err(Error::Parameter(
            "metrics need at least one sample and one output".into(),
        ));
    }
    Ok(())
}

/// (1/(N·C)) Σ |y − ŷ|.
pub fn surf_mae(out: &SurrogateOutput) -> Result<f64> {
    check_nonempty(out)?;
    let total: f64 = out
        .logits
        .iter()
        .zip(out.reference_logits.iter())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(total / out.logits.len() as f64)
}

/// Constant-cost earth mover's distance between softmaxed rows, which is
/// the total variation (1/(2N)) Σ |p − p̂|.
pub fn surf_emd(out: &SurrogateOutput) -> Result<f64> {
    check_nonempty(out)?;
    let p = out.reference_probabilities();
    let q = out.probabilities();
    let total: f64 = p.iter().zip(q.iter()).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / (2.0 * out.len() as f64))
}

/// Percentage of samples whose surrogate argmax matches the model's.
pub fn top1(out: &SurrogateOutput) -> Result<f64> {
    check_nonempty(out)?;
    let agree = out
        .logits
        .rows()
        .into_iter()
        .zip(out.reference_logits.rows())
        .filter(|(a, b)| argmax(*a) == argmax(*b))
        .count();
    Ok(100.0 * agree as f64 / out.len() as f64)
}

fn check_labels(out: &SurrogateOutput, labels: &[usize]) -> Result<()> {
    if labels.len() != out.len() {
        return Err(Error::shape("metric labels", out.len(), labels.len()));
    }
    if let Some(&t) = labels.iter().find(|&&t| t >= out.num_outputs()) {
        return Err(Error::Parameter(format!(
            "label {t} out of range for {} outputs",
            out.num_outputs()
        )));
    }
    Ok(())
}

/// Mean of |y_t − ŷ_t| / |y_t| at the labelled output t.
pub fn norm_l1(out: &SurrogateOutput, labels: &[usize]) -> Result<MetricResult> {
    check_nonempty(out)?;
    check_labels(out, labels)?;
    let mut sum = 0.0;
    let mut used = 0;
    for (s, &t) in labels.iter().enumerate() {
        let y = out.reference_logits[[s, t]];
        if y.abs() < NORM_L1_EPS {
            continue;
        }
        sum += (y - out.logits[[s, t]]).abs() / y.abs();
        used += 1;
    }
    let excluded = labels.len() - used;
    Ok(MetricResult {
        name: NORM_L1.into(),
        value: (used > 0).then(|| sum / used as f64),
        n_used: used,
        n_excluded: excluded,
        reason: (excluded > 0).then(|| format!("{excluded} samples with |y_t| < {NORM_L1_EPS:e}")),
    })
}

/// (surrogate accuracy − a_r) / (model accuracy − a_r); a_r defaults to 1/C.
pub fn cshap_metric(out: &SurrogateOutput, labels: &[usize], a_r: Option<f64>) -> Result<MetricResult> {
    check_nonempty(out)?;
    check_labels(out, labels)?;
    let a_r = a_r.unwrap_or(1.0 / out.num_outputs() as f64);
    let n = labels.len() as f64;
    let acc = |m: &ndarray::Array2<f64>| {
        m.rows()
            .into_iter()
            .zip(labels)
            .filter(|(r, &t)| argmax(*r) == t)
            .count() as f64
            / n
    };
    let model = acc(&out.reference_logits);
    let surrogate = acc(&out.logits);
    let denom = model - a_r;
    if denom == 0.0 {
        return Ok(MetricResult {
            name: CSHAP1.into(),
            value: None,
            n_used: 0,
            n_excluded: labels.len(),
            reason: Some("model accuracy equals the random-prediction accuracy".into()),
        });
    }
    Ok(MetricResult::full(CSHAP1, (surrogate - a_r) / denom, labels.len()))
}

/// Mean Spearman correlation between each y row and ŷ row; rows with zero
/// rank variance are excluded.
pub fn rank_corr(out: &SurrogateOutput) -> Result<MetricResult> {
    check_nonempty(out)?;
    if out.num_outputs() < 2 {
        return Err(Error::Parameter("rank correlation needs at least two outputs".into()));
    }
    let mut sum = 0.0;
    let mut used = 0;
    for (a, b) in out.reference_logits.rows().into_iter().zip(out.logits.rows()) {
        if let Some(r) = spearman(a, b)? {
            sum += r;
            used += 1;
        }
    }
    let excluded = out.len() - used;
    Ok(MetricResult {
        name: RANK_CORR.into(),
        value: (used > 0).then(|| sum / used as f64),
        n_used: used,
        n_excluded: excluded,
        reason: (excluded > 0).then(|| format!("{excluded} rows with zero rank variance")),
    })
}

/// Percentage of (sample, attribute) pairs where the thresholded surrogate
/// decision matches the model's.
pub fn attr_acc(out: &SurrogateOutput, tau: f64) -> Result<f64> {
    check_nonempty(out)?;
    let agree = out
        .logits
        .iter()
        .zip(out.reference_logits.iter())
        .filter(|(a, b)| (**a > tau) == (**b > tau))
        .count();
    Ok(100.0 * agree as f64 / out.logits.len() as f64)
}

/// The metric names reported for a task.
pub fn suite_names(task: Task) -> &'static [&'static str] {
    match task {
        Task::Classification => &[SURF_MAE, SURF_EMD, TOP1, RANK_CORR, NORM_L1, CSHAP1],
        Task::Multilabel => &[SURF_MAE, ATTR_ACC],
        Task::Regression => &[SURF_MAE],
    }
}

/// Rejects metrics that do not apply to `task`.
pub fn check_applicable(metric: &str, task: Task) -> Result<()> {
    if suite_names(task).contains(&metric) {
        Ok(())
    } else {
        Err(Error::NotApplicable {
            metric: metric.into(),
            task: task.to_string(),
        })
    }
}

/// Computes the task's metric suite. Classification needs class labels.
pub fn metric_suite(out: &SurrogateOutput, task: Task, labels: &Labels, a_r: Option<f64>) -> Result<Vec<MetricResult>> {
    let n = out.len();
    let class_labels = || match labels {
        Labels::Classes(l) => Ok(l.as_slice()),
        _ => Err(Error::Parameter("classification metrics need class labels".into())),
    };
    suite_names(task)
        .iter()
        .map(|&name| {
            Ok(match name {
                SURF_MAE => MetricResult::full(name, surf_mae(out)?, n),
                SURF_EMD => MetricResult::full(name, surf_emd(out)?, n),
                TOP1 => MetricResult::full(name, top1(out)?, n),
                RANK_CORR => rank_corr(out)?,
                NORM_L1 => norm_l1(out, class_labels()?)?,
                CSHAP1 => cshap_metric(out, class_labels()?, a_r)?,
                ATTR_ACC => MetricResult::full(name, attr_acc(out, 0.0)?, n),
                _ => unreachable!("suite names are registered"),
            })
        })
        .collect()
}

/// Mean logit magnitude, the scale used for relative tolerances.
pub fn logit_scale(out: &SurrogateOutput) -> f64 {
    out.reference_logits.mapv(f64::abs).mean().unwrap_or(0.0)
}

/// Per-sample total variation, used by cross-checks.
pub fn emd_per_sample(out: &SurrogateOutput) -> Vec<f64> {
    let p = out.reference_probabilities();
    let q = out.probabilities();
    (&p - &q)
        .mapv(f64::abs)
        .sum_axis(Axis(1))
        .iter()
        .map(|s| 0.5 * s)
        .collect()
}
