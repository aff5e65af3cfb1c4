//! Faithfulness as a function of the number of concepts.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use surf_core::metrics::{SURF_EMD, SURF_MAE};
use surf_core::model::{EmbeddingSet, LinearHead};
use surf_core::report::EvalReport;
use surf_core::surrogates::SurrogateSpec;

use crate::error::{BenchError, Result};
use crate::pipeline::{evaluate_bundle, fit_explanation, FitOptions, MethodSpec};
use crate::report_io::{reports_csv, write_json};
use crate::svg::{line_chart, Panel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub method: String,
    pub points: Vec<SweepPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot: Option<String>,
    /// Set when a K failed; `points` then holds the values before it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl SweepResult {
    pub fn series(&self, metric: &str) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| p.report.metric(metric).map(|v| (p.k as f64, v)))
            .collect()
    }
}

/// SURF evaluation of `method` at every K in `ks` (strictly increasing).
/// A failing K stops the sweep and is recorded in `failure`.
pub fn run_sweep(
    train: &EmbeddingSet,
    test: &EmbeddingSet,
    head: &LinearHead,
    method: MethodSpec,
    ks: &[usize],
    opts: &FitOptions,
    seed: u64,
) -> Result<SweepResult> {
    if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::Usage(format!(
            "K values must be strictly increasing, got {ks:?}"
        )));
    }
    let mut result = SweepResult {
        method: method.to_string(),
        points: Vec::with_capacity(ks.len()),
        plot: None,
        failure: None,
    };
    for &k in ks {
        let run = fit_explanation(method, k, opts, seed, train, head)
            .and_then(|b| evaluate_bundle(&b, train, test, head, &[SurrogateSpec::Surf]));
        match run {
            Ok(mut r) => result.points.push(SweepPoint { k, report: r.remove(0) }),
            Err(e) => {
                tracing::error!(k, "sweep stopped: {e}");
                result.failure = Some(format!("K = {k}: {e}"));
                break;
            }
        }
    }
    Ok(result)
}

pub fn sweep_svg(result: &SweepResult) -> String {
    line_chart(
        &format!("SURF faithfulness vs number of concepts ({})", result.method),
        "K",
        &result.method,
        &[
            Panel {
                title: "SURF_EMD",
                y_label: "surf_emd",
                points: result.series(SURF_EMD),
            },
            Panel {
                title: "SURF_MAE",
                y_label: "surf_mae",
                points: result.series(SURF_MAE),
            },
        ],
    )
}

/// Writes `sweep.json`, `sweep.csv` and `sweep.svg` into `dir`.
pub fn write_sweep(dir: &Path, result: &mut SweepResult) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let svg = dir.join("sweep.svg");
    fs::write(&svg, sweep_svg(result)).map_err(|e| BenchError::io(&svg, e))?;
    result.plot = Some("sweep.svg".into());
    let reports: Vec<EvalReport> = result.points.iter().map(|p| p.report.clone()).collect();
    let csv = dir.join("sweep.csv");
    fs::write(&csv, reports_csv(&reports)).map_err(|e| BenchError::io(&csv, e))?;
    write_json(&dir.join("sweep.json"), result)
}
