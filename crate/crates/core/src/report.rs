//! Evaluation reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{is_metric_name, MetricResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Explanation setting or discovery method, e.g. `perfect` or `mcd-lite`.
    pub setting: String,
    pub surrogate: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub metrics: BTreeMap<String, f64>,
    /// Sample standard deviation over seeds, for aggregated reports.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metric_std: BTreeMap<String, f64>,
    /// Metrics that were undefined (every sample excluded).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
    /// Samples left out per metric.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub excluded: BTreeMap<String, usize>,
    pub params_learnt: u64,
    pub flops: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp_sharing: Option<String>,
    pub seeds: Vec<u64>,
    /// Toolkit and format versions that produced the report.
    #[serde(default)]
    pub versions: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl EvalReport {
    pub fn new(setting: impl Into<String>, surrogate: impl Into<String>, results: &[MetricResult]) -> Self {
        let mut r = Self {
            setting: setting.into(),
            surrogate: surrogate.into(),
            k: None,
            metrics: BTreeMap::new(),
            metric_std: BTreeMap::new(),
            undefined: Vec::new(),
            excluded: BTreeMap::new(),
            params_learnt: 0,
            flops: 0,
            mlp_sharing: None,
            seeds: Vec::new(),
            versions: BTreeMap::new(),
            timestamp: None,
        };
        for m in results {
            match m.value {
                Some(v) => {
                    r.metrics.insert(m.name.clone(), v);
                }
                None => r.undefined.push(m.name.clone()),
            }
            if m.n_excluded > 0 {
                r.excluded.insert(m.name.clone(), m.n_excluded);
            }
        }
        r
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    /// Every metric key must be registered.
    pub fn validate(&self) -> Result<()> {
        let keys = self
            .metrics
            .keys()
            .chain(self.metric_std.keys())
            .chain(self.excluded.keys())
            .chain(self.undefined.iter());
        for k in keys {
            if !is_metric_name(k) {
                return Err(Error::Invalid(format!("unregistered metric name `{k}`")));
            }
        }
        Ok(())
    }

    /// Mean and sample standard deviation over per-seed reports of the same
    /// setting and surrogate. Metrics undefined in any seed are averaged
    /// over the seeds where they are defined.
    pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport> {
        let first = reports
            .first()
            .ok_or_else(|| Error::Parameter("nothing to aggregate".into()))?;
        let mut out = first.clone();
        out.metrics.clear();
        out.metric_std.clear();
        out.undefined.clear();
        out.excluded.clear();
        out.seeds = reports.iter().flat_map(|r| r.seeds.iter().copied()).collect();
        let mut names: Vec<&String> = reports.iter().flat_map(|r| r.metrics.keys()).collect();
        names.sort();
        names.dedup();
        for name in names {
            let vals: Vec<f64> = reports.iter().filter_map(|r| r.metric(name)).collect();
            let n = vals.len() as f64;
            // shifted by the first value so identical inputs average to
            // themselves bit for bit
            let x0 = vals[0];
            let mean = x0 + vals.iter().map(|v| v - x0).sum::<f64>() / n;
            let std = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            out.metrics.insert(name.clone(), mean);
            out.metric_std.insert(name.clone(), std);
        }
        for r in reports {
            for (k, v) in &r.excluded {
                *out.excluded.entry(k.clone()).or_default() += v;
            }
            for u in &r.undefined {
                if !out.metrics.contains_key(u) && !out.undefined.contains(u) {
                    out.undefined.push(u.clone());
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(v: f64, seed: u64) -> EvalReport {
        let mut r = EvalReport::new(
            "rand-imp",
            "surf",
            &[MetricResult {
                name: "surf_mae".into(),
                value: Some(v),
                n_used: 3,
                n_excluded: 0,
                reason: None,
            }],
        );
        r.seeds = vec![seed];
        r
    }

    #[test]
    fn aggregate_mean_and_std() {
        let a = EvalReport::aggregate(&[rep(1.0, 0), rep(3.0, 1)]).unwrap();
        assert_eq!(a.metric("surf_mae"), Some(2.0));
        assert!((a.metric_std["surf_mae"] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(a.seeds, vec![0, 1]);
    }

    #[test]
    fn identical_values_average_exactly() {
        // a plain sum of ten 0.1s divided by ten is 0.09999999999999999
        let reps: Vec<_> = (0..10).map(|s| rep(0.1, s)).collect();
        let a = EvalReport::aggregate(&reps).unwrap();
        assert_eq!(a.metric("surf_mae"), Some(0.1));
        assert_eq!(a.metric_std["surf_mae"], 0.0);
    }

    #[test]
    fn rejects_unknown_metric() {
        let mut r = rep(1.0, 0);
        r.metrics.insert("accuracy".into(), 1.0);
        assert!(r.validate().is_err());
    }
}
