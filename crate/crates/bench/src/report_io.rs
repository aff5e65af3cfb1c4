//! JSON, CSV and text emission of reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use surf_core::metrics::{is_metric_name, METRIC_NAMES};
use surf_core::report::EvalReport;
use surf_core::sanity::SanityTable;

use crate::error::{BenchError, Result};

/// JSON Schema of a single report object.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| BenchError::json(path, e))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    fs::write(path, text + "\n").map_err(|e| BenchError::io(path, e))
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn stamp(reports: &mut [EvalReport]) {
    let t = timestamp();
    for r in reports {
        r.timestamp = Some(t.clone());
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per report; metric columns in registry order, blank when absent.
/// Floats use the shortest representation that parses back to the same
/// value, as in the JSON.
pub fn reports_csv(reports: &[EvalReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["setting".to_string(), "surrogate".into(), "k".into()];
    header.extend(METRIC_NAMES.iter().map(|m| m.to_string()));
    header.extend(METRIC_NAMES.iter().map(|m| format!("{m}_std")));
    header.extend(["flops", "params_learnt", "mlp_sharing", "seeds"].map(String::from));
    w.write_record(&header).unwrap();
    for r in reports {
        let mut row = vec![
            r.setting.clone(),
            r.surrogate.clone(),
            r.k.map(|k| k.to_string()).unwrap_or_default(),
        ];
        row.extend(METRIC_NAMES.iter().map(|m| fmt_opt(r.metric(m))));
        row.extend(METRIC_NAMES.iter().map(|m| fmt_opt(r.metric_std.get(*m).copied())));
        row.push(r.flops.to_string());
        row.push(r.params_learnt.to_string());
        row.push(r.mlp_sharing.clone().unwrap_or_default());
        row.push(r.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "));
        w.write_record(&row).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn write_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    fs::write(path, reports_csv(reports)).map_err(|e| BenchError::io(path, e))
}

fn expect(cond: bool, msg: &str) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

/// Structural check of one report object against [`REPORT_SCHEMA`].
pub fn validate_report_value(v: &Value) -> std::result::Result<(), String> {
    let o = v.as_object().ok_or("report is not an object")?;
    expect(
        o.get("setting").is_some_and(Value::is_string),
        "setting must be a string",
    )?;
    expect(
        o.get("surrogate").is_some_and(Value::is_string),
        "surrogate must be a string",
    )?;
    expect(
        o.get("flops").is_some_and(Value::is_u64),
        "flops must be a non-negative integer",
    )?;
    expect(
        o.get("params_learnt").is_some_and(Value::is_u64),
        "params_learnt must be a non-negative integer",
    )?;
    let seeds = o
        .get("seeds")
        .and_then(Value::as_array)
        .ok_or("seeds must be an array")?;
    expect(seeds.iter().all(Value::is_u64), "seeds must be integers")?;
    let versions = o
        .get("versions")
        .and_then(Value::as_object)
        .ok_or("versions must be an object")?;
    expect(versions.values().all(Value::is_string), "versions must map to strings")?;
    for key in ["metrics", "metric_std"] {
        if let Some(m) = o.get(key) {
            let m = m.as_object().ok_or(format!("{key} must be an object"))?;
            for (name, val) in m {
                expect(is_metric_name(name), &format!("unregistered metric `{name}`"))?;
                expect(val.is_number(), &format!("{key}.{name} must be a number"))?;
            }
        } else if key == "metrics" {
            return Err("metrics is required".into());
        }
    }
    if let Some(k) = o.get("k") {
        expect(k.is_u64(), "k must be an integer")?;
    }
    Ok(())
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

/// Aligned text rendering of a sanity table.
pub fn sanity_text(t: &SanityTable) -> String {
    let header = [
        "setting",
        "surrogate",
        "top1",
        "rank_corr",
        "surf_mae",
        "surf_emd",
        "norm_l1",
        "cshap1",
        "flops",
        "params",
    ];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in &t.rows {
        rows.push(vec![
            r.setting.clone(),
            r.surrogate.clone(),
            cell(r.metric("top1"), 1),
            cell(r.metric("rank_corr"), 2),
            cell(r.metric("surf_mae"), 2),
            cell(r.metric("surf_emd"), 3),
            cell(r.metric("norm_l1"), 2),
            cell(r.metric("cshap1"), 2),
            r.flops.to_string(),
            r.params_learnt.to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap())
        .collect();
    let mut out = String::new();
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (c, w))| if j < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
    }
    let v = &t.verdict;
    let yn = |b: Option<bool>| match b {
        Some(true) => "pass",
        Some(false) => "FAIL",
        None => "n/a",
    };
    writeln!(out).unwrap();
    writeln!(out, "surf ordering:           {}", yn(Some(v.surf_ordering))).unwrap();
    writeln!(out, "ice-eval ignores alpha:  {}", yn(v.ice_blind_to_importance)).unwrap();
    writeln!(out, "cshap-eval imperfect:    {}", yn(v.cshap_imperfect)).unwrap();
    for n in &v.notes {
        writeln!(out, "  note: {n}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use surf_core::metrics::MetricResult;

    fn report() -> EvalReport {
        let mut r = EvalReport::new(
            "oracle",
            "surf",
            &[MetricResult {
                name: "surf_mae".into(),
                value: Some(0.1 + 0.2),
                n_used: 1,
                n_excluded: 0,
                reason: None,
            }],
        );
        r.seeds = vec![3];
        r.versions = crate::pipeline::versions();
        r
    }

    #[test]
    fn csv_and_json_agree_exactly() {
        let r = report();
        let csv = reports_csv(std::slice::from_ref(&r));
        let mut rd = csv::Reader::from_reader(csv.as_bytes());
        let rec = rd.records().next().unwrap().unwrap();
        let col = rd.headers().unwrap().iter().position(|h| h == "surf_mae").unwrap();
        let from_csv: f64 = rec[col].parse().unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(from_csv, json["metrics"]["surf_mae"].as_f64().unwrap());
        assert_eq!(from_csv, 0.1 + 0.2);
    }

    #[test]
    fn schema_check() {
        let mut v = serde_json::to_value(report()).unwrap();
        validate_report_value(&v).unwrap();
        v["metrics"]["accuracy"] = 1.0.into();
        assert!(validate_report_value(&v).is_err());
        let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
        assert_eq!(schema["type"], "object");
    }
}
