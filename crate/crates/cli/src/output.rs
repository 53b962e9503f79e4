//! `estimates.csv`, `summary.json` and `manifest.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{Context, Result};
use enrt_core::analysis::SensitivityPoint;
use enrt_core::sim::ReplicationReport;
use enrt_core::Estimate;
use serde::Serialize;

/// 17 significant digits, enough to round-trip an f64.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// One line of `estimates.csv`: an estimate, or a failed point/draw.
pub struct Row {
    pub index: usize,
    pub params: BTreeMap<String, f64>,
    pub estimate: Option<Estimate>,
    /// PBA only: the value entering the summaries.
    pub value: Option<f64>,
    pub error: Option<String>,
}

impl Row {
    pub fn ok(index: usize, estimate: Estimate) -> Self {
        Self {
            index,
            params: estimate.params.clone(),
            estimate: Some(estimate),
            value: None,
            error: None,
        }
    }

    pub fn failed(index: usize, point: &SensitivityPoint, error: String) -> Self {
        let mut params: BTreeMap<String, f64> = point
            .model
            .params()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        params.insert("kappa".into(), point.kappa);
        if let Some(d) = point.delta {
            params.insert("delta".into(), d);
        }
        Self {
            index,
            params,
            estimate: None,
            value: None,
            error: Some(error),
        }
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

/// Fixed columns, then the union of parameter names in name order.
pub fn write_estimates(path: &Path, seed: u64, rows: &[Row], with_value: bool) -> Result<()> {
    let names: BTreeSet<&str> = rows
        .iter()
        .flat_map(|r| r.params.keys().map(String::as_str))
        .collect();
    let mut w = writer(path)?;
    let mut header = vec![
        "seed", "index", "estimand", "method", "point", "variance", "ci_low", "ci_high", "level",
    ];
    if with_value {
        header.push("value");
    }
    header.extend(names.iter().copied());
    header.extend(["warnings", "error"]);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![seed.to_string(), r.index.to_string()];
        match &r.estimate {
            Some(e) => rec.extend([
                e.estimand.to_string(),
                e.method.to_string(),
                num(e.point),
                opt(e.variance),
                opt(e.ci_low),
                opt(e.ci_high),
                num(e.level),
            ]),
            None => rec.extend(std::iter::repeat_n(String::new(), 7)),
        }
        if with_value {
            rec.push(opt(r.value));
        }
        rec.extend(names.iter().map(|n| opt(r.params.get(*n).copied())));
        let warnings = r.estimate.as_ref().map(|e| {
            e.warnings
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ")
        });
        rec.push(warnings.unwrap_or_default());
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per scenario and estimator; bias, coverage and SD/SE first.
pub fn write_report(path: &Path, seed: u64, reports: &[(String, ReplicationReport)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "seed",
        "scenario",
        "estimand",
        "specification",
        "augmented",
        "bias",
        "coverage",
        "sd_se",
        "truth",
        "mean",
        "mc_se",
        "sd",
        "mean_se",
        "reps",
    ])?;
    for (label, rep) in reports {
        for r in &rep.rows {
            let truth = match r.estimand {
                enrt_core::estimators::Estimand::De => rep.truths.de,
                _ => rep.truths.ie,
            };
            w.write_record([
                seed.to_string(),
                label.clone(),
                r.estimand.to_string(),
                r.specification.to_string(),
                if r.augmented { "TRUE" } else { "FALSE" }.to_string(),
                num(r.bias),
                num(r.coverage),
                num(r.sd_se),
                num(truth),
                num(r.mean),
                num(r.mc_se),
                num(r.sd),
                num(r.mean_se),
                rep.reps.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
