use std::collections::BTreeMap;

use serde::Serialize;

use genrl::evalmetrics::{correlate, CorrelationReport};
use genrl::numkit::RngStream;

use super::eval::ReportFile;
use super::train_policy::ModelLabel;
use crate::config::{self, CorrelateConfig};
use crate::failure::Failure;
use crate::manifest::Run;
use crate::Common;

#[derive(Serialize)]
struct CorrelationFile<'a> {
    manifest: &'a str,
    #[serde(flatten)]
    report: &'a CorrelationReport,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    metric: &'a str,
    n: usize,
    pearson_r: Option<f64>,
    p_value: Option<f64>,
    flag: &'a str,
}

/// Writes `correlation.csv` (one row per metric), `correlation_rows.csv`
/// (the paired values) and `correlation.json`. Metrics whose correlation is
/// undefined get a flagged row rather than an error.
pub fn run(common: &Common) -> Result<(), Failure> {
    let base = common.config.as_deref();
    let mut cfg: CorrelateConfig = config::load(base)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if cfg.permutations == 0 {
        return Err(Failure::Config("permutations must be positive".into()));
    }
    let report_paths = config::expand(base, &cfg.reports, ".report.json")?;
    let label_paths = config::expand(base, &cfg.labels, ".label.json")?;
    let mut run = Run::start("correlate", "correlation", base, &common.out)?;
    let mut reports = Vec::new();
    for p in &report_paths {
        reports.push(run.read_json::<ReportFile>(p)?.report);
    }
    let mut labels = BTreeMap::new();
    for p in &label_paths {
        let l: ModelLabel = run.read_json(p)?;
        labels.insert(l.model_id, l.label);
    }
    let missing: Vec<&str> = reports
        .iter()
        .filter(|r| !labels.contains_key(&r.model_id))
        .map(|r| r.model_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Failure::Missing(format!("no label for {}", missing.join(", "))));
    }
    let result = correlate(&reports, &labels, Some(cfg.permutations), &RngStream::new(cfg.seed))?;

    let summary: Vec<SummaryRow> = result
        .summary
        .iter()
        .map(|s| SummaryRow {
            metric: &s.metric,
            n: s.n,
            pearson_r: s.pearson_r,
            p_value: s.p_value,
            flag: s.flag.as_deref().unwrap_or(""),
        })
        .collect();
    run.write_csv("correlation.csv", &summary)?;
    run.write_csv("correlation_rows.csv", &result.rows)?;
    let name = run.manifest_name().to_string();
    run.write_json(
        "correlation.json",
        &CorrelationFile {
            manifest: &name,
            report: &result,
        },
    )?;
    for s in &result.summary {
        match (s.pearson_r, s.p_value) {
            (Some(r), Some(p)) => println!("correlate: {} r={r:.4} p={p:.4} (n={})", s.metric, s.n),
            _ => println!("correlate: {} undefined ({})", s.metric, s.flag.as_deref().unwrap_or("")),
        }
    }
    run.finish(&cfg, cfg.seed)?;
    Ok(())
}
