use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use genrl::evalmetrics::{evaluate, MetricReport, MetricSelection};

use crate::config::{self, EvalFileConfig};
use crate::failure::Failure;
use crate::manifest::Run;
use crate::Common;

/// Report file layout: the metric report plus the producing manifest.
#[derive(Serialize, serde::Deserialize)]
pub struct ReportFile {
    pub manifest: String,
    #[serde(flatten)]
    pub report: MetricReport,
}

const COLUMNS: [&str; 7] = ["precision", "recall", "dip", "dir", "dwpr_delta1", "dwpr_delta_avg", "l3"];

/// Flat table with one row per model; only metrics present in some report
/// get a column.
fn metrics_csv(reports: &[MetricReport]) -> Result<Vec<u8>, Failure> {
    let present: BTreeSet<&str> = reports.iter().flat_map(|r| r.scalars().into_iter().map(|(n, _)| n)).collect();
    let cols: Vec<&str> = COLUMNS.iter().copied().filter(|c| present.contains(c)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model_id"];
    header.extend(&cols);
    w.write_record(&header)?;
    for r in reports {
        let scalars = r.scalars();
        let mut row = vec![r.model_id.clone()];
        for c in &cols {
            row.push(
                scalars
                    .iter()
                    .find(|(n, _)| n == c)
                    .map(|(_, v)| v.to_string())
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Failure::Other(anyhow::anyhow!("{e}")))
}

/// Writes `<id>.report.json` per model and `metrics.csv`.
pub fn run(common: &Common) -> Result<(), Failure> {
    let base = common.config.as_deref();
    let mut cfg: EvalFileConfig = config::load(base)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.metrics.validate()?;
    let selection = match &common.metrics {
        Some(list) => MetricSelection::parse(list)?,
        None => MetricSelection::all(),
    };
    let model_paths = config::expand(base, &cfg.models, ".model.json")?;
    let mut run = Run::start("eval", "eval", base, &common.out)?;
    let dataset = super::load_dataset(&mut run, &config::resolve(base, &cfg.dataset))?;
    let mut models = Vec::new();
    for p in &model_paths {
        models.push((super::stem(p, ".model.json"), super::load_model(&mut run, p)?));
    }
    let env = dataset.env().clone();
    let reports: Vec<Result<MetricReport, Failure>> = super::pool(common.jobs)?.install(|| {
        models
            .par_iter()
            .map(|(id, m)| Ok(evaluate(id, m, &env, &dataset, &cfg.metrics, selection, cfg.seed)?))
            .collect()
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>, _>>()?;
    for r in &reports {
        let file = ReportFile {
            manifest: run.manifest_name().to_string(),
            report: r.clone(),
        };
        run.write_json(&format!("{}.report.json", r.model_id), &file)?;
        let summary: Vec<String> = r.scalars().iter().map(|(n, v)| format!("{n}={v:.4}")).collect();
        println!("eval: {} {}", r.model_id, summary.join(" "));
    }
    run.write_bytes("metrics.csv", &metrics_csv(&reports)?)?;

    #[derive(Serialize)]
    struct Echo<'a> {
        #[serde(flatten)]
        config: &'a EvalFileConfig,
        selection: MetricSelection,
    }
    run.finish(&Echo { config: &cfg, selection }, cfg.seed)?;
    Ok(())
}
