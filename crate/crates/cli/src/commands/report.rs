use std::fmt::Write as _;
use std::path::PathBuf;

use genrl::evalmetrics::CorrelationReport;

use super::eval::ReportFile;
use crate::config::{self, ReportConfig};
use crate::failure::Failure;
use crate::manifest::Run;
use crate::Common;

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into())
}

/// Writes `report.md`: per-model metric table and the correlation summary.
pub fn run(common: &Common) -> Result<(), Failure> {
    let base = common.config.as_deref();
    let cfg: ReportConfig = config::load(base)?;
    if cfg.correlation.as_os_str().is_empty() {
        return Err(Failure::Config("`correlation` must name a correlation.json".into()));
    }
    let mut run = Run::start("report", "report", base, &common.out)?;
    let corr: CorrelationReport = run.read_json(&config::resolve(base, &cfg.correlation))?;
    let report_paths: Vec<PathBuf> = if cfg.reports.is_empty() {
        vec![]
    } else {
        config::expand(base, &cfg.reports, ".report.json")?
    };
    let mut reports = Vec::new();
    for p in &report_paths {
        reports.push(run.read_json::<ReportFile>(p)?.report);
    }

    let mut md = String::from("# Metric summary\n\n");
    if !reports.is_empty() {
        let cols: Vec<&str> = reports[0].scalars().iter().map(|(n, _)| *n).collect();
        let _ = writeln!(md, "| model | {} |", cols.join(" | "));
        let _ = writeln!(md, "|---|{}", "---|".repeat(cols.len()));
        for r in &reports {
            let s = r.scalars();
            let vals: Vec<String> = cols
                .iter()
                .map(|c| fmt_opt(s.iter().find(|(n, _)| n == c).map(|(_, v)| *v)))
                .collect();
            let _ = writeln!(md, "| {} | {} |", r.model_id, vals.join(" | "));
        }
        md.push('\n');
    }
    md.push_str("## Correlation with policy label\n\n| metric | n | Pearson r | p-value | note |\n|---|---|---|---|---|\n");
    for s in &corr.summary {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} |",
            s.metric,
            s.n,
            fmt_opt(s.pearson_r),
            fmt_opt(s.p_value),
            s.flag.as_deref().unwrap_or("")
        );
    }
    run.write_bytes("report.md", md.as_bytes())?;
    run.finish(&cfg, 0)?;
    println!("report: report.md");
    Ok(())
}
