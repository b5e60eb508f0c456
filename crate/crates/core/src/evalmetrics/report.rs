//! Metric reports for single models and the metric/label correlation table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dipr::{dipr, DimLink, DiprConfig};
use super::dwpr::{dwpr, DwprConfig, DwprResult};
use super::knn::{precision_recall, PrConfig};
use super::l3::{l3, L3Config};
use super::pearson::{pearson, DEFAULT_PERMUTATIONS};
use crate::error::{Error, Result};
use crate::genmodels::GenerativeModel;
use crate::numkit::RngStream;
use crate::trajenv::{Environment, TrajectoryDataset};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub pr: PrConfig,
    pub dipr: DiprConfig,
    pub dwpr: DwprConfig,
    pub l3: L3Config,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.pr.validate()?;
        self.dipr.validate()?;
        self.dwpr.validate()?;
        self.l3.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSelection {
    pub pr: bool,
    pub dipr: bool,
    pub dwpr: bool,
    pub l3: bool,
}

impl MetricSelection {
    pub fn all() -> Self {
        Self {
            pr: true,
            dipr: true,
            dwpr: true,
            l3: true,
        }
    }

    /// Comma-separated subset of `pr, dipr, dwpr, l3`.
    pub fn parse(list: &str) -> Result<Self> {
        let mut s = Self {
            pr: false,
            dipr: false,
            dwpr: false,
            l3: false,
        };
        for name in list.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            match name {
                "pr" => s.pr = true,
                "dipr" => s.dipr = true,
                "dwpr" => s.dwpr = true,
                "l3" => s.l3 = true,
                "all" => s = Self::all(),
                other => return Err(Error::Config(format!("unknown metric '{other}'"))),
            }
        }
        if !(s.pr || s.dipr || s.dwpr || s.l3) {
            return Err(Error::Config("no metrics selected".into()));
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dipr_per_dim: Option<Vec<DimLink>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dwpr: Option<DwprResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l3_ridge_fallbacks: Option<usize>,
    pub config: EvalConfig,
    pub seed: u64,
}

impl MetricReport {
    /// Scalar metrics in a fixed order, for the flat CSV and correlation.
    pub fn scalars(&self) -> Vec<(&'static str, f64)> {
        let mut v = Vec::new();
        let mut push = |name, x: Option<f64>| {
            if let Some(x) = x {
                v.push((name, x));
            }
        };
        push("precision", self.precision);
        push("recall", self.recall);
        push("dip", self.dip);
        push("dir", self.dir);
        push("dwpr_delta1", self.dwpr.as_ref().map(|d| d.delta1));
        push("dwpr_delta_avg", self.dwpr.as_ref().map(|d| d.delta_avg));
        push("l3", self.l3);
        v
    }
}

fn draw_rows(total: usize, n: usize, rng: &RngStream) -> Vec<usize> {
    let mut r = rng.rng();
    if total >= n {
        r.permutation(total)[..n].to_vec()
    } else {
        (0..n).map(|_| r.below(total)).collect()
    }
}

/// Runs the selected metrics; each metric uses its own named child stream of
/// `seed`, so selecting a subset does not change the values.
pub fn evaluate(
    model_id: &str,
    model: &GenerativeModel,
    env: &Environment,
    dataset: &TrajectoryDataset,
    config: &EvalConfig,
    selection: MetricSelection,
    seed: u64,
) -> Result<MetricReport> {
    config.validate()?;
    let root = RngStream::new(seed);
    let mut report = MetricReport {
        model_id: model_id.to_string(),
        precision: None,
        recall: None,
        dip: None,
        dir: None,
        dipr_per_dim: None,
        dwpr: None,
        l3: None,
        l3_ridge_fallbacks: None,
        config: config.clone(),
        seed,
    };
    if selection.pr {
        let s = root.named("pr");
        let real = dataset
            .trajectories
            .select_rows(&draw_rows(dataset.len(), config.pr.n_real, &s.child(0)));
        let (_, gen) = model.sample(config.pr.n_gen, &mut s.child(1).rng())?;
        let pr = precision_recall(&real, &gen, config.pr.k)?;
        report.precision = Some(pr.precision);
        report.recall = Some(pr.recall);
    }
    if selection.dipr {
        let r = dipr(model, env, dataset, &config.dipr, &root.named("dipr"))?;
        report.dip = Some(r.dip);
        report.dir = Some(r.dir);
        report.dipr_per_dim = Some(r.per_dim);
    }
    if selection.dwpr {
        report.dwpr = Some(dwpr(model, &config.dwpr, &root.named("dwpr"))?);
    }
    if selection.l3 {
        let r = l3(model, env, &config.l3, &root.named("l3"))?;
        report.l3 = Some(r.mean_test_mse);
        report.l3_ridge_fallbacks = Some(r.ridge_fallbacks);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub model_id: String,
    pub metric: String,
    pub value: f64,
    pub label: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub metric: String,
    pub n: usize,
    pub pearson_r: Option<f64>,
    pub p_value: Option<f64>,
    /// Set when the correlation is undefined (e.g. a constant column).
    pub flag: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
    pub summary: Vec<CorrelationSummary>,
}

/// Pearson correlation of each scalar metric with the model labels.
/// Reports without a label are skipped.
pub fn correlate(
    reports: &[MetricReport],
    labels: &BTreeMap<String, f64>,
    permutations: Option<usize>,
    rng: &RngStream,
) -> Result<CorrelationReport> {
    let permutations = permutations.unwrap_or(DEFAULT_PERMUTATIONS);
    let mut columns: BTreeMap<&'static str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut order: Vec<&'static str> = Vec::new();
    let mut out = CorrelationReport::default();
    for rep in reports {
        let Some(&label) = labels.get(&rep.model_id) else {
            continue;
        };
        for (name, value) in rep.scalars() {
            if !columns.contains_key(name) {
                order.push(name);
            }
            let col = columns.entry(name).or_default();
            col.0.push(value);
            col.1.push(label);
            out.rows.push(CorrelationRow {
                model_id: rep.model_id.clone(),
                metric: name.to_string(),
                value,
                label,
            });
        }
    }
    for name in order {
        let (xs, ys) = &columns[name];
        let summary = match pearson(xs, ys, permutations, &mut rng.named(name).rng()) {
            Ok(p) => CorrelationSummary {
                metric: name.to_string(),
                n: xs.len(),
                pearson_r: Some(p.r),
                p_value: Some(p.p_value),
                flag: None,
            },
            Err(e @ (Error::UndefinedCorrelation(_) | Error::Contract(_))) => CorrelationSummary {
                metric: name.to_string(),
                n: xs.len(),
                pearson_r: None,
                p_value: None,
                flag: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        };
        out.summary.push(summary);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(id: &str, recall: f64, dir: f64) -> MetricReport {
        MetricReport {
            model_id: id.into(),
            precision: None,
            recall: Some(recall),
            dip: None,
            dir: Some(dir),
            dipr_per_dim: None,
            dwpr: None,
            l3: None,
            l3_ridge_fallbacks: None,
            config: EvalConfig::default(),
            seed: 0,
        }
    }

    #[test]
    fn selection_parsing() {
        let s = MetricSelection::parse("pr").unwrap();
        assert!(s.pr && !s.dipr && !s.dwpr && !s.l3);
        assert!(MetricSelection::parse("bogus").is_err());
    }

    #[test]
    fn identical_column_and_constant_column() {
        let reports: Vec<_> = (0..6).map(|i| rep(&format!("m{i}"), i as f64 * 0.1, 0.5)).collect();
        let labels: BTreeMap<String, f64> = (0..6).map(|i| (format!("m{i}"), i as f64 * 0.1)).collect();
        let c = correlate(&reports, &labels, Some(999), &RngStream::new(0)).unwrap();
        let recall = c.summary.iter().find(|s| s.metric == "recall").unwrap();
        assert!((recall.pearson_r.unwrap() - 1.0).abs() < 1e-12);
        assert!(recall.p_value.unwrap() < 0.01);
        let dir = c.summary.iter().find(|s| s.metric == "dir").unwrap();
        assert!(dir.pearson_r.is_none() && dir.flag.is_some());
    }
}
