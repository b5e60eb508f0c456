use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use genrl::empolicy::{train_em, CurvePoint, LatentPolicy, ValueFunction};
use genrl::numkit::RngStream;

use crate::config::{self, TrainPolicyConfig};
use crate::failure::Failure;
use crate::manifest::Run;
use crate::Common;

#[derive(Serialize, Deserialize)]
pub struct PolicyFile {
    pub manifest: String,
    pub model_id: String,
    pub seed: u64,
    pub policy: LatentPolicy,
    pub value: ValueFunction,
    pub reverts: usize,
    pub ratio_clamps: usize,
}

/// Label of one generative model: the best per-iteration mean reward over
/// all seeds' curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelLabel {
    pub manifest: String,
    pub model_id: String,
    pub label: f64,
    /// Curve files the label was taken from, relative to this file.
    pub curves: Vec<String>,
}

pub fn label_of(curves: &[Vec<CurvePoint>]) -> f64 {
    curves
        .iter()
        .flatten()
        .map(|p| p.mean_reward)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// For each model and seed writes `<id>.s<seed>.policy.json` and
/// `<id>.s<seed>.curve.csv`, then `<id>.label.json`.
///
/// Seed `s` trains from `RngStream::new(em.seed).child(s)`.
pub fn run(common: &Common) -> Result<(), Failure> {
    let base = common.config.as_deref();
    let mut cfg: TrainPolicyConfig = config::load(base)?;
    if let Some(s) = common.seed {
        cfg.em.seed = s;
    }
    cfg.em.validate()?;
    cfg.env.validate()?;
    if cfg.seeds.is_empty() {
        return Err(Failure::Config("at least one seed is required".into()));
    }
    let model_paths = config::expand(base, &cfg.models, ".model.json")?;
    let mut run = Run::start("train-policy", "policy", base, &common.out)?;
    let mut models = Vec::new();
    for p in &model_paths {
        models.push((super::stem(p, ".model.json"), super::load_model(&mut run, p)?));
    }
    let tasks: Vec<(usize, u64)> = (0..models.len())
        .flat_map(|m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let root = RngStream::new(cfg.em.seed);
    let outcomes: Vec<Result<_, Failure>> = super::pool(common.jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(m, s)| Ok(train_em(&models[m].1, &cfg.env, &cfg.em, &root.child(s))?))
            .collect()
    });
    let mut per_model: Vec<(Vec<Vec<CurvePoint>>, Vec<String>)> = vec![(vec![], vec![]); models.len()];
    for (&(m, s), outcome) in tasks.iter().zip(outcomes) {
        let out = outcome?;
        let id = &models[m].0;
        let curve_name = format!("{id}.s{s}.curve.csv");
        run.write_csv(&curve_name, &out.curve)?;
        let policy = PolicyFile {
            manifest: run.manifest_name().to_string(),
            model_id: id.clone(),
            seed: s,
            policy: out.policy,
            value: out.value,
            reverts: out.reverts,
            ratio_clamps: out.ratio_clamps,
        };
        run.write_json(&format!("{id}.s{s}.policy.json"), &policy)?;
        let last = out.curve.last().map(|p| p.mean_reward).unwrap_or(f64::NAN);
        println!("train-policy: {id} seed {s} final mean reward {last:.4}");
        per_model[m].0.push(out.curve);
        per_model[m].1.push(curve_name);
    }
    for ((id, _), (curves, names)) in models.iter().zip(per_model) {
        let label = ModelLabel {
            manifest: run.manifest_name().to_string(),
            model_id: id.clone(),
            label: label_of(&curves),
            curves: names,
        };
        println!("train-policy: {id} label {:.4}", label.label);
        run.write_json(&format!("{id}.label.json"), &label)?;
    }
    run.finish(&cfg, cfg.em.seed)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(i: usize, r: f64) -> CurvePoint {
        CurvePoint {
            iteration: i,
            mean_reward: r,
            std_reward: 0.0,
            mean_kl: 0.0,
            clamp_fraction: 0.0,
        }
    }

    #[test]
    fn label_is_max_over_all_curves() {
        let curves = vec![
            vec![point(0, -0.5), point(1, -0.2)],
            vec![point(0, -0.4), point(1, -0.1), point(2, -0.3)],
            vec![point(0, -0.9)],
        ];
        assert_eq!(label_of(&curves), -0.1);
    }
}
