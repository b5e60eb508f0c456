use rayon::prelude::*;
use serde::Serialize;

use genrl::genmodels::{train_infogan, train_vae, ModelFile, TrainAbort, TrajShape};
use genrl::numkit::Matrix;
use genrl::trajenv::CHANNELS;

use crate::config::{self, ModelKindArg, TrainModelConfig};
use crate::failure::Failure;
use crate::manifest::Run;
use crate::Common;

/// One model to train: id, latent size and the kind-specific hyperparameter.
#[derive(Clone, Debug, Serialize)]
struct Job {
    id: String,
    latent_dim: usize,
    hyper: f64,
}

/// Bytes of a finished training job, written serially afterwards so the
/// manifest order does not depend on scheduling.
struct Trained {
    model: String,
    losses: Vec<u8>,
    checkpoint: Option<String>,
    error: Option<Failure>,
}

fn default_id(kind: ModelKindArg, k: usize, hyper: f64) -> String {
    match kind {
        ModelKindArg::Vae => format!("vae_a{k}_kl{hyper}"),
        ModelKindArg::Infogan => format!("infogan_a{k}_lam{hyper}"),
    }
}

fn jobs(cfg: &TrainModelConfig) -> Vec<Job> {
    if !cfg.grid {
        let hyper = match cfg.kind {
            ModelKindArg::Vae => cfg.kl_target,
            ModelKindArg::Infogan => cfg.lambda,
        };
        let id = cfg.id.clone().unwrap_or_else(|| default_id(cfg.kind, cfg.latent_dim, hyper));
        return vec![Job {
            id,
            latent_dim: cfg.latent_dim,
            hyper,
        }];
    }
    let hypers = match cfg.kind {
        ModelKindArg::Vae => &cfg.grid_kl_targets,
        ModelKindArg::Infogan => &cfg.grid_lambdas,
    };
    let prefix = cfg.id.as_ref().map(|p| format!("{p}_")).unwrap_or_default();
    cfg.grid_latent_dims
        .iter()
        .flat_map(|&k| {
            let prefix = &prefix;
            hypers.iter().map(move |&h| Job {
                id: format!("{prefix}{}", default_id(cfg.kind, k, h)),
                latent_dim: k,
                hyper: h,
            })
        })
        .collect()
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Failure::Other(anyhow::anyhow!("{e}")))
}

fn abort<M>(a: TrainAbort<M>, to_file: impl Fn(&M) -> ModelFile) -> Result<Trained, Failure> {
    let checkpoint = match &a.checkpoint {
        Some(m) => Some(to_file(m).to_json()?),
        None => None,
    };
    Ok(Trained {
        model: String::new(),
        losses: Vec::new(),
        checkpoint,
        error: Some(a.error.into()),
    })
}

fn train_one(cfg: &TrainModelConfig, data: &Matrix, shape: TrajShape, job: &Job) -> Result<Trained, Failure> {
    match cfg.kind {
        ModelKindArg::Vae => match train_vae(data, shape, job.latent_dim, &cfg.train, &cfg.arch, job.hyper) {
            Ok((m, log)) => Ok(Trained {
                model: ModelFile::from_vae(&m).to_json()?,
                losses: csv_bytes(&log)?,
                checkpoint: None,
                error: None,
            }),
            Err(a) => abort(a, ModelFile::from_vae),
        },
        ModelKindArg::Infogan => match train_infogan(data, shape, job.latent_dim, &cfg.train, &cfg.arch, job.hyper) {
            Ok((m, log)) => Ok(Trained {
                model: ModelFile::from_infogan(&m).to_json()?,
                losses: csv_bytes(&log)?,
                checkpoint: None,
                error: None,
            }),
            Err(a) => abort(a, ModelFile::from_infogan),
        },
    }
}

/// Writes `<id>.model.json` and `<id>.loss.csv` per trained model. On a
/// numeric failure the last finite state is saved as
/// `<id>.checkpoint.model.json` and the command exits with code 3.
pub fn run(common: &Common) -> Result<(), Failure> {
    let base = common.config.as_deref();
    let mut cfg: TrainModelConfig = config::load(base)?;
    if let Some(s) = common.seed {
        cfg.train.seed = s;
    }
    cfg.train.validate()?;
    let jobs = jobs(&cfg);
    if jobs.is_empty() {
        return Err(Failure::Config("the model grid is empty".into()));
    }
    if jobs.iter().any(|j| j.latent_dim == 0) {
        return Err(Failure::Config("latent_dim must be positive".into()));
    }
    let name = if cfg.grid {
        format!("grid_{}", cfg.id.clone().unwrap_or_else(|| format!("{:?}", cfg.kind).to_lowercase()))
    } else {
        jobs[0].id.clone()
    };
    let mut run = Run::start("train-model", &name, base, &common.out)?;
    let dataset_path = config::resolve(base, &cfg.dataset);
    let mut dataset = super::load_dataset(&mut run, &dataset_path)?;
    if let Some(n) = cfg.subset {
        if n == 0 || n > dataset.len() {
            return Err(Failure::Config(format!("subset {n} out of range 1..={}", dataset.len())));
        }
        dataset = dataset.subset(&(0..n).collect::<Vec<_>>());
    }
    let shape = TrajShape::new(dataset.env().steps, CHANNELS);

    let results: Vec<Result<Trained, Failure>> = super::pool(common.jobs)?.install(|| {
        jobs.par_iter()
            .map(|j| train_one(&cfg, &dataset.trajectories, shape, j))
            .collect()
    });
    let mut first_error = None;
    for (job, res) in jobs.iter().zip(results) {
        let t = res?;
        if let Some(cp) = t.checkpoint {
            run.write_bytes(&format!("{}.checkpoint.model.json", job.id), cp.as_bytes())?;
        }
        match t.error {
            Some(e) => {
                eprintln!("train-model: {} failed: {e}", job.id);
                first_error.get_or_insert(e);
            }
            None => {
                run.write_bytes(&format!("{}.model.json", job.id), t.model.as_bytes())?;
                run.write_bytes(&format!("{}.loss.csv", job.id), &t.losses)?;
                println!("train-model: {}", job.id);
            }
        }
    }
    #[derive(Serialize)]
    struct Echo<'a> {
        #[serde(flatten)]
        config: &'a TrainModelConfig,
        jobs: &'a [Job],
        /// Adam β1 for both InfoGAN optimizers; the VAE uses the default 0.9.
        gan_beta1: f64,
    }
    run.finish(
        &Echo {
            config: &cfg,
            jobs: &jobs,
            gan_beta1: genrl::genmodels::infogan::GAN_BETA1,
        },
        cfg.train.seed,
    )?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
