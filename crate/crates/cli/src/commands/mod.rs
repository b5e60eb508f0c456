pub mod correlate;
pub mod eval;
pub mod gen_data;
pub mod report;
pub mod train_model;
pub mod train_policy;

use std::path::Path;

use genrl::genmodels::{GenerativeModel, ModelFile};
use genrl::trajenv::TrajectoryDataset;

use crate::failure::Failure;
use crate::manifest::Run;

pub(crate) fn pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Other(e.into()))
}

/// File name with `suffix` removed, e.g. `vae_a2.model.json` → `vae_a2`.
pub(crate) fn stem(path: &Path, suffix: &str) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(suffix).map(str::to_string).unwrap_or(name)
}

pub(crate) fn load_dataset(run: &mut Run, path: &Path) -> Result<TrajectoryDataset, Failure> {
    run.read_json(path)
}

pub(crate) fn load_model(run: &mut Run, path: &Path) -> Result<GenerativeModel, Failure> {
    let text = run.read_input(path)?;
    let file = ModelFile::from_json(&text)
        .map_err(|e| Failure::Missing(format!("{} is not a valid model file: {e}", path.display())))?;
    Ok(file.generative()?)
}
