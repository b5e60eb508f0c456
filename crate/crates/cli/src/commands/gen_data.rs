use genrl::numkit::RngStream;
use genrl::trajenv::gen_demos;
use serde::Serialize;

use crate::config::{self, GenDataConfig};
use crate::failure::Failure;
use crate::manifest::Run;
use crate::Common;

#[derive(Serialize)]
struct Coverage {
    manifest: String,
    cells: usize,
    covered: usize,
    total: usize,
}

/// Writes `dataset.json`, `end_states.csv` and `coverage.json`.
pub fn run(common: &Common) -> Result<(), Failure> {
    let mut cfg: GenDataConfig = config::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.env.validate()?;
    if cfg.coverage_cells == 0 {
        return Err(Failure::Config("coverage_cells must be positive".into()));
    }
    let mut run = Run::start("gen-data", "dataset", common.config.as_deref(), &common.out)?;
    let data = gen_demos(&cfg.env, cfg.count, &RngStream::new(cfg.seed), cfg.noise_scale)?;
    let covered = cfg.env.goal_region.coverage(&data.end_states, cfg.coverage_cells);
    run.write_json("dataset.json", &data)?;
    run.write_bytes("end_states.csv", data.end_states_csv().as_bytes())?;
    let coverage = Coverage {
        manifest: run.manifest_name().to_string(),
        cells: cfg.coverage_cells,
        covered,
        total: cfg.coverage_cells * cfg.coverage_cells,
    };
    run.write_json("coverage.json", &coverage)?;
    println!(
        "gen-data: {} trajectories, coverage {}/{}",
        data.len(),
        covered,
        coverage.total
    );
    run.finish(&cfg, cfg.seed)?;
    Ok(())
}
