//! The `simulate` subcommand: synthetic clustered data written as CSV.

use std::path::Path;

use influence_core::models::{simulate_clustered, SimulationConfig};

use crate::error::Result;
use crate::ingest::to_csv;

pub fn write_simulated(cfg: &SimulationConfig, out: &Path) -> Result<()> {
    let data = simulate_clustered(cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, to_csv(&data)?)?;
    Ok(())
}
