//! Batch execution of independent build runs — data-parallel over rayon by
//! default, with a sequential fallback when the `parallel` feature is off —
//! plus the scaling-benchmark helpers shared by the CLI and the criterion
//! suite.
//!
//! Parallelism never touches a single run: each simulation is strictly
//! sequential. Only whole runs are distributed, and results always come
//! back in input order, so both execution paths produce identical output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{gen_rough_disc, CellCoord, Field, GridError};
use crate::procedures::{build_fort, BuildConfig, BuildError, BuildOutcome};

/// One unit of batch work: a field and the robot's starting cell.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub field: Field,
    pub start: CellCoord,
}

#[derive(Debug, Error)]
pub enum BatchError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Build(#[from] BuildError),
}

/// Runs every spec in order on the current thread.
pub fn run_batch(specs: &[RunSpec], cfg: BuildConfig) -> Vec<Result<BuildOutcome, BuildError>> {
    specs
        .iter()
        .map(|s| build_fort(&s.field, s.start, cfg))
        .collect()
}

/// Runs the specs across the rayon thread pool. Results keep the input
/// order, so the output is indistinguishable from [`run_batch`].
#[cfg(feature = "parallel")]
pub fn run_batch_parallel(
    specs: &[RunSpec],
    cfg: BuildConfig,
) -> Vec<Result<BuildOutcome, BuildError>> {
    use rayon::prelude::*;
    specs
        .par_iter()
        .map(|s| build_fort(&s.field, s.start, cfg))
        .collect()
}

/// Parallel when the feature allows it, sequential otherwise.
pub fn run_batch_auto(
    specs: &[RunSpec],
    cfg: BuildConfig,
) -> Vec<Result<BuildOutcome, BuildError>> {
    #[cfg(feature = "parallel")]
    {
        run_batch_parallel(specs, cfg)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch(specs, cfg)
    }
}

/// Smallest legal brick count for a rough disc of radius `r`: the full
/// Manhattan ball.
pub fn rough_disc_min_size(r: i64) -> u64 {
    (2 * r * r + 2 * r + 1) as u64
}

/// One past the largest legal brick count for a rough disc of radius `r`.
pub fn rough_disc_size_end(r: i64) -> u64 {
    rough_disc_min_size(r) + (2 * r + 1) as u64
}

/// One scaling measurement: a rough disc built to completion.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BenchRow {
    pub radius: i64,
    pub z: u64,
    pub steps: u64,
    pub steps_per_z2: f64,
}

/// Builds one rough disc per radius (or, with `all_sizes`, one per legal
/// size) with the robot starting at the disc centre, and reports the clock
/// spent on each.
pub fn bench_rough_discs(
    radii: impl IntoIterator<Item = i64>,
    all_sizes: bool,
    seed: u64,
) -> Result<Vec<BenchRow>, BatchError> {
    let mut keys = Vec::new();
    let mut specs = Vec::new();
    for r in radii {
        let sizes = if all_sizes {
            rough_disc_min_size(r)..rough_disc_size_end(r)
        } else {
            rough_disc_min_size(r)..rough_disc_min_size(r) + 1
        };
        for z in sizes {
            keys.push((r, z));
            specs.push(RunSpec {
                field: gen_rough_disc(r, z, seed)?,
                start: CellCoord::new(0, 0),
            });
        }
    }
    let cfg = BuildConfig {
        check: crate::procedures::CheckLevel::Off,
        record_trace: false,
        frame_every: None,
    };
    let mut rows = Vec::with_capacity(keys.len());
    for ((radius, z), result) in keys.into_iter().zip(run_batch_auto(&specs, cfg)) {
        let outcome = result?;
        let steps = outcome.stats.total_clock;
        rows.push(BenchRow {
            radius,
            z,
            steps,
            steps_per_z2: steps as f64 / (z * z) as f64,
        });
    }
    Ok(rows)
}

/// Least-squares slope of ln(steps) against ln(z).
pub fn loglog_slope(rows: &[BenchRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.z as f64).ln(), (r.steps.max(1) as f64).ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
