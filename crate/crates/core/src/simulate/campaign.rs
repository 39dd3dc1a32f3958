//! Replica campaigns. Replicas are grouped into fixed chunks, each chunk
//! accumulates on its own, and the chunk accumulators are merged in replica
//! order, so the output is the same for any number of workers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{normalize_path, occupancy_counts, simulate_balls_checkpoints, OccupancyPath, TreeSimulator};
use crate::error::{Error, Result};
use crate::genweights::GenerationChain;
use crate::moments::MomentTable;
use crate::rng::{replica_stream, Stream};
use crate::stats::MomentAccumulator;
use crate::weights::WeightModel;

/// Replicas handled by one task.
pub const CHUNK_REPLICAS: u64 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub t_center: f64,
    pub u_grid: Vec<f64>,
    pub replicas: u64,
    pub seed: u64,
    /// Worker threads; 0 means one per core.
    pub workers: usize,
}

impl CampaignSpec {
    fn validate(&self) -> Result<()> {
        if self.u_grid.is_empty() || self.u_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("u grid must be nonempty and strictly increasing".into()));
        }
        if self.replicas == 0 {
            return Err(Error::Domain("replicas must be positive".into()));
        }
        Ok(())
    }

    fn horizon(&self) -> f64 {
        (self.t_center + self.u_grid.last().unwrap()).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub paths: Vec<OccupancyPath>,
    /// Per replica, the normalized coordinates `[j][u]` flattened row-major.
    pub normalized: Vec<Vec<f64>>,
    /// Moments of the flattened normalized coordinates.
    pub accumulator: MomentAccumulator,
}

impl CampaignResult {
    /// Index of coordinate `(j, u_index)` in the flattened layout.
    pub fn coord(&self, j: usize, u_index: usize) -> usize {
        let n_u = self.paths.first().map_or(0, |p| p.u_grid.len());
        (j - 1) * n_u + u_index
    }
}

type ChunkOutput = (Vec<OccupancyPath>, Vec<Vec<f64>>, MomentAccumulator);

fn run<F>(spec: &CampaignSpec, dim: usize, tables: &[MomentTable], one: F) -> Result<CampaignResult>
where
    F: Fn(u64, &mut Stream) -> Result<OccupancyPath> + Sync,
{
    spec.validate()?;
    let chunks: Vec<(u64, u64)> = (0..spec.replicas)
        .step_by(CHUNK_REPLICAS as usize)
        .map(|s| (s, (s + CHUNK_REPLICAS).min(spec.replicas)))
        .collect();
    let work = || -> Result<Vec<ChunkOutput>> {
        chunks
            .par_iter()
            .map(|&(lo, hi)| {
                let mut paths = Vec::with_capacity((hi - lo) as usize);
                let mut normed = Vec::with_capacity((hi - lo) as usize);
                let mut acc = MomentAccumulator::new(dim);
                for rep in lo..hi {
                    let mut rng = replica_stream(spec.seed, rep);
                    let path = one(rep, &mut rng)?;
                    let z: Vec<f64> = normalize_path(&path, tables)?.into_iter().flatten().collect();
                    acc.push(&z)?;
                    normed.push(z);
                    paths.push(path);
                }
                Ok((paths, normed, acc))
            })
            .collect()
    };
    let parts = if spec.workers == 0 {
        work()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| Error::Domain(format!("cannot start {} workers: {e}", spec.workers)))?
            .install(work)?
    };
    let mut result = CampaignResult {
        paths: Vec::with_capacity(spec.replicas as usize),
        normalized: Vec::with_capacity(spec.replicas as usize),
        accumulator: MomentAccumulator::new(dim),
    };
    for (p, z, acc) in parts {
        result.paths.extend(p);
        result.normalized.extend(z);
        result.accumulator.merge(&acc)?;
    }
    Ok(result)
}

/// Poissonized scheme via coupled hitting times. `tables[j-1]` must cover
/// `e^(T+u)` and `e^T` for generation `j`.
pub fn run_tree_campaign(
    chain: &GenerationChain,
    spec: &CampaignSpec,
    tables: &[MomentTable],
) -> Result<CampaignResult> {
    let sim = TreeSimulator::new(chain)?;
    let horizon = spec.horizon();
    let dim = chain.j_max() * spec.u_grid.len();
    run(spec, dim, tables, |rep, rng| {
        let times = sim.sample(horizon, rng);
        occupancy_counts(&times, spec.t_center, &spec.u_grid, rep)
    })
}

/// Deterministic scheme: `floor(e^(T+u))` balls, normalized with the
/// Poissonized moments in `tables`.
pub fn run_ball_campaign(
    model: &WeightModel,
    j_max: usize,
    spec: &CampaignSpec,
    tables: &[MomentTable],
    budget: u64,
) -> Result<CampaignResult> {
    let checkpoints: Vec<u64> = spec
        .u_grid
        .iter()
        .map(|u| (spec.t_center + u).exp().floor() as u64)
        .collect();
    let dim = j_max * spec.u_grid.len();
    run(spec, dim, tables, |rep, rng| {
        let counts = simulate_balls_checkpoints(model, &checkpoints, j_max, budget, rng)?;
        Ok(OccupancyPath {
            t_center: spec.t_center,
            u_grid: spec.u_grid.clone(),
            counts,
            replica: rep,
        })
    })
}
