//! Monte Carlo engines for the occupancy counts.

pub mod balls;
pub mod campaign;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genweights::{GenerationChain, GenerationWeights};
use crate::moments::MomentTable;

pub use balls::{simulate_balls, simulate_balls_checkpoints, simulate_poissonized_balls};
pub use campaign::{run_ball_campaign, run_tree_campaign, CampaignResult, CampaignSpec};
pub use tree::{simulate_hitting_times, HittingTimes, TreeSimulator};

/// Counts `K^(j)` at times `e^(T+u)` for one replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyPath {
    pub t_center: f64,
    pub u_grid: Vec<f64>,
    /// `counts[j-1][k]` is the generation-`j` count at `u_grid[k]`.
    pub counts: Vec<Vec<u64>>,
    /// Index of the replica's random stream under the campaign seed.
    pub replica: u64,
}

impl OccupancyPath {
    pub fn j_max(&self) -> usize {
        self.counts.len()
    }
}

/// Evaluates hit times on the log-time grid.
pub fn occupancy_counts(times: &HittingTimes, t_center: f64, u_grid: &[f64], replica: u64) -> Result<OccupancyPath> {
    if u_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Domain("u grid must be sorted".into()));
    }
    if let Some(&u_max) = u_grid.last() {
        let t_max = (t_center + u_max).exp();
        if t_max > times.horizon() * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "grid reaches t = {t_max:e} beyond the simulated horizon {:e}",
                times.horizon()
            )));
        }
    }
    let counts = (1..=times.j_max())
        .map(|j| {
            let mut ts: Vec<f64> = times.hits(j).iter().map(|h| h.1).collect();
            ts.sort_unstable_by(f64::total_cmp);
            u_grid
                .iter()
                .map(|u| ts.partition_point(|&t| t <= (t_center + u).exp()) as u64)
                .collect()
        })
        .collect();
    Ok(OccupancyPath {
        t_center,
        u_grid: u_grid.to_vec(),
        counts,
        replica,
    })
}

/// Upper bound, per generation, on the expected number of dropped boxes hit
/// by `e^(T + u_max)`.
pub fn missed_box_bound(chain: &GenerationChain, t_center: f64, u_max: f64) -> Vec<f64> {
    let t = (t_center + u_max).exp();
    chain.levels().iter().map(|g| t * g.tail_mass()).collect()
}

/// `G_r = -ln p_r - ln T_r` for every hit box of `gw`'s generation.
pub fn gumbel_transform(times: &HittingTimes, gw: &GenerationWeights) -> Vec<f64> {
    let lw = gw.log_weights();
    times
        .hits(gw.generation())
        .iter()
        .map(|&(k, t)| lw[k as usize] - t.ln())
        .collect()
}

/// `(K^(j)_{e^(T+u)} - Phi_j(e^(T+u))) / sqrt(Var K^(j)_{e^T})`, with
/// `tables[j-1]` holding generation `j`.
pub fn normalize_path(path: &OccupancyPath, tables: &[MomentTable]) -> Result<Vec<Vec<f64>>> {
    if tables.len() < path.j_max() {
        return Err(Error::Shape {
            expected: path.j_max(),
            got: tables.len(),
        });
    }
    path.counts
        .iter()
        .zip(tables)
        .map(|(row, table)| {
            let var = table.var_at(path.t_center.exp())?;
            if !(var >= 1e-12) {
                return Err(Error::DegenerateNormalization(var));
            }
            let sd = var.sqrt();
            row.iter()
                .zip(&path.u_grid)
                .map(|(&k, u)| Ok((k as f64 - table.phi_at((path.t_center + u).exp())?) / sd))
                .collect()
        })
        .collect()
}

pub fn normalize_paths(paths: &[OccupancyPath], tables: &[MomentTable]) -> Result<Vec<Vec<Vec<f64>>>> {
    paths.iter().map(|p| normalize_path(p, tables)).collect()
}
