use std::path::PathBuf;

use nested_karlin::genweights::cache::{load_or_enumerate, load_or_enumerate_certified, CacheStatus};
use nested_karlin::genweights::{
    enumerate_certified, enumerate_generation_with, rho_j_asymptotic_constant, EnumerationOptions, GenerationChain,
    GenerationWeights,
};
use nested_karlin::limit::{sample_z_whitenoise, spectral_report, GaussGrid, WhiteNoiseDiscretization};
use nested_karlin::moments::{exp_abs_sum, limit_cov, var_asymptotic, variance, MomentTable};
use nested_karlin::rng::replica_stream;
use nested_karlin::simulate::{missed_box_bound, run_ball_campaign, run_tree_campaign, CampaignResult, CampaignSpec};
use nested_karlin::stats::MomentAccumulator;
use nested_karlin::verify::{self, VerificationReport, VerifyOptions};
use nested_karlin::{HypothesisViolated, WeightModel};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, Engine, ExperimentConfig, Sampler, Truncation};
use crate::output::{num, Sink};

pub const CACHE_ENV: &str = "NESTED_KARLIN_CACHE";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] nested_karlin::Error),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
    #[error("verification failed: {}", .0.join(", "))]
    Failed(Vec<String>),
}

impl CliError {
    /// 1 for failed claims, 2 for configuration problems, 3 for errors
    /// while computing.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Run(_) | CliError::Io(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Generation `j`, deep enough for moments up to `t_max`.
fn generation(cfg: &ExperimentConfig, model: &WeightModel, j: usize, t_max: f64) -> CliResult<GenerationWeights> {
    let budget = cfg.simulate.box_budget;
    let cached = match cache_dir() {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            let (gw, status) = match cfg.truncation {
                Truncation::Eps(eps) => load_or_enumerate(&dir, model, j, eps, budget)?,
                Truncation::Tol(tol) => load_or_enumerate_certified(&dir, model, j, t_max, tol, budget)?,
            };
            log::info!(
                "generation {j}: {} boxes ({})",
                gw.len(),
                match status {
                    CacheStatus::Hit => "cache hit",
                    CacheStatus::Miss => "cache miss",
                    CacheStatus::Corrupt(_) => "cache rebuilt",
                }
            );
            Some(gw)
        }
        None => None,
    };
    if let Some(gw) = cached {
        return Ok(gw);
    }
    let opts = EnumerationOptions {
        budget,
        ancestry: false,
    };
    Ok(match cfg.truncation {
        Truncation::Eps(eps) => enumerate_generation_with(model, j, eps, opts)?,
        Truncation::Tol(tol) => enumerate_certified(model, j, t_max, tol, opts)?,
    })
}

fn max_time(cfg: &ExperimentConfig, grid: &[f64]) -> f64 {
    let t_hi = cfg.t_list.iter().copied().fold(f64::MIN, f64::max);
    let u_hi = grid.iter().copied().fold(0.0, f64::max);
    (t_hi + u_hi).exp()
}

#[derive(Serialize)]
struct AsymptoticPoint {
    #[serde(rename = "T")]
    big_t: f64,
    var: f64,
    var_asymptotic: f64,
    var_ratio: f64,
    rho_j: Option<u64>,
    rho_j_asymptotic: f64,
    rho_ratio: Option<f64>,
    exp_sum: f64,
    exp_sum_bound: f64,
    exp_sum_ratio: f64,
}

#[derive(Serialize)]
struct GenerationAsymptotics {
    j: usize,
    points: Vec<AsymptoticPoint>,
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum AsymptoticsBody {
    Ratios {
        beta: f64,
        ell: f64,
        a: f64,
        generations: Vec<GenerationAsymptotics>,
    },
    HypothesisViolated(HypothesisViolated),
}

#[derive(Serialize)]
struct AsymptoticsDoc {
    asymptotics: AsymptoticsBody,
}

pub fn cmd_moments(cfg: &ExperimentConfig) -> CliResult<Sink> {
    cfg.validate()?;
    let model = cfg.model()?;
    let grid = cfg.u_grid.points();
    let t_max = 2.0 * max_time(cfg, &grid);
    let mut sink = Sink::new(cfg)?;
    let mut times: Vec<f64> = Vec::new();
    for &big_t in &cfg.t_list {
        times.push(big_t.exp());
        times.extend(grid.iter().map(|u| (big_t + u).exp()));
    }
    let asymptotics = if cfg.moments.asymptotics {
        Some(model.asymptotics())
    } else {
        None
    };
    let mut generations = Vec::new();
    for j in 1..=cfg.j_max {
        let gw = generation(cfg, &model, j, t_max)?;
        let table = MomentTable::build(&gw, &times)?;
        let rows = (0..table.time_grid.len()).map(|i| {
            format!(
                "{},{},{},{}",
                num(table.time_grid[i]),
                num(table.phi[i]),
                num(table.var[i]),
                num(table.trunc_error_bound[i])
            )
        });
        sink.csv(&format!("moments_j{j}.csv"), "t,phi,var,trunc_bound", rows)?;
        if let Some(Ok(dh)) = &asymptotics {
            let ell = dh.ell.eval(0.0);
            let rho_c = rho_j_asymptotic_constant(dh.beta, ell, j);
            let points = cfg
                .t_list
                .iter()
                .map(|&big_t| {
                    let t = big_t.exp();
                    let var = variance(&gw, t).value;
                    let var_asym = var_asymptotic(dh.beta, ell, j, big_t);
                    let rho = gw.rho_j(t).ok();
                    let rho_asym = rho_c * big_t.powf(j as f64 * (dh.beta + 1.0));
                    let e = exp_abs_sum(&gw, cfg.moments.a, big_t);
                    AsymptoticPoint {
                        big_t,
                        var,
                        var_asymptotic: var_asym,
                        var_ratio: var / var_asym,
                        rho_j: rho,
                        rho_j_asymptotic: rho_asym,
                        rho_ratio: rho.map(|r| r as f64 / rho_asym),
                        exp_sum: e.value,
                        exp_sum_bound: e.bound,
                        exp_sum_ratio: e.value / (2.0 / (cfg.moments.a * std::f64::consts::LN_2) * var),
                    }
                })
                .collect();
            generations.push(GenerationAsymptotics { j, points });
        }
    }
    if let Some(result) = asymptotics {
        let body = match result {
            Ok(dh) => AsymptoticsBody::Ratios {
                beta: dh.beta,
                ell: dh.ell.eval(0.0),
                a: cfg.moments.a,
                generations,
            },
            Err(hv) => {
                log::warn!("asymptotic ratios skipped: {hv}");
                AsymptoticsBody::HypothesisViolated(hv)
            }
        };
        sink.json("asymptotics.json", &AsymptoticsDoc { asymptotics: body })?;
    }
    Ok(sink)
}

#[derive(Serialize)]
struct SimulationRun {
    #[serde(rename = "T")]
    big_t: f64,
    seed: u64,
    engine: Engine,
    u_grid: Vec<f64>,
    /// Label of each accumulator coordinate, `j<j>:u<u>`.
    coordinates: Vec<String>,
    /// Per generation, bound on the expected number of boxes lost to truncation.
    #[serde(skip_serializing_if = "Option::is_none")]
    missed_box_bound: Option<Vec<f64>>,
    accumulator: MomentAccumulator,
}

#[derive(Serialize)]
struct SimulationDoc {
    runs: Vec<SimulationRun>,
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> CliResult<Sink> {
    cfg.validate()?;
    let model = cfg.model()?;
    let grid = cfg.u_grid.points();
    let u_hi = grid.iter().copied().fold(0.0, f64::max);
    let mut sink = Sink::new(cfg)?;
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for (i, &big_t) in cfg.t_list.iter().enumerate() {
        let horizon = (big_t + grid.last().unwrap()).exp();
        let tables: Vec<MomentTable> = (1..=cfg.j_max)
            .map(|j| {
                let gw = generation(cfg, &model, j, 2.0 * (big_t + u_hi).exp())?;
                Ok(MomentTable::for_log_grid(&gw, big_t, &grid)?)
            })
            .collect::<CliResult<_>>()?;
        let spec = CampaignSpec {
            t_center: big_t,
            u_grid: grid.clone(),
            replicas: cfg.replicas,
            seed: cfg.seed.wrapping_add(i as u64),
            workers: cfg.workers,
        };
        let (result, missed): (CampaignResult, _) = match cfg.simulate.engine {
            Engine::Tree => {
                let chain = match cfg.truncation {
                    Truncation::Eps(eps) => {
                        GenerationChain::enumerate(&model, cfg.j_max, eps, cfg.simulate.box_budget)?
                    }
                    Truncation::Tol(tol) => {
                        GenerationChain::certified(&model, cfg.j_max, horizon, tol, cfg.simulate.box_budget)?
                    }
                };
                let missed = missed_box_bound(&chain, big_t, *grid.last().unwrap());
                (run_tree_campaign(&chain, &spec, &tables)?, Some(missed))
            }
            Engine::Balls => (
                run_ball_campaign(&model, cfg.j_max, &spec, &tables, cfg.simulate.ball_budget)?,
                None,
            ),
        };
        for (path, z) in result.paths.iter().zip(&result.normalized) {
            for j in 1..=cfg.j_max {
                for (k, u) in grid.iter().enumerate() {
                    rows.push(format!(
                        "{},{},{},{},{},{}",
                        num(big_t),
                        path.replica,
                        j,
                        num(*u),
                        path.counts[j - 1][k],
                        num(z[result.coord(j, k)])
                    ));
                }
            }
        }
        let coordinates = (1..=cfg.j_max)
            .flat_map(|j| grid.iter().map(move |u| format!("j{j}:u{u}")))
            .collect();
        runs.push(SimulationRun {
            big_t,
            seed: spec.seed,
            engine: cfg.simulate.engine,
            u_grid: grid.clone(),
            coordinates,
            missed_box_bound: missed,
            accumulator: result.accumulator,
        });
    }
    sink.csv("paths.csv", "T,replica,j,u,count,normalized", rows)?;
    sink.json("accumulator.json", &SimulationDoc { runs })?;
    Ok(sink)
}

#[derive(Serialize)]
struct CovEntry {
    u: f64,
    v: f64,
    empirical: f64,
    limit: f64,
}

#[derive(Serialize)]
struct LimitDoc {
    sampler: Sampler,
    paths: u64,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cholesky_jitter: Option<f64>,
    covariance: Vec<CovEntry>,
}

pub fn cmd_limit_sample(cfg: &ExperimentConfig) -> CliResult<Sink> {
    cfg.validate()?;
    let grid = cfg.u_grid.points();
    let mut sink = Sink::new(cfg)?;
    let (paths, jitter): (Vec<Vec<f64>>, Option<f64>) = {
        let run = || -> CliResult<_> {
            Ok(match cfg.limit.sampler {
                Sampler::Cholesky => {
                    let g = GaussGrid::new(&grid)?;
                    let p = (0..cfg.limit.paths)
                        .into_par_iter()
                        .map(|r| g.sample(&mut replica_stream(cfg.seed, r)))
                        .collect();
                    (p, Some(g.jitter()))
                }
                Sampler::WhiteNoise => {
                    let disc = WhiteNoiseDiscretization::for_grid(&grid);
                    let p = (0..cfg.limit.paths)
                        .into_par_iter()
                        .map(|r| sample_z_whitenoise(&disc, &grid, &mut replica_stream(cfg.seed, r)))
                        .collect();
                    (p, None)
                }
            })
        };
        if cfg.workers == 0 {
            run()?
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.workers)
                .build()
                .map_err(|e| std::io::Error::other(e.to_string()))?
                .install(run)?
        }
    };
    let mut acc = MomentAccumulator::new(grid.len());
    let mut rows = Vec::with_capacity(paths.len() * grid.len());
    for (r, z) in paths.iter().enumerate() {
        acc.push(z).map_err(CliError::Run)?;
        for (u, zu) in grid.iter().zip(z) {
            rows.push(format!("{r},{},{}", num(*u), num(*zu)));
        }
    }
    sink.csv("limit_paths.csv", "replica,u,z", rows)?;
    let mut covariance = Vec::new();
    for a in 0..grid.len() {
        for b in a..grid.len() {
            covariance.push(CovEntry {
                u: grid[a],
                v: grid[b],
                empirical: acc.covariance(a, b).unwrap_or(f64::NAN),
                limit: limit_cov(grid[a], grid[b]),
            });
        }
    }
    sink.json(
        "limit_summary.json",
        &LimitDoc {
            sampler: cfg.limit.sampler,
            paths: cfg.limit.paths,
            seed: cfg.seed,
            cholesky_jitter: jitter,
            covariance,
        },
    )?;
    Ok(sink)
}

#[derive(Serialize)]
struct SpectralDoc {
    spectral: nested_karlin::SpectralReport,
}

pub fn cmd_spectral(cfg: &ExperimentConfig) -> CliResult<Sink> {
    cfg.validate()?;
    let report = spectral_report(&cfg.spectral.x, &cfg.spectral.t)?;
    let mut sink = Sink::new(cfg)?;
    sink.json("spectral.json", &SpectralDoc { spectral: report })?;
    Ok(sink)
}

#[derive(Serialize)]
struct VerificationDoc<'a> {
    pass: bool,
    failing: Vec<&'a str>,
    report: &'a VerificationReport,
}

/// Runs the verification suite, writes `verification.json`, and fails with
/// the failing claim ids when any claim does not hold.
pub fn cmd_verify(cfg: &ExperimentConfig) -> CliResult<(Sink, VerificationReport)> {
    cfg.validate()?;
    let opts = VerifyOptions {
        seed: cfg.seed,
        workers: cfg.workers,
        only: cfg.verify.only.clone(),
    };
    let report = verify::run(&opts).map_err(|e| match e {
        nested_karlin::Error::Domain(msg) if msg.contains("unknown criterion") => {
            CliError::Config(ConfigError::Invalid {
                field: "verify.only",
                message: msg,
            })
        }
        other => CliError::Run(other),
    })?;
    let mut sink = Sink::new(cfg)?;
    sink.json(
        "verification.json",
        &VerificationDoc {
            pass: report.pass(),
            failing: report.failing(),
            report: &report,
        },
    )?;
    Ok((sink, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Failed(vec!["fclt.ks.j1".into()]).exit_code(), 1);
        let cfg = ConfigError::Parse("x".into());
        assert_eq!(CliError::from(cfg).exit_code(), 2);
        let budget = nested_karlin::Error::Budget {
            what: "boxes",
            needed: 2,
            budget: 1,
        };
        assert_eq!(CliError::from(budget).exit_code(), 3);
    }
}
