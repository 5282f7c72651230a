use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::config::ScenarioConfig;
use super::metrics::mean_nees_bounds;
use super::runner::{simulate_run, RunResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOptions {
    pub runs: u32,
    pub conservative: bool,
    /// Worker threads; `None` uses one per hardware thread.
    pub parallelism: Option<usize>,
}

impl MonteCarloOptions {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        MonteCarloOptions {
            runs: cfg.mc_runs,
            conservative: cfg.conservative_filtering,
            parallelism: None,
        }
    }
}

/// Per-robot averages over runs, indexed by step (first entry is step 1).
#[derive(Debug, Clone, PartialEq)]
pub struct RobotSummary {
    pub dof: usize,
    pub mean_nees: Vec<f64>,
    /// 95% two-sided interval for the run-averaged NEES of a consistent filter.
    pub nees_bounds: (f64, f64),
    pub min_eig_floor: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub runs: Vec<RunResult>,
    pub robots: BTreeMap<u32, RobotSummary>,
}

impl MonteCarloSummary {
    pub fn aborts(&self) -> impl Iterator<Item = (u32, &Error)> {
        self.runs
            .iter()
            .filter_map(|r| r.abort.as_ref().map(|e| (r.run, e)))
    }

    pub fn negative_information_events(&self) -> usize {
        self.runs.iter().map(RunResult::negative_information_events).sum()
    }
}

pub fn monte_carlo(cfg: &ScenarioConfig, opts: MonteCarloOptions) -> Result<MonteCarloSummary> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(p) = opts.parallelism {
        builder = builder.num_threads(p.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config("parallel", e.to_string()))?;
    let runs: Vec<RunResult> = pool.install(|| {
        (0..opts.runs)
            .into_par_iter()
            .map(|r| simulate_run(cfg, r, opts.conservative))
            .collect()
    });
    Ok(MonteCarloSummary {
        robots: summarize(cfg, &runs),
        runs,
    })
}

fn summarize(cfg: &ScenarioConfig, runs: &[RunResult]) -> BTreeMap<u32, RobotSummary> {
    let horizon = cfg.horizon_steps as usize;
    let mut out = BTreeMap::new();
    for robot in 1..=cfg.n_robots {
        let mut sums = vec![0.0; horizon];
        let mut counts = vec![0usize; horizon];
        let mut floor = vec![f64::INFINITY; horizon];
        let mut lambda = vec![f64::NAN; horizon];
        for run in runs {
            for rec in run.steps.iter().filter(|s| s.robot == robot) {
                let i = rec.step as usize - 1;
                sums[i] += rec.nees;
                counts[i] += 1;
                floor[i] = floor[i].min(rec.min_eig);
                if lambda[i].is_nan() {
                    lambda[i] = rec.lambda;
                }
            }
        }
        let complete = counts.iter().copied().min().unwrap_or(0).max(1);
        let dof = cfg.local_dim(robot);
        out.insert(
            robot,
            RobotSummary {
                dof,
                mean_nees: sums
                    .iter()
                    .zip(&counts)
                    .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
                    .collect(),
                nees_bounds: mean_nees_bounds(dof, complete, 0.95),
                min_eig_floor: floor,
                lambda,
            },
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_do_not_depend_on_parallelism() {
        let mut cfg = ScenarioConfig::four_robot_chain();
        cfg.horizon_steps = 4;
        let opts = |p| MonteCarloOptions {
            runs: 3,
            conservative: true,
            parallelism: Some(p),
        };
        let one = monte_carlo(&cfg, opts(1)).unwrap();
        let three = monte_carlo(&cfg, opts(3)).unwrap();
        assert_eq!(one, three);
    }
}
