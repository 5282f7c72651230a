use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExchangeProtocol {
    /// Every linked pair exchanges messages computed from the same pre-exchange
    /// marginals.
    #[default]
    Simultaneous,
    /// Pairwise exchanges sweep leaves-to-root then root-to-leaves, so every
    /// robot sees all current data within the tick.
    Sequential,
}

/// Where in a tick the previous slice is marginalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterTiming {
    /// predict, measure, exchange, then filter.
    #[default]
    AfterExchange,
    /// predict, filter, then measure and exchange.
    AfterPrediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessNoise {
    /// `Q = intensity · I₄` on each target's `[n, ṅ, e, ė]`.
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementNoise {
    pub target_cov_m2: [[f64; 2]; 2],
    pub landmark_cov_m2: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub position_sigma_m: f64,
    pub velocity_sigma_mps: f64,
    pub bias_sigma_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub grid_spacing_m: f64,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotTask {
    pub id: u32,
    pub targets: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub n_robots: u32,
    pub n_targets: u32,
    pub dt_seconds: f64,
    pub horizon_steps: u32,
    pub mc_runs: u32,
    pub seed: u64,
    pub conservative_filtering: bool,
    #[serde(default)]
    pub exchange: ExchangeProtocol,
    #[serde(default)]
    pub filter_timing: FilterTiming,
    /// Whether robots carry a measurement bias and observe it with a landmark.
    pub sensor_bias: bool,
    pub topology: Vec<[u32; 2]>,
    pub process_noise: ProcessNoise,
    pub measurement: MeasurementNoise,
    pub prior: PriorConfig,
    pub truth: TruthConfig,
    pub robots: Vec<RobotTask>,
}

pub const TARGET_DIM: usize = 4;
pub const BIAS_DIM: usize = 2;

const FOUR_ROBOT_CHAIN: &str = include_str!("../../../../scenarios/four_robot_chain.toml");

fn positive(field: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite, got {x}")))
    }
}

fn covariance_2x2(field: &str, m: &[[f64; 2]; 2]) -> Result<()> {
    let [[a, b], [c, d]] = *m;
    if ![a, b, c, d].iter().all(|x| x.is_finite()) || b != c {
        return Err(Error::config(field, "must be a finite symmetric 2x2 matrix"));
    }
    if a <= 0.0 || a * d - b * c <= 0.0 {
        return Err(Error::config(field, "must be positive definite"));
    }
    Ok(())
}

impl ScenarioConfig {
    /// The four-robot, five-target chain scenario shipped in `scenarios/`.
    pub fn four_robot_chain() -> Self {
        Self::from_toml(FOUR_ROBOT_CHAIN).expect("bundled scenario is valid")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("<document>")
                .to_string();
            Error::Config {
                field,
                message: e.to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_robots == 0 {
            return Err(Error::config("n_robots", "must be at least 1"));
        }
        if self.n_targets == 0 {
            return Err(Error::config("n_targets", "must be at least 1"));
        }
        if !(self.dt_seconds.is_finite() && self.dt_seconds >= 0.0) {
            return Err(Error::config("dt_seconds", "must be finite and non-negative"));
        }
        if self.horizon_steps == 0 {
            return Err(Error::config("horizon_steps", "must be at least 1"));
        }
        if self.mc_runs == 0 {
            return Err(Error::config("mc_runs", "must be at least 1"));
        }
        positive("process_noise.intensity", self.process_noise.intensity)?;
        covariance_2x2("measurement.target_cov_m2", &self.measurement.target_cov_m2)?;
        covariance_2x2("measurement.landmark_cov_m2", &self.measurement.landmark_cov_m2)?;
        positive("prior.position_sigma_m", self.prior.position_sigma_m)?;
        positive("prior.velocity_sigma_mps", self.prior.velocity_sigma_mps)?;
        positive("prior.bias_sigma_m", self.prior.bias_sigma_m)?;
        positive("truth.grid_spacing_m", self.truth.grid_spacing_m)?;
        if !(self.truth.speed_mps.is_finite() && self.truth.speed_mps >= 0.0) {
            return Err(Error::config("truth.speed_mps", "must be finite and non-negative"));
        }

        let ids: Vec<u32> = self.robots.iter().map(|r| r.id).collect();
        let expected: Vec<u32> = (1..=self.n_robots).collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted != expected {
            return Err(Error::config(
                "robots",
                format!("robot ids must be exactly 1..={}, got {ids:?}", self.n_robots),
            ));
        }
        let mut covered = BTreeSet::new();
        for r in &self.robots {
            let unique: BTreeSet<u32> = r.targets.iter().copied().collect();
            if unique.len() != r.targets.len() || unique.is_empty() {
                return Err(Error::config(
                    "robots.targets",
                    format!("robot {} needs a non-empty list of distinct targets", r.id),
                ));
            }
            if let Some(t) = unique.iter().find(|t| **t == 0 || **t > self.n_targets) {
                return Err(Error::config(
                    "robots.targets",
                    format!("robot {} tracks unknown target {t}", r.id),
                ));
            }
            covered.extend(unique);
        }
        if covered.len() != self.n_targets as usize {
            let missing: Vec<u32> = (1..=self.n_targets).filter(|t| !covered.contains(t)).collect();
            return Err(Error::config(
                "robots.targets",
                format!("targets {missing:?} are tracked by no robot"),
            ));
        }

        let mut parent: Vec<u32> = (0..=self.n_robots).collect();
        fn find(parent: &mut [u32], mut x: u32) -> u32 {
            while parent[x as usize] != x {
                parent[x as usize] = parent[parent[x as usize] as usize];
                x = parent[x as usize];
            }
            x
        }
        for &[a, b] in &self.topology {
            if a == b || a == 0 || b == 0 || a > self.n_robots || b > self.n_robots {
                return Err(Error::config("topology", format!("invalid edge [{a}, {b}]")));
            }
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return Err(Error::config(
                    "topology",
                    format!(
                        "edge [{a}, {b}] closes a cycle; the communication graph must be \
                         undirected and a-cyclic"
                    ),
                ));
            }
            parent[ra as usize] = rb;
            if self.shared_targets(a, b).is_empty() {
                return Err(Error::config(
                    "topology",
                    format!("linked robots {a} and {b} track no common target"),
                ));
            }
        }
        if self.topology.len() + 1 != self.n_robots as usize {
            return Err(Error::config(
                "topology",
                "communication graph must connect every robot",
            ));
        }
        Ok(())
    }

    pub fn task(&self, robot: u32) -> &[u32] {
        self.robots
            .iter()
            .find(|r| r.id == robot)
            .map(|r| r.targets.as_slice())
            .unwrap_or(&[])
    }

    /// Targets tracked by both robots, ascending.
    pub fn shared_targets(&self, a: u32, b: u32) -> Vec<u32> {
        let tb: BTreeSet<u32> = self.task(b).iter().copied().collect();
        let mut shared: Vec<u32> = self.task(a).iter().copied().filter(|t| tb.contains(t)).collect();
        shared.sort_unstable();
        shared
    }

    pub fn neighbors(&self, robot: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .topology
            .iter()
            .filter_map(|&[a, b]| {
                if a == robot {
                    Some(b)
                } else if b == robot {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Size of robot `robot`'s local state vector.
    pub fn local_dim(&self, robot: u32) -> usize {
        TARGET_DIM * self.task(robot).len() + if self.sensor_bias { BIAS_DIM } else { 0 }
    }

    pub fn local_dims(&self) -> BTreeMap<u32, usize> {
        (1..=self.n_robots).map(|r| (r, self.local_dim(r))).collect()
    }

    /// Size of the full state a centralized estimator carries.
    pub fn global_dim(&self) -> usize {
        TARGET_DIM * self.n_targets as usize
            + if self.sensor_bias {
                BIAS_DIM * self.n_robots as usize
            } else {
                0
            }
    }

    pub fn common_dim(&self, a: u32, b: u32) -> usize {
        TARGET_DIM * self.shared_targets(a, b).len()
    }

    pub fn max_common_dim(&self) -> usize {
        self.topology
            .iter()
            .map(|&[a, b]| self.common_dim(a, b))
            .max()
            .unwrap_or(0)
    }
}

/// Scalars in an information-form message over `n` states (`ζ` plus `Λ`).
pub fn message_scalars(n: usize) -> usize {
    n + n * n
}
