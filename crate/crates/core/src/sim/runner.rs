//! One Monte Carlo realization: ground truth, four-phase robot ticks
//! (predict, measure, exchange, filter) and the centralized reference.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filter::{
    exact_filter_step, filter_step, predict, CommonStructure, DynamicsModel, FilterStepReport,
    LinearDynamics,
};
use crate::fusion::{fuse, prepare_message, ChannelFilter, FusionMessage};
use crate::gaussian::{min_eigenvalue, CanonicalGaussian, Subject, VarSet, VariableKey};
use crate::graph::{FactorGraph, FactorKind};

use super::centralized::CentralizedFilter;
use super::config::{ExchangeProtocol, FilterTiming, ScenarioConfig, BIAS_DIM, TARGET_DIM};
use super::metrics::{min_eig_diff, nees};
use super::rng::{correlated_normal, stream_rng, Stream};
use super::truth::{position_selector, RobotMeasurements, SensorModel, Truth};

/// Per-robot metrics after the filtering phase of one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u32,
    pub robot: u32,
    pub nees: f64,
    /// Smallest eigenvalue of the robot's task covariance minus the centralized one.
    pub min_eig: f64,
    pub lambda: f64,
    /// Smallest eigenvalue of `Λ_tr − λ Λ_sp` in this tick's filter step.
    pub guarantee: f64,
    /// Largest change of the current-slice mean caused by the filter step.
    pub mean_shift: f64,
    /// Smallest eigenvalue of the robot's common-variable information minus
    /// its channel filter's, over all channels. Infinite without channels.
    pub cf_margin: f64,
    pub mean_gap: f64,
    pub cov_gap: f64,
}

/// Channel-filter agreement across one link.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub step: u32,
    pub a: u32,
    pub b: u32,
    /// Largest entry difference between the two endpoint channel filters right
    /// after the exchange.
    pub asymmetry: f64,
    /// The same after both robots deflated their copies.
    pub divergence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run: u32,
    pub steps: Vec<StepRecord>,
    pub edges: Vec<EdgeRecord>,
    pub abort: Option<Error>,
}

impl RunResult {
    pub fn negative_information_events(&self) -> usize {
        usize::from(matches!(self.abort, Some(Error::NegativeInformation { .. })))
    }
}

#[derive(Debug, Clone)]
pub struct RobotNode {
    pub id: u32,
    pub targets: Vec<u32>,
    pub graph: FactorGraph,
    pub channels: BTreeMap<u32, ChannelFilter>,
    with_bias: bool,
}

impl RobotNode {
    fn target_key(t: u32, k: u32) -> VariableKey {
        VariableKey::target(t, k, TARGET_DIM)
    }

    pub fn bias_key(&self) -> Option<VariableKey> {
        self.with_bias.then(|| VariableKey::bias(self.id, BIAS_DIM))
    }

    /// Subjects of the task vector in variable order (targets, then bias).
    pub fn task_subjects(&self) -> Vec<Subject> {
        let mut out: Vec<Subject> = self.targets.iter().map(|&t| Subject::Target(t)).collect();
        if self.with_bias {
            out.push(Subject::Bias(self.id));
        }
        out
    }

    pub fn structure(&self, cfg: &ScenarioConfig, k: u32) -> Result<CommonStructure> {
        let mut channels = BTreeMap::new();
        let mut common = VarSet::new();
        for &n in self.channels.keys() {
            let set: VarSet = cfg
                .shared_targets(self.id, n)
                .into_iter()
                .map(|t| Self::target_key(t, k))
                .collect();
            common.extend(set.iter().copied());
            channels.insert(n, set);
        }
        let mut local: VarSet = self
            .targets
            .iter()
            .map(|&t| Self::target_key(t, k))
            .filter(|v| !common.contains(v))
            .collect();
        local.extend(self.bias_key());
        CommonStructure::new(local, channels)
    }

    /// Mean and covariance of the robot's current estimate, in task order.
    pub fn estimate(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.graph.joint_canonical().to_moment()
    }

    fn cf_margin(&self) -> Result<f64> {
        let mut margin = f64::INFINITY;
        for cf in self.channels.values() {
            let own = self.graph.marginal(cf.common_vars())?;
            let diff = own.info_matrix() - cf.joint().info_matrix();
            margin = margin.min(min_eigenvalue(&diff)?);
        }
        Ok(margin)
    }
}

/// State of one Monte Carlo realization.
pub struct Simulation {
    cfg: ScenarioConfig,
    conservative: bool,
    dynamics: LinearDynamics,
    dynamics_model: DynamicsModel,
    sensor: SensorModel,
    truth: Truth,
    robots: Vec<RobotNode>,
    central: CentralizedFilter,
    central_order: Vec<Subject>,
    process_rng: ChaCha8Rng,
    measurement_rng: ChaCha8Rng,
    step: u32,
}

/// Leaves-to-root then root-to-leaves edge order rooted at robot 1.
fn sweep_order(cfg: &ScenarioConfig) -> Vec<(u32, u32)> {
    let mut preorder = Vec::new();
    let mut stack = vec![(1u32, 0u32)];
    while let Some((node, parent)) = stack.pop() {
        if parent != 0 {
            preorder.push((parent, node));
        }
        for n in cfg.neighbors(node).into_iter().rev() {
            if n != parent {
                stack.push((n, node));
            }
        }
    }
    let mut order: Vec<(u32, u32)> = preorder.iter().rev().copied().collect();
    order.extend(preorder);
    order
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

impl Simulation {
    /// Build run `run` of `cfg`; `conservative` selects the filtering mode.
    pub fn new(cfg: &ScenarioConfig, run: u32, conservative: bool) -> Result<Self> {
        cfg.validate()?;
        let dynamics =
            LinearDynamics::constant_velocity(cfg.dt_seconds, cfg.process_noise.intensity)?;
        let dynamics_model = DynamicsModel::uniform(
            (1..=cfg.n_targets).map(Subject::Target),
            dynamics.clone(),
        );
        let sensor = SensorModel::new(cfg);
        let truth = Truth::initial(cfg, &mut stream_rng(cfg.seed, run, Stream::TruthInit));

        let p = &cfg.prior;
        let target_cov = DMatrix::from_diagonal(&DVector::from_vec(vec![
            p.position_sigma_m.powi(2),
            p.velocity_sigma_mps.powi(2),
            p.position_sigma_m.powi(2),
            p.velocity_sigma_mps.powi(2),
        ]));
        let bias_cov = DMatrix::identity(BIAS_DIM, BIAS_DIM) * p.bias_sigma_m.powi(2);
        let target_chol = target_cov.map(f64::sqrt);
        let bias_chol = bias_cov.map(f64::sqrt);

        let mut prior_rng = stream_rng(cfg.seed, run, Stream::Prior);
        let mut priors: BTreeMap<Subject, (DVector<f64>, DMatrix<f64>)> = BTreeMap::new();
        for t in 1..=cfg.n_targets {
            let mean = truth.target(t) + correlated_normal(&mut prior_rng, &target_chol);
            priors.insert(Subject::Target(t), (mean, target_cov.clone()));
        }
        if cfg.sensor_bias {
            for r in 1..=cfg.n_robots {
                let mean = truth.bias(r) + correlated_normal(&mut prior_rng, &bias_chol);
                priors.insert(Subject::Bias(r), (mean, bias_cov.clone()));
            }
        }
        let prior_factor = |key: VariableKey| -> Result<CanonicalGaussian> {
            let (mean, cov) = &priors[&key.subject];
            CanonicalGaussian::from_moment(vec![key], mean, cov)
        };

        let mut robots = Vec::new();
        for task in &cfg.robots {
            let mut targets = task.targets.clone();
            targets.sort_unstable();
            let mut node = RobotNode {
                id: task.id,
                targets,
                graph: FactorGraph::new(),
                channels: BTreeMap::new(),
                with_bias: cfg.sensor_bias,
            };
            let mut keys: Vec<VariableKey> =
                node.targets.iter().map(|&t| RobotNode::target_key(t, 0)).collect();
            keys.extend(node.bias_key());
            for key in keys {
                node.graph.add_variable(key)?;
                node.graph.add_factor(FactorKind::Prior, prior_factor(key)?)?;
            }
            for n in cfg.neighbors(task.id) {
                let shared: Vec<VariableKey> = cfg
                    .shared_targets(task.id, n)
                    .into_iter()
                    .map(|t| RobotNode::target_key(t, 0))
                    .collect();
                let parts = shared.iter().map(|k| prior_factor(*k)).collect::<Result<Vec<_>>>()?;
                let scope: VarSet = shared.iter().copied().collect();
                let common_prior = CanonicalGaussian::product(&scope, parts.iter())?;
                node.channels.insert(n, ChannelFilter::with_prior(task.id, n, common_prior)?);
            }
            robots.push(node);
        }
        robots.sort_by_key(|r| r.id);

        let central_order: Vec<Subject> = priors.keys().copied().collect();
        let central = CentralizedFilter::new(
            priors
                .into_iter()
                .map(|(s, (m, c))| (s, m, c))
                .collect(),
        )?;

        Ok(Simulation {
            cfg: cfg.clone(),
            conservative,
            dynamics,
            dynamics_model,
            sensor,
            truth,
            robots,
            central,
            central_order,
            process_rng: stream_rng(cfg.seed, run, Stream::ProcessNoise),
            measurement_rng: stream_rng(cfg.seed, run, Stream::MeasurementNoise),
            step: 0,
        })
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn robots(&self) -> &[RobotNode] {
        &self.robots
    }

    pub fn truth(&self) -> &Truth {
        &self.truth
    }

    pub fn centralized(&self) -> &CentralizedFilter {
        &self.central
    }

    /// Truth values over a robot's task vector, in task order.
    pub fn task_truth(&self, robot: &RobotNode) -> DVector<f64> {
        let mut parts: Vec<f64> = Vec::new();
        for s in robot.task_subjects() {
            match s {
                Subject::Target(t) => parts.extend(self.truth.target(t).iter()),
                Subject::Bias(r) => parts.extend(self.truth.bias(r).iter()),
                Subject::Label(_) => unreachable!("simulated robots carry no labels"),
            }
        }
        DVector::from_vec(parts)
    }

    fn robot_mut(&mut self, id: u32) -> &mut RobotNode {
        &mut self.robots[id as usize - 1]
    }

    /// Advance one tick and return per-robot and per-link records.
    pub fn advance(&mut self) -> Result<(Vec<StepRecord>, Vec<EdgeRecord>)> {
        let k = self.step;
        let k1 = k + 1;

        self.truth.propagate(&self.dynamics, &mut self.process_rng);

        for robot in &mut self.robots {
            predict(&mut robot.graph, &self.dynamics_model, k)?;
            for cf in robot.channels.values_mut() {
                cf.predict(&self.dynamics_model, k)?;
            }
        }
        let target_models: Vec<(Subject, &LinearDynamics)> = (1..=self.cfg.n_targets)
            .map(|t| (Subject::Target(t), &self.dynamics))
            .collect();
        self.central.predict(&target_models)?;

        let (reports, mut edges) = match self.cfg.filter_timing {
            FilterTiming::AfterExchange => {
                self.measure(k1)?;
                let edges = self.exchange(k1)?;
                (self.filter(k, k1)?, edges)
            }
            FilterTiming::AfterPrediction => {
                let reports = self.filter(k, k1)?;
                self.measure(k1)?;
                (reports, self.exchange(k1)?)
            }
        };
        for e in &mut edges {
            let ab = self.robots[e.a as usize - 1].channels[&e.b].joint();
            let ba = self.robots[e.b as usize - 1].channels[&e.a].joint();
            e.divergence = ab.max_abs_diff(&ba).unwrap_or(f64::NAN);
        }

        self.step = k1;
        let mut records = Vec::new();
        for robot in &self.robots {
            let (report, mean_shift) = reports[&robot.id];
            let (mean, cov) = robot.estimate()?;
            let order = robot.task_subjects();
            let (cent_mean, cent_cov) = self.central.marginal(&order)?;
            records.push(StepRecord {
                step: k1,
                robot: robot.id,
                nees: nees(&mean, &cov, &self.task_truth(robot))?,
                min_eig: min_eig_diff(&order, &cov, &order, &cent_cov)?,
                lambda: report.lambda_min,
                guarantee: report.min_eig_guarantee,
                mean_shift,
                cf_margin: robot.cf_margin()?,
                mean_gap: (&mean - &cent_mean).amax(),
                cov_gap: max_abs(&(&cov - &cent_cov)),
            });
        }
        log::debug!("step {k1}: {records:?}");
        Ok((records, edges))
    }

    fn measure(&mut self, k1: u32) -> Result<()> {
        let measurements: Vec<RobotMeasurements> = self
            .robots
            .iter()
            .map(|r| {
                self.sensor
                    .measure(&self.truth, r.id, &r.targets, &mut self.measurement_rng)
            })
            .collect();
        for (robot, meas) in self.robots.iter_mut().zip(&measurements) {
            let bias = robot.bias_key();
            for (t, y) in &meas.targets {
                let factor = self.sensor.target_factor(RobotNode::target_key(*t, k1), bias, y)?;
                robot.graph.add_factor(FactorKind::LocalMeasurement, factor)?;
                let mut blocks = vec![(Subject::Target(*t), position_selector())];
                if let Some(b) = bias {
                    blocks.push((b.subject, DMatrix::identity(BIAS_DIM, BIAS_DIM)));
                }
                self.central.update(&blocks, y, &self.sensor.target_cov)?;
            }
            if let (Some(b), Some(m)) = (bias, &meas.landmark) {
                robot
                    .graph
                    .add_factor(FactorKind::LocalMeasurement, self.sensor.landmark_factor(b, m)?)?;
                self.central.update(
                    &[(b.subject, DMatrix::identity(BIAS_DIM, BIAS_DIM))],
                    m,
                    &self.sensor.landmark_cov,
                )?;
            }
        }
        Ok(())
    }

    fn exchange(&mut self, k1: u32) -> Result<Vec<EdgeRecord>> {
        match self.cfg.exchange {
            ExchangeProtocol::Simultaneous => self.exchange_simultaneous(k1),
            ExchangeProtocol::Sequential => self.exchange_sequential(k1),
        }
    }

    /// Marginalize slice `k`, leaving slice `k1 = k + 1`.
    fn filter(&mut self, k: u32, k1: u32) -> Result<BTreeMap<u32, (FilterStepReport, f64)>> {
        let mut reports = BTreeMap::new();
        for i in 0..self.robots.len() {
            let structure = self.robots[i].structure(&self.cfg, k1)?;
            let robot = &mut self.robots[i];
            let exact_mean = robot.graph.marginal(&structure.all())?.mean()?;
            let report = if self.conservative {
                filter_step(&mut robot.graph, &structure, k, robot.channels.values_mut())?
            } else {
                exact_filter_step(&mut robot.graph, k)?
            };
            let mean_shift = (robot.graph.joint_canonical().mean()? - exact_mean).amax();
            reports.insert(robot.id, (report, mean_shift));
        }
        Ok(reports)
    }

    fn exchange_simultaneous(&mut self, k1: u32) -> Result<Vec<EdgeRecord>> {
        let mut outbox: BTreeMap<(u32, u32), FusionMessage> = BTreeMap::new();
        for &[a, b] in &self.cfg.topology {
            for (s, r) in [(a, b), (b, a)] {
                let sender = &self.robots[s as usize - 1];
                outbox.insert((s, r), prepare_message(&sender.graph, &sender.channels[&r], k1)?);
            }
        }
        for ((s, r), msg) in &outbox {
            let robot = self.robot_mut(*r);
            fuse(&mut robot.graph, &robot.channels[s], msg)?;
        }
        let mut edges = Vec::new();
        for &[a, b] in &self.cfg.topology.clone() {
            for (s, r) in [(a, b), (b, a)] {
                let own = outbox[&(r, s)].payload.clone();
                let incoming = &outbox[&(s, r)];
                self.robot_mut(r).channels.get_mut(&s).unwrap().update(&own, incoming)?;
            }
            edges.push(self.edge_record(a, b, k1));
        }
        Ok(edges)
    }

    fn exchange_sequential(&mut self, k1: u32) -> Result<Vec<EdgeRecord>> {
        let mut edges = Vec::new();
        for (a, b) in sweep_order(&self.cfg) {
            let ra = &self.robots[a as usize - 1];
            let rb = &self.robots[b as usize - 1];
            let to_b = prepare_message(&ra.graph, &ra.channels[&b], k1)?;
            let to_a = prepare_message(&rb.graph, &rb.channels[&a], k1)?;
            for (msg, own) in [(&to_a, &to_b), (&to_b, &to_a)] {
                let robot = self.robot_mut(msg.receiver);
                fuse(&mut robot.graph, &robot.channels[&msg.sender], msg)?;
                robot
                    .channels
                    .get_mut(&msg.sender)
                    .unwrap()
                    .update(&own.payload, msg)?;
            }
            edges.push(self.edge_record(a.min(b), a.max(b), k1));
        }
        Ok(edges)
    }

    fn edge_record(&self, a: u32, b: u32, k1: u32) -> EdgeRecord {
        let ab = self.robots[a as usize - 1].channels[&b].joint();
        let ba = self.robots[b as usize - 1].channels[&a].joint();
        EdgeRecord {
            step: k1,
            a,
            b,
            asymmetry: ab.max_abs_diff(&ba).unwrap_or(f64::NAN),
            divergence: f64::NAN,
        }
    }

    pub fn centralized_order(&self) -> &[Subject] {
        &self.central_order
    }
}

/// Run one realization to the horizon, stopping early on the first error.
pub fn simulate_run(cfg: &ScenarioConfig, run: u32, conservative: bool) -> RunResult {
    let mut result = RunResult {
        run,
        steps: Vec::new(),
        edges: Vec::new(),
        abort: None,
    };
    let mut sim = match Simulation::new(cfg, run, conservative) {
        Ok(sim) => sim,
        Err(e) => {
            result.abort = Some(e);
            return result;
        }
    };
    while sim.step() < cfg.horizon_steps {
        match sim.advance() {
            Ok((steps, edges)) => {
                result.steps.extend(steps);
                result.edges.extend(edges);
            }
            Err(e) => {
                log::warn!("run {run} aborted at step {}: {e}", sim.step() + 1);
                result.abort = Some(e);
                break;
            }
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_sweep_collects_then_distributes() {
        let cfg = ScenarioConfig::four_robot_chain();
        assert_eq!(
            sweep_order(&cfg),
            vec![(3, 4), (2, 3), (1, 2), (1, 2), (2, 3), (3, 4)]
        );
    }

    #[test]
    fn structure_of_middle_robot() {
        let cfg = ScenarioConfig::four_robot_chain();
        let sim = Simulation::new(&cfg, 0, true).unwrap();
        let s = sim.robots()[1].structure(&cfg, 0).unwrap();
        assert_eq!(s.local().len(), 1);
        assert_eq!(s.channels().len(), 2);
        assert!(s.shared_core().is_empty());
        let s3 = sim.robots()[2].structure(&cfg, 0).unwrap();
        assert_eq!(s3.channels()[&4].len(), 2);
        assert_eq!(s3.common().len(), 3);
    }

    #[test]
    fn short_run_completes() {
        let mut cfg = ScenarioConfig::four_robot_chain();
        cfg.horizon_steps = 5;
        let run = simulate_run(&cfg, 0, true);
        assert!(run.abort.is_none(), "{:?}", run.abort);
        assert_eq!(run.steps.len(), 5 * 4);
        assert!(run.steps.iter().all(|s| s.lambda > 0.0 && s.lambda <= 1.0));
    }
}
