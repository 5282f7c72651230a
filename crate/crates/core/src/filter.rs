//! Conservative filtering of a robot's local factor graph.
//!
//! Marginalizing out the previous timestep of a heterogeneous robot graph
//! creates two kinds of unwanted coupling: hidden dependencies between the
//! robot's local variables and neighbours' variables it cannot see, and visible
//! dependencies between the variable groups it shares with different
//! neighbours. [`filter_step`] removes both before and after elimination, then
//! deflates the resulting sparse density so that its information never exceeds
//! that of the exact marginal, and finally re-factorizes it into unary and
//! pairwise factors. Channel filters are deflated by the same constant.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fusion::ChannelFilter;
use crate::gaussian::{
    condition_number, deflation_constant, min_eigenvalue, CanonicalGaussian, Subject, Timestep,
    VarSet, VariableKey, PSD_TOLERANCE,
};
use crate::graph::{FactorGraph, FactorKind};

/// `x_{k+1} = F x_k + G u + ω`, `ω ~ 𝒩(0, Q)` with `Q ≻ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    transition: DMatrix<f64>,
    control: DMatrix<f64>,
    input: DVector<f64>,
    noise: DMatrix<f64>,
    noise_info: DMatrix<f64>,
}

impl LinearDynamics {
    pub fn new(transition: DMatrix<f64>, control: DMatrix<f64>, noise: DMatrix<f64>) -> Result<Self> {
        let n = transition.nrows();
        if !transition.is_square() || noise.shape() != (n, n) || control.nrows() != n {
            return Err(Error::structural(format!(
                "dynamics shapes disagree: F {:?}, G {:?}, Q {:?}",
                transition.shape(),
                control.shape(),
                noise.shape()
            )));
        }
        let chol = noise.clone().cholesky().ok_or_else(|| {
            Error::numerical(
                "process noise covariance must be positive definite",
                condition_number(&noise),
            )
        })?;
        let input = DVector::zeros(control.ncols());
        Ok(LinearDynamics {
            noise_info: chol.inverse(),
            transition,
            control,
            input,
            noise,
        })
    }

    /// Planar constant-velocity model on `[n, ṅ, e, ė]` with `Q = q·I₄`.
    pub fn constant_velocity(dt: f64, q: f64) -> Result<Self> {
        let mut f = DMatrix::identity(4, 4);
        f[(0, 1)] = dt;
        f[(2, 3)] = dt;
        let mut g = DMatrix::zeros(4, 2);
        g[(0, 0)] = 0.5 * dt * dt;
        g[(1, 0)] = dt;
        g[(2, 1)] = 0.5 * dt * dt;
        g[(3, 1)] = dt;
        Self::new(f, g, DMatrix::identity(4, 4) * q)
    }

    /// Set the (constant) control input `u`.
    pub fn with_input(mut self, input: DVector<f64>) -> Result<Self> {
        if input.len() != self.control.ncols() {
            return Err(Error::structural("control input length does not match G"));
        }
        self.input = input;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn noise(&self) -> &DMatrix<f64> {
        &self.noise
    }

    /// Deterministic part `F x + G u`.
    pub fn mean_step(&self, state: &DVector<f64>) -> DVector<f64> {
        &self.transition * state + &self.control * &self.input
    }

    /// Canonical form of `p(x_to | x_from)` over `(x_from, x_to)`.
    pub fn prediction_factor(
        &self,
        from: VariableKey,
        to: VariableKey,
    ) -> Result<CanonicalGaussian> {
        let n = self.dim();
        if from.dim != n || to.dim != n {
            return Err(Error::structural(format!(
                "dynamics of dimension {n} applied to {from} -> {to}"
            )));
        }
        let f = &self.transition;
        let qi = &self.noise_info;
        let offset = &self.control * &self.input;
        let ft_qi = f.transpose() * qi;

        let mut matrix = DMatrix::zeros(2 * n, 2 * n);
        matrix.view_mut((0, 0), (n, n)).copy_from(&(&ft_qi * f));
        matrix.view_mut((0, n), (n, n)).copy_from(&(-&ft_qi));
        matrix.view_mut((n, 0), (n, n)).copy_from(&(-(qi * f)));
        matrix.view_mut((n, n), (n, n)).copy_from(qi);
        let mut vector = DVector::zeros(2 * n);
        vector.rows_mut(0, n).copy_from(&(-(&ft_qi * &offset)));
        vector.rows_mut(n, n).copy_from(&(qi * &offset));
        CanonicalGaussian::new(vec![from, to], vector, matrix)
    }
}

/// Dynamics per subject. Subjects without a model are static.
#[derive(Debug, Clone, Default)]
pub struct DynamicsModel {
    models: BTreeMap<Subject, LinearDynamics>,
}

impl DynamicsModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn uniform(subjects: impl IntoIterator<Item = Subject>, model: LinearDynamics) -> Self {
        DynamicsModel {
            models: subjects.into_iter().map(|s| (s, model.clone())).collect(),
        }
    }

    pub fn insert(&mut self, subject: Subject, model: LinearDynamics) {
        self.models.insert(subject, model);
    }

    pub fn get(&self, subject: &Subject) -> Option<&LinearDynamics> {
        self.models.get(subject)
    }
}

/// Add the timestep-`k+1` slice: a new node and a prediction factor for every
/// time-indexed subject. Static variables are left alone.
pub fn predict(g: &mut FactorGraph, dynamics: &DynamicsModel, k: u32) -> Result<()> {
    let subjects: BTreeSet<Subject> = g
        .variables()
        .iter()
        .filter(|v| !v.is_static())
        .map(|v| v.subject)
        .collect();
    let mut plan = Vec::new();
    for subject in subjects {
        let from = *g
            .variables()
            .iter()
            .find(|v| v.subject == subject && v.timestep == Timestep::At(k))
            .ok_or_else(|| {
                Error::structural(format!("{subject} has no node at timestep {k}"))
            })?;
        let model = dynamics
            .get(&subject)
            .ok_or_else(|| Error::structural(format!("no dynamics for {subject}")))?;
        let to = from.at(k + 1);
        plan.push((to, model.prediction_factor(from, to)?));
    }
    for (to, factor) in plan {
        g.add_variable(to)?;
        g.add_factor(FactorKind::DynamicPrediction, factor)?;
    }
    Ok(())
}

/// How a robot's current variables split into local variables and the sets it
/// shares with each neighbour.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonStructure {
    local: VarSet,
    channels: BTreeMap<u32, VarSet>,
    core: VarSet,
}

impl CommonStructure {
    pub fn new(local: VarSet, channels: BTreeMap<u32, VarSet>) -> Result<Self> {
        let mut seen = VarSet::new();
        let mut core = VarSet::new();
        for (neighbor, set) in &channels {
            if let Some(v) = set.iter().find(|v| local.contains(v)) {
                return Err(Error::structural(format!(
                    "{v} is both local and common with robot {neighbor}"
                )));
            }
            for v in set {
                if !seen.insert(*v) {
                    core.insert(*v);
                }
            }
        }
        Ok(CommonStructure {
            local,
            channels,
            core,
        })
    }

    pub fn local(&self) -> &VarSet {
        &self.local
    }

    pub fn channels(&self) -> &BTreeMap<u32, VarSet> {
        &self.channels
    }

    /// Variables shared with two or more neighbours.
    pub fn shared_core(&self) -> &VarSet {
        &self.core
    }

    /// All common variables.
    pub fn common(&self) -> VarSet {
        self.channels.values().flatten().copied().collect()
    }

    pub fn all(&self) -> VarSet {
        self.local.union(&self.common()).copied().collect()
    }

    /// Every channel must contain either all of the core or none of it.
    fn check_single_core(&self) -> Result<()> {
        for (neighbor, set) in &self.channels {
            let overlap = set.intersection(&self.core).count();
            if overlap != 0 && overlap != self.core.len() {
                return Err(Error::structural(format!(
                    "channel to robot {neighbor} shares only part of the common core; \
                     overlapping channel sets must nest through a single core"
                )));
            }
        }
        Ok(())
    }

    /// Groups used to re-factorize a sparse density: local, core, and each
    /// channel's exclusive part.
    fn groups(&self) -> Vec<VarSet> {
        let mut groups = Vec::new();
        if !self.local.is_empty() {
            groups.push(self.local.clone());
        }
        if !self.core.is_empty() {
            groups.push(self.core.clone());
        }
        for set in self.channels.values() {
            let exclusive: VarSet = set.difference(&self.core).copied().collect();
            if !exclusive.is_empty() {
                groups.push(exclusive);
            }
        }
        groups
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilterStepReport {
    pub lambda_min: f64,
    /// Smallest eigenvalue of `Λ_tr − λ Λ_sp`.
    pub min_eig_guarantee: f64,
    pub dims_marginalized: usize,
}

impl FilterStepReport {
    fn exact(dims_marginalized: usize) -> Self {
        FilterStepReport {
            lambda_min: 1.0,
            min_eig_guarantee: 0.0,
            dims_marginalized,
        }
    }
}

fn checked_joint(g: &FactorGraph) -> Result<CanonicalGaussian> {
    let joint = g.joint_canonical();
    if joint.info_matrix().clone().cholesky().is_none() {
        return Err(Error::numerical(
            "graph joint is not positive definite",
            condition_number(joint.info_matrix()),
        ));
    }
    Ok(joint)
}

/// Replace the graph's joint by the product of its marginal over local
/// variables and its marginal over all common variables (past and current).
pub fn decouple_local(
    g: &mut FactorGraph,
    structure: &CommonStructure,
    past_common: &VarSet,
) -> Result<()> {
    let common: VarSet = structure.common().union(past_common).copied().collect();
    if let Some(v) = common.iter().find(|v| !g.has_variable(v)) {
        return Err(Error::structural(format!("common variable {v} not in graph")));
    }
    let local: VarSet = g.variables().difference(&common).copied().collect();
    if local.is_empty() || common.is_empty() {
        return Ok(());
    }
    let joint = checked_joint(g)?;
    let local_marginal = joint.marginalize(&local)?;
    let common_marginal = joint.marginalize(&common)?;
    g.clear_factors();
    g.add_factor(FactorKind::ApproxMarginalization, local_marginal)?;
    g.add_factor(FactorKind::ApproxMarginalization, common_marginal)?;
    Ok(())
}

/// Replace the dense density over the common variables by
/// `∏_c p(χ_c) / p(χ_core)^{n_core − 1}`, where `n_core` counts the channels
/// containing the core. This makes the channel-exclusive sets conditionally
/// independent given the core (plain independence when there is no core).
pub fn regain_conditional_independence(
    g: &mut FactorGraph,
    structure: &CommonStructure,
) -> Result<()> {
    if structure.channels().len() <= 1 {
        return Ok(());
    }
    structure.check_single_core()?;
    let common = structure.common();
    let ids = g.factors_touching(&common);
    for id in &ids {
        let f = g.factor(*id).unwrap();
        if let Some(v) = f.adjacency().iter().find(|v| !common.contains(v)) {
            return Err(Error::structural(format!(
                "factor {id} couples common variables with {v}; decouple local variables first"
            )));
        }
    }
    let dense = CanonicalGaussian::product(&common, ids.iter().map(|id| g.factor(*id).unwrap().payload()))?;
    if dense.info_matrix().clone().cholesky().is_none() {
        return Err(Error::numerical(
            "common-variable density is not positive definite",
            condition_number(dense.info_matrix()),
        ));
    }

    let mut replacements = Vec::new();
    for set in structure.channels().values() {
        replacements.push(dense.marginalize(set)?);
    }
    let core = structure.shared_core();
    if !core.is_empty() {
        let sharing = structure
            .channels()
            .values()
            .filter(|set| set.is_superset(core))
            .count();
        if sharing > 1 {
            replacements.push(dense.marginalize(core)?.scale(-((sharing - 1) as f64)));
        }
    }
    for id in ids {
        g.remove_factor(id)?;
    }
    for part in replacements {
        g.add_factor(FactorKind::ApproxMarginalization, part)?;
    }
    Ok(())
}

/// Exact filtering: marginalize the timestep-`k` slice with no approximation.
pub fn exact_filter_step(g: &mut FactorGraph, k: u32) -> Result<FilterStepReport> {
    let past = g.variables_at(Timestep::At(k));
    let dims = past.iter().map(|v| v.dim).sum();
    g.eliminate(&past)?;
    Ok(FilterStepReport::exact(dims))
}

/// One conservative filtering step: marginalize the timestep-`k` slice of `g`
/// (which also holds slice `k+1`) while keeping the robot's fused density
/// conservative and conditionally independent across channels.
///
/// On error the graph and channel filters are left untouched.
pub fn filter_step<'a>(
    g: &mut FactorGraph,
    structure: &CommonStructure,
    k: u32,
    cf_registry: impl IntoIterator<Item = &'a mut ChannelFilter>,
) -> Result<FilterStepReport> {
    let past = g.variables_at(Timestep::At(k));
    if past.is_empty() {
        return Ok(FilterStepReport::exact(0));
    }
    let current: VarSet = g.variables().difference(&past).copied().collect();
    if structure.all() != current {
        return Err(Error::structural(format!(
            "common structure covers {} variables but the current slice has {}",
            structure.all().len(),
            current.len()
        )));
    }
    let dims_marginalized = past.iter().map(|v| v.dim).sum();
    let common_subjects: BTreeSet<Subject> =
        structure.common().iter().map(|v| v.subject).collect();
    let past_common: VarSet = past
        .iter()
        .filter(|v| common_subjects.contains(&v.subject))
        .copied()
        .collect();

    let mut truth = g.clone();
    let mut approx = g.clone();
    decouple_local(&mut approx, structure, &past_common)?;
    truth.eliminate(&past)?;
    approx.eliminate(&past)?;
    regain_conditional_independence(&mut approx, structure)?;

    let true_joint = checked_joint(&truth)?;
    let sparse_joint = approx.joint_canonical();
    let lambda = deflation_constant(true_joint.info_matrix(), sparse_joint.info_matrix())?;
    let deflated = sparse_joint.deflate(&true_joint, lambda)?;
    let min_eig_guarantee =
        min_eigenvalue(&(true_joint.info_matrix() - sparse_joint.info_matrix() * lambda))?;
    if min_eig_guarantee < -PSD_TOLERANCE {
        return Err(Error::numerical(
            format!("deflated density is not conservative (min eigenvalue {min_eig_guarantee:e})"),
            condition_number(true_joint.info_matrix()),
        ));
    }

    approx.clear_factors();
    let id = approx.add_factor(FactorKind::ApproxMarginalization, deflated)?;
    approx.split_factor(id, &structure.groups())?;

    for cf in cf_registry {
        cf.deflate(lambda)?;
    }
    *g = approx;
    Ok(FilterStepReport {
        lambda_min: lambda,
        min_eig_guarantee,
        dims_marginalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn label(i: u32) -> VariableKey {
        VariableKey::label(i, Timestep::Static, 1)
    }

    fn set(vars: &[VariableKey]) -> VarSet {
        vars.iter().copied().collect()
    }

    #[test]
    fn prediction_factor_random_walk_pattern() {
        let q = 0.5;
        let model =
            LinearDynamics::new(DMatrix::identity(1, 1), DMatrix::zeros(1, 1), dmatrix![q])
                .unwrap();
        let f = model
            .prediction_factor(
                VariableKey::label(0, Timestep::At(0), 1),
                VariableKey::label(0, Timestep::At(1), 1),
            )
            .unwrap();
        assert!((f.info_matrix() - dmatrix![2.0, -2.0; -2.0, 2.0]).amax() < 1e-15);
        assert_eq!(f.info_vector(), &dvector![0.0, 0.0]);
    }

    #[test]
    fn zero_process_noise_is_rejected() {
        let err = LinearDynamics::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 2),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numerical { .. }));
    }

    #[test]
    fn constant_velocity_matrices() {
        let m = LinearDynamics::constant_velocity(0.1, 0.08).unwrap();
        let x = dvector![0.0, 1.0, 0.0, 1.0];
        let next = m.mean_step(&x);
        assert!((next - dvector![0.1, 1.0, 0.1, 1.0]).amax() < 1e-15);
        let still = LinearDynamics::constant_velocity(0.0, 0.08).unwrap();
        assert_eq!(still.mean_step(&x), x);
    }

    #[test]
    fn predict_requires_current_slice() {
        let mut g = FactorGraph::new();
        g.add_variable(VariableKey::target(1, 0, 4)).unwrap();
        g.add_variable(VariableKey::bias(1, 2)).unwrap();
        let dynamics = DynamicsModel::uniform(
            [Subject::Target(1)],
            LinearDynamics::constant_velocity(0.1, 0.08).unwrap(),
        );
        assert!(predict(&mut g, &dynamics, 3).is_err());
        predict(&mut g, &dynamics, 0).unwrap();
        assert!(g.has_variable(&VariableKey::target(1, 1, 4)));
        assert_eq!(g.variables().len(), 3);
        assert_eq!(g.factor_count(), 1);
    }

    #[test]
    fn decouple_two_scalars() {
        let mut g = FactorGraph::new();
        g.add_variable(label(0)).unwrap();
        g.add_variable(label(1)).unwrap();
        let joint = CanonicalGaussian::new(
            vec![label(0), label(1)],
            dvector![1.0, 2.0],
            dmatrix![2.0, 1.0; 1.0, 2.0],
        )
        .unwrap();
        g.add_factor(FactorKind::Prior, joint.clone()).unwrap();
        let structure =
            CommonStructure::new(set(&[label(0)]), [(2, set(&[label(1)]))].into()).unwrap();
        decouple_local(&mut g, &structure, &VarSet::new()).unwrap();
        let out = g.joint_canonical();
        assert!((out.info_matrix() - dmatrix![1.5, 0.0; 0.0, 1.5]).amax() < 1e-14);
        let mean_before = joint.mean().unwrap();
        assert!((out.mean().unwrap() - mean_before).amax() < 1e-14);
    }

    #[test]
    fn decouple_without_local_is_noop() {
        let mut g = FactorGraph::new();
        g.add_variable(label(1)).unwrap();
        g.add_factor(
            FactorKind::Prior,
            CanonicalGaussian::new(vec![label(1)], dvector![1.0], dmatrix![1.0]).unwrap(),
        )
        .unwrap();
        let before = g.clone();
        let structure = CommonStructure::new(VarSet::new(), [(2, set(&[label(1)]))].into()).unwrap();
        decouple_local(&mut g, &structure, &VarSet::new()).unwrap();
        assert_eq!(g, before);
    }

    #[test]
    fn regain_with_empty_core() {
        let mut g = FactorGraph::new();
        g.add_variable(label(0)).unwrap();
        g.add_variable(label(1)).unwrap();
        g.add_factor(
            FactorKind::DenseMarginalization,
            CanonicalGaussian::new(
                vec![label(0), label(1)],
                dvector![0.0, 0.0],
                dmatrix![2.0, 1.0; 1.0, 2.0],
            )
            .unwrap(),
        )
        .unwrap();
        let structure = CommonStructure::new(
            VarSet::new(),
            [(1, set(&[label(0)])), (3, set(&[label(1)]))].into(),
        )
        .unwrap();
        regain_conditional_independence(&mut g, &structure).unwrap();
        let out = g.joint_canonical();
        assert!((out.info_matrix() - dmatrix![1.5, 0.0; 0.0, 1.5]).amax() < 1e-14);
    }

    #[test]
    fn regain_rejects_partial_core_overlap() {
        let structure = CommonStructure::new(
            VarSet::new(),
            [
                (1, set(&[label(0), label(1)])),
                (2, set(&[label(1), label(2)])),
                (3, set(&[label(2), label(0)])),
            ]
            .into(),
        )
        .unwrap();
        let mut g = FactorGraph::new();
        for i in 0..3 {
            g.add_variable(label(i)).unwrap();
        }
        g.add_factor(
            FactorKind::DenseMarginalization,
            CanonicalGaussian::new(
                vec![label(0), label(1), label(2)],
                DVector::zeros(3),
                DMatrix::identity(3, 3),
            )
            .unwrap(),
        )
        .unwrap();
        assert!(matches!(
            regain_conditional_independence(&mut g, &structure),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn structure_rejects_local_common_overlap() {
        assert!(CommonStructure::new(set(&[label(0)]), [(1, set(&[label(0)]))].into()).is_err());
    }

    #[test]
    fn static_only_graph_is_unchanged() {
        let mut g = FactorGraph::new();
        g.add_variable(label(0)).unwrap();
        g.add_variable(label(1)).unwrap();
        g.add_factor(
            FactorKind::Prior,
            CanonicalGaussian::new(
                vec![label(0), label(1)],
                dvector![1.0, 0.0],
                dmatrix![2.0, 0.5; 0.5, 1.0],
            )
            .unwrap(),
        )
        .unwrap();
        let before = g.clone();
        let structure =
            CommonStructure::new(set(&[label(0)]), [(7, set(&[label(1)]))].into()).unwrap();
        let report = filter_step(&mut g, &structure, 0, std::iter::empty()).unwrap();
        assert_eq!(report.lambda_min, 1.0);
        assert_eq!(report.dims_marginalized, 0);
        assert_eq!(g, before);
    }
}
