//! Gaussian factor graphs: variable blocks joined by canonical-form factors.
//!
//! The graph's joint density is the product of all factor payloads. Dense
//! assembly ([`FactorGraph::joint_canonical`]) is the reference inference path;
//! [`sum_product`] implements tree message passing that must agree with it.

pub mod sum_product;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{CanonicalGaussian, Timestep, VarSet, VariableKey};
use crate::text;

pub use sum_product::TreeBeliefs;

/// Provenance of a factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FactorKind {
    LocalMeasurement,
    DynamicPrediction,
    Fusion,
    DenseMarginalization,
    ApproxMarginalization,
    Prior,
}

impl fmt::Display for FactorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub type FactorId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct FactorNode {
    id: FactorId,
    kind: FactorKind,
    payload: CanonicalGaussian,
}

impl FactorNode {
    pub fn id(&self) -> FactorId {
        self.id
    }

    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    pub fn payload(&self) -> &CanonicalGaussian {
        &self.payload
    }

    /// The variables this factor is connected to.
    pub fn adjacency(&self) -> &[VariableKey] {
        self.payload.vars()
    }

    pub fn touches(&self, vars: &VarSet) -> bool {
        self.adjacency().iter().any(|v| vars.contains(v))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactorGraph {
    variables: VarSet,
    factors: BTreeMap<FactorId, FactorNode>,
    next_id: FactorId,
}

impl FactorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn variables(&self) -> &VarSet {
        &self.variables
    }

    pub fn has_variable(&self, v: &VariableKey) -> bool {
        self.variables.contains(v)
    }

    /// Look up a variable by identity, returning the stored key (with its dimension).
    pub fn variable(&self, v: &VariableKey) -> Option<&VariableKey> {
        self.variables.get(v)
    }

    /// Variables at a given timestep.
    pub fn variables_at(&self, timestep: Timestep) -> VarSet {
        self.variables
            .iter()
            .filter(|v| v.timestep == timestep)
            .copied()
            .collect()
    }

    pub fn factors(&self) -> impl Iterator<Item = &FactorNode> {
        self.factors.values()
    }

    pub fn factor(&self, id: FactorId) -> Option<&FactorNode> {
        self.factors.get(&id)
    }

    pub fn factor_count(&self) -> usize {
        self.factors.len()
    }

    /// Factors adjacent to any of `vars`, in id order.
    pub fn factors_touching(&self, vars: &VarSet) -> Vec<FactorId> {
        self.factors
            .values()
            .filter(|f| f.touches(vars))
            .map(|f| f.id)
            .collect()
    }

    pub fn add_variable(&mut self, v: VariableKey) -> Result<()> {
        if self.variables.contains(&v) {
            return Err(Error::structural(format!("variable {v} already present")));
        }
        self.variables.insert(v);
        Ok(())
    }

    /// Remove a variable with no adjacent factors.
    pub fn remove_variable(&mut self, v: &VariableKey) -> Result<()> {
        if !self.variables.contains(v) {
            return Err(Error::structural(format!("variable {v} not present")));
        }
        if self.factors.values().any(|f| f.payload.contains(v)) {
            return Err(Error::structural(format!(
                "variable {v} still has adjacent factors"
            )));
        }
        self.variables.remove(v);
        Ok(())
    }

    pub fn add_factor(&mut self, kind: FactorKind, payload: CanonicalGaussian) -> Result<FactorId> {
        if payload.is_empty() {
            return Err(Error::structural("factor must touch at least one variable"));
        }
        for v in payload.vars() {
            match self.variables.get(v) {
                None => {
                    return Err(Error::structural(format!(
                        "factor references unknown variable {v}"
                    )))
                }
                Some(known) if known.dim != v.dim => {
                    return Err(Error::structural(format!(
                        "factor uses {v} with dimension {} but graph has {}",
                        v.dim, known.dim
                    )))
                }
                Some(_) => {}
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        self.factors.insert(id, FactorNode { id, kind, payload });
        Ok(id)
    }

    pub fn remove_factor(&mut self, id: FactorId) -> Result<FactorNode> {
        self.factors
            .remove(&id)
            .ok_or_else(|| Error::structural(format!("no factor with id {id}")))
    }

    pub fn clear_factors(&mut self) {
        self.factors.clear();
    }

    /// Multiply every factor's canonical parameters by `factor`.
    pub fn scale_factors(&mut self, factor: f64) {
        for node in self.factors.values_mut() {
            node.payload = node.payload.scale(factor);
        }
    }

    /// Product of every factor, written over all graph variables.
    pub fn joint_canonical(&self) -> CanonicalGaussian {
        CanonicalGaussian::product(&self.variables, self.factors.values().map(|f| &f.payload))
            .expect("factor scopes are validated on insertion")
    }

    /// Marginal density over `keep` by dense assembly and Schur complement.
    pub fn marginal(&self, keep: &VarSet) -> Result<CanonicalGaussian> {
        let joint = self.joint_canonical();
        if joint.info_matrix().clone().cholesky().is_none() {
            return Err(Error::numerical(
                "graph joint is not positive definite",
                crate::gaussian::condition_number(joint.info_matrix()),
            ));
        }
        joint.marginalize(keep)
    }

    /// Marginal by tree sum-product. `keep` must be a single variable or lie
    /// within one factor's scope, and the graph must be acyclic.
    pub fn marginal_by_message_passing(&self, keep: &VarSet) -> Result<CanonicalGaussian> {
        TreeBeliefs::compute(self)?.marginal(keep)
    }

    /// Remove `drop` and every factor touching it. Dropped variables are grouped
    /// into clusters linked through shared factors; each cluster's factors are
    /// replaced by one dense factor over that cluster's Markov blanket, so
    /// unrelated parts of the graph never get coupled. Returns the new factor
    /// ids (clusters with an empty blanket add nothing).
    pub fn eliminate(&mut self, drop: &VarSet) -> Result<Vec<FactorId>> {
        if let Some(missing) = drop.iter().find(|v| !self.variables.contains(v)) {
            return Err(Error::structural(format!("cannot eliminate unknown {missing}")));
        }
        let mut remaining = drop.clone();
        let mut created = Vec::new();
        while let Some(seed) = remaining.pop_first() {
            let mut cluster: VarSet = [seed].into_iter().collect();
            let mut adjacent: BTreeSet<FactorId> = BTreeSet::new();
            let mut frontier = vec![seed];
            while let Some(v) = frontier.pop() {
                let only: VarSet = [v].into_iter().collect();
                for id in self.factors_touching(&only) {
                    if !adjacent.insert(id) {
                        continue;
                    }
                    for w in self.factors[&id].adjacency() {
                        if remaining.remove(w) {
                            cluster.insert(*w);
                            frontier.push(*w);
                        }
                    }
                }
            }
            let mut scope = VarSet::new();
            for id in &adjacent {
                scope.extend(self.factors[id].adjacency().iter().copied());
            }
            let product =
                CanonicalGaussian::product(&scope, adjacent.iter().map(|id| &self.factors[id].payload))?;
            let blanket: VarSet = scope.difference(&cluster).copied().collect();
            let dense = product.marginalize(&blanket)?;
            for id in &adjacent {
                self.factors.remove(id);
            }
            for v in &cluster {
                self.variables.remove(v);
            }
            if !blanket.is_empty() {
                created.push(self.add_factor(FactorKind::DenseMarginalization, dense)?);
            }
        }
        Ok(created)
    }

    /// Re-factorize one factor into unary factors per group (diagonal blocks and
    /// information-vector segments) plus pairwise factors holding only the
    /// off-diagonal blocks between groups. New factors inherit the original kind.
    pub fn split_factor(&mut self, id: FactorId, groups: &[VarSet]) -> Result<Vec<FactorId>> {
        let node = self
            .factors
            .get(&id)
            .ok_or_else(|| Error::structural(format!("no factor with id {id}")))?;
        let scope = node.payload.var_set();
        let mut covered = VarSet::new();
        for group in groups {
            if group.is_empty() {
                return Err(Error::structural("split groups must be non-empty"));
            }
            for v in group {
                if !scope.contains(v) {
                    return Err(Error::structural(format!(
                        "split group variable {v} not in factor scope"
                    )));
                }
                if !covered.insert(*v) {
                    return Err(Error::structural(format!(
                        "variable {v} appears in more than one split group"
                    )));
                }
            }
        }
        if covered != scope {
            return Err(Error::structural("split groups do not cover the factor scope"));
        }

        let kind = node.kind;
        let payload = node.payload.clone();
        let mut parts = Vec::new();
        for group in groups {
            let vars: Vec<VariableKey> = group.iter().copied().collect();
            parts.push(CanonicalGaussian::new(
                vars,
                payload.vector_segment(group)?,
                payload.matrix_block(group, group)?,
            )?);
        }
        for (a, ga) in groups.iter().enumerate() {
            for gb in &groups[a + 1..] {
                let cross = payload.matrix_block(ga, gb)?;
                if cross.iter().all(|x| *x == 0.0) {
                    continue;
                }
                let na = cross.nrows();
                let n = na + cross.ncols();
                let mut matrix = nalgebra::DMatrix::zeros(n, n);
                matrix.view_mut((0, na), cross.shape()).copy_from(&cross);
                matrix
                    .view_mut((na, 0), (cross.ncols(), na))
                    .copy_from(&cross.transpose());
                let vars: Vec<VariableKey> = ga.iter().chain(gb.iter()).copied().collect();
                parts.push(CanonicalGaussian::new(
                    vars,
                    nalgebra::DVector::zeros(n),
                    matrix,
                )?);
            }
        }
        self.factors.remove(&id);
        parts
            .into_iter()
            .map(|p| self.add_factor(kind, p))
            .collect()
    }

    /// Check that every factor's scope is consistent with its kind.
    pub fn audit(&self) -> Result<()> {
        for f in self.factors.values() {
            let vars = f.adjacency();
            let timesteps: std::collections::BTreeSet<Timestep> = vars
                .iter()
                .filter(|v| !v.is_static())
                .map(|v| v.timestep)
                .collect();
            let ok = match f.kind {
                FactorKind::Prior => true,
                FactorKind::DynamicPrediction => {
                    vars.len() == 2
                        && vars[0].subject == vars[1].subject
                        && matches!(
                            (vars[0].timestep, vars[1].timestep),
                            (Timestep::At(a), Timestep::At(b)) if b == a + 1
                        )
                }
                FactorKind::LocalMeasurement | FactorKind::Fusion => timesteps.len() <= 1,
                FactorKind::DenseMarginalization | FactorKind::ApproxMarginalization => true,
            };
            if !ok {
                let names: Vec<String> = vars.iter().map(|v| v.to_string()).collect();
                return Err(Error::structural(format!(
                    "factor {} of kind {} has inconsistent scope [{}]",
                    f.id,
                    f.kind,
                    names.join(", ")
                )));
            }
        }
        Ok(())
    }

    /// Deterministic text dump: variables in key order, factors in id order,
    /// floats at 17 significant digits.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        writeln!(out, "variables {}", self.variables.len()).unwrap();
        for v in &self.variables {
            writeln!(out, "  {v}").unwrap();
        }
        writeln!(out, "factors {}", self.factors.len()).unwrap();
        for f in self.factors.values() {
            writeln!(out, "factor {} {}", f.id, f.kind).unwrap();
            let names: Vec<String> = f.adjacency().iter().map(|v| v.to_string()).collect();
            writeln!(out, "  vars {}", names.join(" ")).unwrap();
            writeln!(out, "  zeta {}", text::fmt_vector(f.payload.info_vector())).unwrap();
            writeln!(out, "  lambda").unwrap();
            for r in 0..f.payload.dim() {
                writeln!(out, "    {}", text::fmt_row(f.payload.info_matrix(), r)).unwrap();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector, DMatrix, DVector};

    fn var(i: u32) -> VariableKey {
        VariableKey::label(i, Timestep::Static, 1)
    }

    fn unary(v: VariableKey, zeta: f64, lambda: f64) -> CanonicalGaussian {
        CanonicalGaussian::new(vec![v], dvector![zeta], dmatrix![lambda]).unwrap()
    }

    fn pair(a: VariableKey, b: VariableKey, m: DMatrix<f64>) -> CanonicalGaussian {
        CanonicalGaussian::new(vec![a, b], DVector::zeros(2), m).unwrap()
    }

    fn set(vars: &[VariableKey]) -> VarSet {
        vars.iter().copied().collect()
    }

    #[test]
    fn add_variable_once() {
        let mut g = FactorGraph::new();
        g.add_variable(var(0)).unwrap();
        assert_eq!(g.variables().len(), 1);
        assert_eq!(g.factor_count(), 0);
        assert!(g.add_variable(var(0)).is_err());
        let next = VariableKey::target(2, 1, 4);
        g.add_variable(next).unwrap();
        assert_eq!(g.variables_at(Timestep::At(1)).len(), 1);
    }

    #[test]
    fn add_factor_requires_known_variables() {
        let mut g = FactorGraph::new();
        g.add_variable(var(0)).unwrap();
        assert!(g.add_factor(FactorKind::Prior, unary(var(1), 0.0, 1.0)).is_err());
        let wide = VariableKey::label(0, Timestep::Static, 2);
        assert!(g
            .add_factor(FactorKind::Prior, CanonicalGaussian::zero(vec![wide]).unwrap())
            .is_err());
    }

    #[test]
    fn joint_accumulates_additively() {
        let mut g = FactorGraph::new();
        g.add_variable(var(0)).unwrap();
        g.add_variable(var(1)).unwrap();
        g.add_factor(FactorKind::Prior, unary(var(0), 1.0, 2.0)).unwrap();
        let before = g.joint_canonical();
        assert_eq!(before.vars(), &[var(0), var(1)]);
        assert_eq!(before.info_matrix(), &dmatrix![2.0, 0.0; 0.0, 0.0]);

        g.add_factor(FactorKind::Fusion, CanonicalGaussian::zero(vec![var(1)]).unwrap())
            .unwrap();
        assert_eq!(g.joint_canonical(), before);

        g.add_factor(FactorKind::LocalMeasurement, unary(var(0), 0.5, 3.0))
            .unwrap();
        let after = g.joint_canonical();
        assert_eq!(after.info_matrix()[(0, 0)], 5.0);
        assert_eq!(after.info_vector()[0], 1.5);
    }

    #[test]
    fn chain_joint_is_tridiagonal() {
        let mut g = FactorGraph::new();
        for i in 0..3 {
            g.add_variable(var(i)).unwrap();
        }
        let m = dmatrix![1.0, -1.0; -1.0, 1.0];
        g.add_factor(FactorKind::DenseMarginalization, pair(var(0), var(1), m.clone()))
            .unwrap();
        g.add_factor(FactorKind::DenseMarginalization, pair(var(1), var(2), m))
            .unwrap();
        let joint = g.joint_canonical();
        assert_eq!(joint.info_matrix()[(0, 2)], 0.0);
        assert_eq!(joint.info_matrix()[(2, 0)], 0.0);
        assert_eq!(joint.info_matrix()[(1, 1)], 2.0);
    }

    #[test]
    fn eliminate_isolated_prior_leaves_no_factor() {
        let mut g = FactorGraph::new();
        g.add_variable(var(0)).unwrap();
        g.add_variable(var(1)).unwrap();
        g.add_factor(FactorKind::Prior, unary(var(0), 1.0, 2.0)).unwrap();
        g.add_factor(FactorKind::Prior, unary(var(1), 3.0, 4.0)).unwrap();
        let rest = g.marginal(&set(&[var(1)])).unwrap();
        assert!(g.eliminate(&set(&[var(0)])).unwrap().is_empty());
        assert_eq!(g.joint_canonical(), rest);
    }

    #[test]
    fn eliminate_chain_midpoint_creates_fill_in() {
        let mut g = FactorGraph::new();
        for i in 0..3 {
            g.add_variable(var(i)).unwrap();
            g.add_factor(FactorKind::Prior, unary(var(i), 0.0, 1.0)).unwrap();
        }
        let m = dmatrix![1.0, -0.5; -0.5, 1.0];
        g.add_factor(FactorKind::DynamicPrediction, pair(var(0), var(1), m.clone()))
            .unwrap();
        g.add_factor(FactorKind::DynamicPrediction, pair(var(1), var(2), m))
            .unwrap();
        let ids = g.eliminate(&set(&[var(1)])).unwrap();
        assert_eq!(ids.len(), 1);
        let id = ids[0];
        let dense = g.factor(id).unwrap();
        assert_eq!(dense.kind(), FactorKind::DenseMarginalization);
        assert_eq!(dense.adjacency(), &[var(0), var(2)]);
        assert!(dense.payload().info_matrix()[(0, 1)].abs() > 0.0);
        // Unary priors on x0 and x2 were not adjacent to x1 and survive.
        assert_eq!(g.factor_count(), 3);
    }

    #[test]
    fn eliminate_keeps_unlinked_clusters_apart() {
        let mut g = FactorGraph::new();
        for i in 0..4 {
            g.add_variable(var(i)).unwrap();
        }
        let m = dmatrix![2.0, -1.0; -1.0, 2.0];
        g.add_factor(FactorKind::DynamicPrediction, pair(var(0), var(1), m.clone()))
            .unwrap();
        g.add_factor(FactorKind::DynamicPrediction, pair(var(2), var(3), m))
            .unwrap();
        let ids = g.eliminate(&set(&[var(0), var(2)])).unwrap();
        assert_eq!(ids.len(), 2);
        assert_eq!(g.factor(ids[0]).unwrap().adjacency(), &[var(1)]);
        assert_eq!(g.factor(ids[1]).unwrap().adjacency(), &[var(3)]);
    }

    #[test]
    fn split_two_groups_structure() {
        let mut g = FactorGraph::new();
        g.add_variable(var(0)).unwrap();
        g.add_variable(var(1)).unwrap();
        let dense = CanonicalGaussian::new(
            vec![var(0), var(1)],
            dvector![1.0, 2.0],
            dmatrix![3.0, 0.7; 0.7, 4.0],
        )
        .unwrap();
        let id = g.add_factor(FactorKind::ApproxMarginalization, dense.clone()).unwrap();
        let ids = g
            .split_factor(id, &[set(&[var(0)]), set(&[var(1)])])
            .unwrap();
        assert_eq!(ids.len(), 3);
        let pairwise = g.factor(ids[2]).unwrap().payload();
        assert_eq!(pairwise.info_matrix(), &dmatrix![0.0, 0.7; 0.7, 0.0]);
        assert!(pairwise.info_vector().iter().all(|x| *x == 0.0));
        assert_eq!(g.joint_canonical(), dense);
    }

    #[test]
    fn split_block_diagonal_gives_unaries_only() {
        let mut g = FactorGraph::new();
        g.add_variable(var(0)).unwrap();
        g.add_variable(var(1)).unwrap();
        let dense = CanonicalGaussian::new(
            vec![var(0), var(1)],
            dvector![1.0, 2.0],
            dmatrix![3.0, 0.0; 0.0, 4.0],
        )
        .unwrap();
        let id = g.add_factor(FactorKind::ApproxMarginalization, dense).unwrap();
        let ids = g.split_factor(id, &[set(&[var(1)]), set(&[var(0)])]).unwrap();
        assert_eq!(ids.len(), 2);
        assert!(g.split_factor(99, &[]).is_err());
    }

    #[test]
    fn split_rejects_bad_partitions() {
        let mut g = FactorGraph::new();
        g.add_variable(var(0)).unwrap();
        g.add_variable(var(1)).unwrap();
        let id = g
            .add_factor(FactorKind::Prior, CanonicalGaussian::zero(vec![var(0), var(1)]).unwrap())
            .unwrap();
        assert!(g.split_factor(id, &[set(&[var(0)])]).is_err());
        assert!(g
            .split_factor(id, &[set(&[var(0), var(1)]), set(&[var(1)])])
            .is_err());
    }

    #[test]
    fn audit_flags_inconsistent_prediction() {
        let mut g = FactorGraph::new();
        let a = VariableKey::target(1, 0, 1);
        let b = VariableKey::target(1, 2, 1);
        g.add_variable(a).unwrap();
        g.add_variable(b).unwrap();
        g.add_factor(FactorKind::DynamicPrediction, pair(a, b, DMatrix::identity(2, 2)))
            .unwrap();
        assert!(g.audit().is_err());
    }

    #[test]
    fn dump_is_deterministic_and_ordered() {
        let mut g = FactorGraph::new();
        g.add_variable(var(1)).unwrap();
        g.add_variable(var(0)).unwrap();
        g.add_factor(FactorKind::Prior, unary(var(1), 0.1, 2.0)).unwrap();
        let dump = g.dump();
        assert!(dump.starts_with("variables 2\n  label(0)@static[1]\n  label(1)@static[1]\n"));
        assert!(dump.contains("factor 0 Prior\n  vars label(1)@static[1]\n  zeta 1.0000000000000001e-1\n"));
        assert_eq!(dump, g.clone().dump());
    }
}
