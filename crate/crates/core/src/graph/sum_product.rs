//! Gaussian sum-product on acyclic factor graphs, in information form.
//!
//! Variable-to-factor messages are products of the other incoming messages;
//! factor-to-variable messages marginalize the factor times its other incoming
//! messages onto the receiving variable. On a tree two sweeps (leaves to root,
//! then root to leaves) give exact variable and factor beliefs.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::gaussian::{CanonicalGaussian, VarSet, VariableKey};

use super::{FactorGraph, FactorId};

#[derive(Debug, Clone)]
pub struct TreeBeliefs {
    variables: BTreeMap<VariableKey, CanonicalGaussian>,
    factors: BTreeMap<FactorId, CanonicalGaussian>,
}

struct Layout<'a> {
    graph: &'a FactorGraph,
    vars: Vec<VariableKey>,
    factor_ids: Vec<FactorId>,
    adjacency: Vec<Vec<usize>>,
}

impl<'a> Layout<'a> {
    fn new(graph: &'a FactorGraph) -> Result<Self> {
        let vars: Vec<VariableKey> = graph.variables().iter().copied().collect();
        let factor_ids: Vec<FactorId> = graph.factors().map(|f| f.id()).collect();
        let nv = vars.len();
        let mut adjacency = vec![Vec::new(); nv + factor_ids.len()];
        let mut parent: Vec<usize> = (0..adjacency.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (fi, id) in factor_ids.iter().enumerate() {
            let fnode = nv + fi;
            for v in graph.factor(*id).unwrap().adjacency() {
                let vnode = vars.binary_search(v).expect("factor scope within graph");
                let (a, b) = (find(&mut parent, fnode), find(&mut parent, vnode));
                if a == b {
                    return Err(Error::structural(format!(
                        "factor graph has a cycle through factor {id} and {v}"
                    )));
                }
                parent[a] = b;
                adjacency[fnode].push(vnode);
                adjacency[vnode].push(fnode);
            }
        }
        Ok(Layout {
            graph,
            vars,
            factor_ids,
            adjacency,
        })
    }

    fn is_var(&self, node: usize) -> bool {
        node < self.vars.len()
    }

    fn factor_payload(&self, node: usize) -> &CanonicalGaussian {
        let id = self.factor_ids[node - self.vars.len()];
        self.graph.factor(id).unwrap().payload()
    }

    /// Message `from → to` given the messages into `from` from all its other neighbours.
    fn message(
        &self,
        from: usize,
        to: usize,
        messages: &HashMap<(usize, usize), CanonicalGaussian>,
    ) -> Result<CanonicalGaussian> {
        let incoming = self.adjacency[from]
            .iter()
            .filter(|&&n| n != to)
            .map(|&n| &messages[&(n, from)]);
        if self.is_var(from) {
            let scope: VarSet = [self.vars[from]].into_iter().collect();
            CanonicalGaussian::product(&scope, incoming)
        } else {
            let payload = self.factor_payload(from);
            let scope = payload.var_set();
            let local = CanonicalGaussian::product(&scope, std::iter::once(payload).chain(incoming))?;
            local.marginalize(&[self.vars[to]].into_iter().collect())
        }
    }
}

impl TreeBeliefs {
    /// Run both message sweeps over every connected component.
    pub fn compute(graph: &FactorGraph) -> Result<Self> {
        let layout = Layout::new(graph)?;
        let n = layout.adjacency.len();
        let mut messages: HashMap<(usize, usize), CanonicalGaussian> = HashMap::new();
        let mut visited = vec![false; n];

        for root in 0..n {
            if visited[root] {
                continue;
            }
            let mut order = Vec::new();
            let mut parent = HashMap::new();
            let mut queue = VecDeque::from([root]);
            visited[root] = true;
            while let Some(node) = queue.pop_front() {
                order.push(node);
                for &next in &layout.adjacency[node] {
                    if !visited[next] {
                        visited[next] = true;
                        parent.insert(next, node);
                        queue.push_back(next);
                    }
                }
            }
            for &node in order.iter().rev() {
                if let Some(&p) = parent.get(&node) {
                    let m = layout.message(node, p, &messages)?;
                    messages.insert((node, p), m);
                }
            }
            for &node in &order {
                for &child in &layout.adjacency[node] {
                    if parent.get(&child) == Some(&node) {
                        let m = layout.message(node, child, &messages)?;
                        messages.insert((node, child), m);
                    }
                }
            }
        }

        let mut variables = BTreeMap::new();
        for (vi, v) in layout.vars.iter().enumerate() {
            let scope: VarSet = [*v].into_iter().collect();
            let belief = CanonicalGaussian::product(
                &scope,
                layout.adjacency[vi].iter().map(|&f| &messages[&(f, vi)]),
            )?;
            variables.insert(*v, belief);
        }
        let mut factors = BTreeMap::new();
        for (fi, id) in layout.factor_ids.iter().enumerate() {
            let node = layout.vars.len() + fi;
            let payload = layout.factor_payload(node);
            let belief = CanonicalGaussian::product(
                &payload.var_set(),
                std::iter::once(payload)
                    .chain(layout.adjacency[node].iter().map(|&v| &messages[&(v, node)])),
            )?;
            factors.insert(*id, belief);
        }
        Ok(TreeBeliefs { variables, factors })
    }

    pub fn variable(&self, v: &VariableKey) -> Option<&CanonicalGaussian> {
        self.variables.get(v)
    }

    /// Joint belief over one factor's scope.
    pub fn factor(&self, id: FactorId) -> Option<&CanonicalGaussian> {
        self.factors.get(&id)
    }

    /// Marginal over `keep`, which must be one variable or fit inside one factor's scope.
    pub fn marginal(&self, keep: &VarSet) -> Result<CanonicalGaussian> {
        if keep.len() == 1 {
            let v = keep.iter().next().unwrap();
            return self
                .variables
                .get(v)
                .cloned()
                .ok_or_else(|| Error::structural(format!("{v} not in graph")));
        }
        let host = self
            .factors
            .values()
            .find(|b| keep.iter().all(|v| b.contains(v)))
            .ok_or_else(|| {
                Error::structural("keep set does not lie within a single factor scope")
            })?;
        host.marginalize(keep)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::Timestep;
    use crate::graph::FactorKind;
    use nalgebra::{dmatrix, dvector};

    fn var(i: u32) -> VariableKey {
        VariableKey::label(i, Timestep::Static, 1)
    }

    #[test]
    fn chain_beliefs_match_dense() {
        let mut g = FactorGraph::new();
        for i in 0..3 {
            g.add_variable(var(i)).unwrap();
        }
        g.add_factor(
            FactorKind::Prior,
            CanonicalGaussian::new(vec![var(0)], dvector![1.0], dmatrix![2.0]).unwrap(),
        )
        .unwrap();
        for i in 0..2 {
            g.add_factor(
                FactorKind::DynamicPrediction,
                CanonicalGaussian::new(
                    vec![var(i), var(i + 1)],
                    dvector![0.1, -0.1],
                    dmatrix![1.0, -1.0; -1.0, 1.0],
                )
                .unwrap(),
            )
            .unwrap();
        }
        let beliefs = TreeBeliefs::compute(&g).unwrap();
        for i in 0..3 {
            let keep: VarSet = [var(i)].into_iter().collect();
            let dense = g.marginal(&keep).unwrap();
            let bp = beliefs.marginal(&keep).unwrap();
            assert!(bp.max_abs_diff(&dense).unwrap() < 1e-12);
        }
        let pair: VarSet = [var(1), var(2)].into_iter().collect();
        let dense = g.marginal(&pair).unwrap();
        assert!(beliefs.marginal(&pair).unwrap().max_abs_diff(&dense).unwrap() < 1e-12);
        let skip: VarSet = [var(0), var(2)].into_iter().collect();
        assert!(beliefs.marginal(&skip).is_err());
    }

    #[test]
    fn cycles_are_rejected() {
        let mut g = FactorGraph::new();
        for i in 0..3 {
            g.add_variable(var(i)).unwrap();
        }
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            g.add_factor(
                FactorKind::DenseMarginalization,
                CanonicalGaussian::zero(vec![var(a), var(b)]).unwrap(),
            )
            .unwrap();
        }
        assert!(matches!(TreeBeliefs::compute(&g), Err(Error::Structural(_))));
    }
}
