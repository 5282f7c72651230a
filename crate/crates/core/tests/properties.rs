use ddf_core::gaussian::{deflation_constant, min_eigenvalue};
use ddf_core::sim::ScenarioConfig;
use ddf_core::{CanonicalGaussian, FactorGraph, FactorKind, FusionMessage, Timestep, VarSet, VariableKey};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn keys(dims: &[usize]) -> Vec<VariableKey> {
    dims.iter()
        .enumerate()
        .map(|(i, d)| VariableKey::label(i as u32, Timestep::Static, *d))
        .collect()
}

/// Random SPD matrix: B Bᵀ plus a diagonal floor.
fn spd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, n * n)
        .prop_map(move |v| {
            let b = DMatrix::from_vec(n, n, v);
            &b * b.transpose() + DMatrix::identity(n, n) * 0.3
        })
}

fn gaussian(max_blocks: usize) -> impl Strategy<Value = CanonicalGaussian> {
    prop::collection::vec(1..=3usize, 1..=max_blocks).prop_flat_map(|dims| {
        let n: usize = dims.iter().sum();
        (spd(n), prop::collection::vec(-3.0..3.0f64, n)).prop_map(move |(m, z)| {
            CanonicalGaussian::new(keys(&dims), DVector::from_vec(z), m).unwrap()
        })
    })
}

fn gaussian_pair() -> impl Strategy<Value = (CanonicalGaussian, CanonicalGaussian)> {
    gaussian(4).prop_flat_map(|a| {
        let n = a.dim();
        let vars = a.vars().to_vec();
        (Just(a), spd(n), prop::collection::vec(-3.0..3.0f64, n)).prop_map(move |(a, m, z)| {
            let b = CanonicalGaussian::new(vars.clone(), DVector::from_vec(z), m).unwrap();
            (a, b)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn product_then_division_restores((a, b) in gaussian_pair()) {
        let back = a.multiply(&b).unwrap().divide(&b).unwrap();
        prop_assert!(back.max_abs_diff(&a).unwrap() < 1e-12);
        let ab = a.multiply(&b).unwrap();
        let ba = b.multiply(&a).unwrap();
        prop_assert!(ab.max_abs_diff(&ba).unwrap() == 0.0);
    }

    #[test]
    fn marginal_matches_covariance_block(g in gaussian(6), pick in prop::collection::vec(any::<bool>(), 6)) {
        let vars = g.vars().to_vec();
        let mut keep: VarSet = vars.iter().zip(&pick).filter(|(_, p)| **p).map(|(v, _)| *v).collect();
        if keep.is_empty() {
            keep.insert(vars[0]);
        }
        // Independent oracle: invert once, slice mean and covariance, invert back.
        let cov = g.info_matrix().clone().try_inverse().unwrap();
        let mean = &cov * g.info_vector();
        let idx: Vec<usize> = keep.iter().flat_map(|v| g.range_of(v).unwrap()).collect();
        let sub_cov = DMatrix::from_fn(idx.len(), idx.len(), |i, j| cov[(idx[i], idx[j])]);
        let sub_mean = DVector::from_fn(idx.len(), |i, _| mean[idx[i]]);
        let m = g.marginalize(&keep).unwrap();
        let (m_mean, m_cov) = m.to_moment().unwrap();
        prop_assert!((m_mean - sub_mean).amax() < 1e-8);
        prop_assert!((m_cov - sub_cov).amax() < 1e-8);
    }

    #[test]
    fn deflation_is_conservative_tight_and_mean_preserving((tr, sp) in gaussian_pair()) {
        let lambda = deflation_constant(tr.info_matrix(), sp.info_matrix()).unwrap();
        prop_assert!(lambda > 0.0);
        let gap = tr.info_matrix() - sp.info_matrix() * lambda;
        let floor = min_eigenvalue(&gap).unwrap();
        prop_assert!(floor >= -1e-9, "min eig {floor}");
        if lambda < 1.0 {
            // Tight: a slightly larger constant breaks the ordering.
            let over = tr.info_matrix() - sp.info_matrix() * (lambda * (1.0 + 1e-6));
            prop_assert!(min_eigenvalue(&over).unwrap() < 0.0);
        }
        let deflated = sp.deflate(&tr, lambda).unwrap();
        prop_assert!((deflated.mean().unwrap() - tr.mean().unwrap()).amax() < 1e-8);
    }

    #[test]
    fn split_preserves_joint(g in gaussian(5), cut in 1..5usize) {
        let vars = g.vars().to_vec();
        let cut = cut.min(vars.len());
        let mut graph = FactorGraph::new();
        for v in &vars {
            graph.add_variable(*v).unwrap();
        }
        let id = graph.add_factor(FactorKind::ApproxMarginalization, g.clone()).unwrap();
        let mut groups: Vec<VarSet> = vec![vars[..cut].iter().copied().collect()];
        if cut < vars.len() {
            groups.push(vars[cut..].iter().copied().collect());
        }
        graph.split_factor(id, &groups).unwrap();
        prop_assert!(graph.joint_canonical().max_abs_diff(&g).unwrap() <= 1e-12);
        graph.audit().unwrap();
    }

    #[test]
    fn message_text_round_trip(g in gaussian(3), sender in 1..50u32, receiver in 1..50u32, k in 0..1000u32) {
        let msg = FusionMessage { sender, receiver, timestep: k, payload: g };
        let back = FusionMessage::from_text(&msg.to_text()).unwrap();
        prop_assert_eq!(back, msg);
    }

    #[test]
    fn config_toml_round_trip(seed in any::<u64>(), runs in 1..1000u32, horizon in 1..500u32, on in any::<bool>()) {
        let mut cfg = ScenarioConfig::four_robot_chain();
        cfg.seed = seed;
        cfg.mc_runs = runs;
        cfg.horizon_steps = horizon;
        cfg.conservative_filtering = on;
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
