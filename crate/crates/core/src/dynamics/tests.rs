#![allow(clippy::needless_range_loop)]

use super::*;
use crate::model::{AffineStage, PREDATOR_E, PREDATOR_S};
use crate::random::{random_affine_model, random_dimensions, random_policy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn predator() -> StackelbergModel {
    StackelbergModel::predator(0.2, None).unwrap()
}

#[test]
fn all_to_shelter_moves_every_prey() {
    let m = predator();
    let pi = PolicyKernel::constant(m.dims(), PREDATOR_S).unwrap();
    let flow = propagate_follower_flow(&m, 0, &pi).unwrap();
    assert_eq!(flow.state_marginal(1), vec![0.0, 1.0]);
    assert_eq!(flow.get(1, PREDATOR_S, PREDATOR_S), 1.0);
}

#[test]
fn point_masses_stay_point_masses() {
    let m = StackelbergModel::majority(3, 3, vec![vec![1.0, 2.0, 3.0]], Some(vec![0.0, 1.0, 0.0])).unwrap();
    let pi = PolicyKernel::constant(m.dims(), 2).unwrap();
    let flow = propagate_follower_flow(&m, 0, &pi).unwrap();
    for t in 0..flow.steps() {
        assert_eq!(flow.at(t).iter().filter(|x| **x == 1.0).count(), 1);
        assert_eq!(flow.at(t).iter().filter(|x| **x == 0.0).count(), 8);
    }
}

#[test]
fn majority_gathers_at_the_chosen_state() {
    let m = StackelbergModel::majority(2, 3, vec![vec![0.3, 0.7]], None).unwrap();
    let pi = PolicyKernel::constant(m.dims(), 0).unwrap();
    let flow = propagate_follower_flow(&m, 0, &pi).unwrap();
    for t in 1..flow.steps() {
        assert_eq!(flow.at(t), &[1.0, 0.0, 0.0, 0.0]);
    }
    // Leader earns r2 - r1 at every gathered epoch t = 1..=T.
    let r = leader_return(&m, 0, &flow).unwrap();
    assert!((r - 3.0 * 0.4).abs() < 1e-12, "{r}");
}

#[test]
fn follower_returns_of_predator_flows() {
    let m = predator();
    let to_s = propagate_follower_flow(&m, 0, &PolicyKernel::constant(m.dims(), PREDATOR_S).unwrap()).unwrap();
    let to_e = propagate_follower_flow(&m, 0, &PolicyKernel::constant(m.dims(), PREDATOR_E).unwrap()).unwrap();
    assert_eq!(follower_return(&m, 0, &to_s).unwrap(), 1.0);
    assert!((follower_return(&m, 0, &to_e).unwrap() - 0.8).abs() < 1e-15);
    assert_eq!(leader_return(&m, 0, &to_s).unwrap(), 1.0);
    assert_eq!(leader_return(&m, 0, &to_e).unwrap(), 0.0);
}

#[test]
fn single_leader_state_marginal_is_constant() {
    let m = predator();
    let flow = propagate_follower_flow(&m, 0, &PolicyKernel::uniform(m.dims())).unwrap();
    let marg = propagate_leader_marginals(&m, 0, &flow).unwrap();
    for t in 0..marg.steps() {
        assert_eq!(marg.at(t), &[1.0]);
    }
}

#[test]
fn flow_independent_leader_chain_matches_matrix_powers() {
    let dims = Dimensions::new(3, 1, 1, 3, 1).unwrap();
    let p = [[0.5, 0.3, 0.2], [0.1, 0.8, 0.1], [0.0, 0.4, 0.6]];
    let stage = {
        let mut st = AffineStage::zeros(&dims);
        for (sl, row) in p.iter().enumerate() {
            st.set_pl_row(&dims, sl, row);
        }
        st
    };
    let m = StackelbergModel::affine(dims, None, vec![1.0], vec![0.2, 0.5, 0.3], vec![vec![stage; 4]]).unwrap();
    let flow = propagate_follower_flow(&m, 0, &PolicyKernel::uniform(m.dims())).unwrap();
    let marg = propagate_leader_marginals(&m, 0, &flow).unwrap();
    let mut mu = [0.2, 0.5, 0.3];
    for t in 0..4 {
        for s in 0..3 {
            assert!((marg.at(t)[s] - mu[s]).abs() < 1e-15);
        }
        let mut next = [0.0; 3];
        for (i, row) in p.iter().enumerate() {
            for (j, pij) in row.iter().enumerate() {
                next[j] += mu[i] * pij;
            }
        }
        mu = next;
    }
}

#[test]
fn consistency_residual_detects_shifts() {
    let m = predator();
    let pi = PolicyKernel::uniform(m.dims());
    let flow = propagate_follower_flow(&m, 0, &pi).unwrap();
    assert_eq!(consistency_residual(&m, 0, &pi, &flow).unwrap(), 0.0);
    let mut shifted = flow.clone();
    shifted.as_mut_slice()[1] += 0.1;
    assert!(consistency_residual(&m, 0, &pi, &shifted).unwrap() >= 0.1 - 1e-15);
}

#[test]
fn random_policies_round_trip_and_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let dims = random_dimensions(&mut rng, 3, 3, 3, 2, 2);
        let m = random_affine_model(&mut rng, dims, &Default::default()).unwrap();
        let pi = random_policy(&mut rng, &dims);
        let la = dims.leader_actions - 1;
        let flow = propagate_follower_flow(&m, la, &pi).unwrap();
        let again = propagate_follower_flow(&m, la, &pi).unwrap();
        assert_eq!(flow.as_slice(), again.as_slice());
        assert!(consistency_residual(&m, la, &pi, &flow).unwrap() <= 1e-12);
        for t in 0..flow.steps() {
            assert!((flow.at(t).iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            assert!(flow.at(t).iter().all(|x| *x >= 0.0));
        }
        let extracted = PolicyKernel::from_flow(&flow);
        let back = propagate_follower_flow(&m, la, &extracted).unwrap();
        assert!(crate::math::max_abs_diff(back.as_slice(), flow.as_slice()) <= 1e-12);
    }
}

#[test]
fn extraction_is_uniform_on_unreached_states() {
    let m = predator();
    let pi = PolicyKernel::constant(m.dims(), PREDATOR_S).unwrap();
    let flow = propagate_follower_flow(&m, 0, &pi).unwrap();
    let ex = PolicyKernel::from_flow(&flow);
    assert_eq!(ex.row(1, PREDATOR_E), &[0.5, 0.5]);
    assert_eq!(ex.row(1, PREDATOR_S), &[0.0, 1.0]);
}

#[test]
fn normalisation_clamps_noise_and_rejects_drift() {
    let mut v = vec![0.5, 0.5 + 1e-13, -1e-15];
    normalize(&mut v, 1).unwrap();
    assert_eq!(v[2], 0.0);
    assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    let mut bad = vec![0.5, 0.4];
    assert!(matches!(
        normalize(&mut bad, 3),
        Err(Error::NormalizationDrift { t: 3, .. })
    ));
    let mut neg = vec![1.1, -0.1];
    assert!(normalize(&mut neg, 1).is_err());
}

#[test]
fn dimension_mismatches_are_reported() {
    let m = predator();
    let pi = PolicyKernel::new(1, 2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    assert!(matches!(
        propagate_follower_flow(&m, 0, &pi),
        Err(Error::DimensionMismatch(_))
    ));
    assert!(matches!(
        propagate_follower_flow(&m, 1, &PolicyKernel::uniform(m.dims())),
        Err(Error::IndexOutOfRange { .. })
    ));
    assert!(PolicyKernel::new(1, 1, 2, vec![0.7, 0.7]).is_err());
}
