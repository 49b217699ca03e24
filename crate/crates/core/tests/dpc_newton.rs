mod common;

use bcopt_core::linalg::{identity, CVec, RMat, C64};
use bcopt_core::newton::{barrier_objective, kkt_matrix, newton_step, residual, solve_dpc_newton, NewtonConfig, NewtonState};
use bcopt_core::{ChannelSet, ConstraintSet, Error, LinearConstraint, WeightVector};
use common::oracle::{fd_gradient, fd_jacobian, mac_value, FiniteDiffSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(rng: &mut ChaCha8Rng, k: usize, l: usize, t: f64) -> NewtonState {
    NewtonState {
        p: (0..k).map(|_| rng.random_range(0.3..4.0)).collect(),
        lambda: (0..l).map(|_| rng.random_range(0.1..3.0)).collect(),
        mu: rng.random_range(0.1..2.0),
        t,
    }
}

fn with_vector(state: &NewtonState, x: &[f64]) -> NewtonState {
    let (k, l) = (state.p.len(), state.lambda.len());
    NewtonState { p: x[..k].to_vec(), lambda: x[k..k + l].to_vec(), mu: x[k + l], t: state.t }
}

fn as_vector(state: &NewtonState) -> Vec<f64> {
    let mut x = state.p.clone();
    x.extend_from_slice(&state.lambda);
    x.push(state.mu);
    x
}

/// Saddle value recomputed from `I + sum lambda Phi` over the non-identity
/// constraints, plus the barrier.
fn barrier_oracle(ch: &ChannelSet, cs: &ConstraintSet, w: &WeightVector, s: &NewtonState) -> f64 {
    let m = ch.antennas();
    let mut noise = identity(m);
    for (c, l) in cs.without_sum_power().iter().zip(&s.lambda) {
        noise += &c.phi * C64::new(*l, 0.0);
    }
    let saddle = mac_value(&ch.columns(), &noise, w.values(), w.order(), &s.p);
    let barrier = s.p.iter().map(|x| x.ln()).sum::<f64>() - s.lambda.iter().map(|x| x.ln()).sum::<f64>();
    saddle + barrier / s.t
}

#[test]
fn barrier_objective_matches_log_det_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..20 {
        let (ch, cs) = common::instance(seed, 4, 3, 2);
        let w = common::random_weights(seed, 3);
        let s = random_state(&mut rng, 3, 2, [1.0, 10.0, 1e3][seed as usize % 3]);
        let got = barrier_objective(&ch, &cs, &w, &s).unwrap();
        let want = barrier_oracle(&ch, &cs, &w, &s);
        assert!((got - want).abs() < 1e-10 * (1.0 + want.abs()), "{got} vs {want}");
    }
}

#[test]
fn single_user_scalar_formula() {
    let h = CVec::from_vec(vec![C64::new(0.7, 0.1), C64::new(-0.2, 0.5), C64::new(0.3, -0.4)]);
    let c = CVec::from_vec(vec![C64::new(0.1, 0.9), C64::new(0.6, 0.0), C64::new(-0.3, 0.2)]);
    let ch = ChannelSet::from_columns(std::slice::from_ref(&h)).unwrap();
    let cs = ConstraintSet::new(vec![LinearConstraint::sum_power(3, 10.0), LinearConstraint::direction(&c, 1.5)]).unwrap();
    let w = WeightVector::new(vec![1.7]).unwrap();
    for (p, lambda, t) in [(2.0, 0.5, 1.0), (0.1, 3.0, 10.0), (7.0, 0.01, 1e4)] {
        let s = NewtonState { p: vec![p], lambda: vec![lambda], mu: 1.0, t };
        // the constraint stores c / |c|
        let quad = h.norm_squared() - lambda * c.dotc(&h).norm_sqr() / c.norm_squared() / (1.0 + lambda);
        let want = 1.7 * (1.0 + p * quad).ln() + (p.ln() - lambda.ln()) / t;
        let got = barrier_objective(&ch, &cs, &w, &s).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn residual_matches_finite_difference_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..20 {
        let (ch, cs) = common::instance(seed, 4, 3, 2);
        let w = common::random_weights(seed, 3);
        let s = random_state(&mut rng, 3, 2, 10.0);
        let r = residual(&ch, &cs, &w, &s).unwrap();
        let x: Vec<f64> = s.p.iter().chain(&s.lambda).copied().collect();
        let grad = fd_gradient(
            |y| {
                let trial = NewtonState { p: y[..3].to_vec(), lambda: y[3..].to_vec(), mu: s.mu, t: s.t };
                barrier_objective(&ch, &cs, &w, &trial).unwrap_or(f64::NAN)
            },
            &x,
            FiniteDiffSpec::default(),
        )
        .unwrap();
        let gamma = [2.5, 2.5];
        for i in 0..3 {
            assert!((r[i] - (grad[i] - s.mu)).abs() < 1e-6, "p block {i}");
        }
        for j in 0..2 {
            assert!((r[3 + j] - (grad[3 + j] + s.mu * gamma[j])).abs() < 1e-6, "lambda block {j}");
        }
        let budget = 10.0 + 2.5 * (s.lambda[0] + s.lambda[1]) - s.p.iter().sum::<f64>();
        assert!((r[5] - budget).abs() < 1e-12);
    }
}

#[test]
fn kkt_matrix_matches_finite_difference_jacobian() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for seed in 0..50 {
        let (ch, cs) = common::instance(seed, 4, 3, 3);
        let w = common::random_weights(seed, 3);
        let s = random_state(&mut rng, 3, 3, [1.0, 10.0, 100.0][seed as usize % 3]);
        let jac = kkt_matrix(&ch, &cs, &w, &s).unwrap();
        let fd = fd_jacobian(
            |x| residual(&ch, &cs, &w, &with_vector(&s, x)).unwrap_or_else(|_| vec![f64::NAN; 7]),
            &as_vector(&s),
            FiniteDiffSpec::default(),
        )
        .unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let (a, b) = (jac[(i, j)], fd[i][j]);
                assert!((a - b).abs() < 1e-5 * (1.0 + b.abs()), "seed {seed} ({i}, {j}): {a} vs {b}");
            }
        }
        assert!((&jac - jac.transpose()).amax() < 1e-12);
    }
}

#[test]
fn barrier_terms_vanish_as_t_grows() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..10 {
        let (ch, cs) = common::instance(seed, 4, 3, 2);
        let w = common::random_weights(seed, 3);
        let s = random_state(&mut rng, 3, 2, 1e12);
        let free = NewtonState { t: f64::INFINITY, ..s.clone() };
        let (a, b) = (kkt_matrix(&ch, &cs, &w, &s).unwrap(), kkt_matrix(&ch, &cs, &w, &free).unwrap());
        assert!((&a - &b).amax() < 1e-9);
        let (fa, fb) = (barrier_objective(&ch, &cs, &w, &s).unwrap(), barrier_objective(&ch, &cs, &w, &free).unwrap());
        assert!((fa - fb).abs() < 1e-9);
    }
}

#[test]
fn boundary_states_are_rejected() {
    let (ch, cs) = common::instance(0, 4, 3, 2);
    let w = WeightVector::uniform(3);
    let mut s = NewtonState::initial(3, &[2.5, 2.5], 10.0);
    s.p[1] = 0.0;
    assert!(matches!(barrier_objective(&ch, &cs, &w, &s), Err(Error::NotInterior(_))));
    let mut s = NewtonState::initial(3, &[2.5, 2.5], 10.0);
    s.lambda[0] = -1e-3;
    assert!(matches!(residual(&ch, &cs, &w, &s), Err(Error::NotInterior(_))));
}

#[test]
fn newton_step_has_small_backward_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        // concave block in p, convex block in lambda, bordered by the budget row
        let (k, l) = (3, 2);
        let n = k + l + 1;
        let a = RMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let mut j = RMat::zeros(n, n);
        let gp = a.view((0, 0), (k, k)).into_owned();
        let gl = a.view((k, 0), (l, l)).into_owned();
        j.view_mut((0, 0), (k, k)).copy_from(&(-(&gp * gp.transpose()) - RMat::identity(k, k) * 0.1));
        j.view_mut((k, k), (l, l)).copy_from(&(&gl * gl.transpose() + RMat::identity(l, l) * 0.1));
        for i in 0..k {
            for m in 0..l {
                j[(i, k + m)] = a[(i, k + m)];
                j[(k + m, i)] = a[(i, k + m)];
            }
            j[(i, n - 1)] = -1.0;
            j[(n - 1, i)] = -1.0;
        }
        for m in 0..l {
            j[(k + m, n - 1)] = 2.5;
            j[(n - 1, k + m)] = 2.5;
        }
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = newton_step(&j, &r).unwrap();
        let dv = nalgebra::DVector::from_vec(d.clone());
        let rv = nalgebra::DVector::from_vec(r);
        let backward = (&j * &dv + &rv).norm() / (j.norm() * dv.norm() + rv.norm());
        assert!(backward < 1e-13, "backward error {backward}");
    }
    let singular = RMat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
    assert!(matches!(newton_step(&singular, &[1.0, 0.0]), Err(Error::IllConditioned { .. })));
}

#[test]
fn residual_decreases_within_each_stage() {
    for seed in 0..10 {
        let (ch, cs) = common::instance(seed, 4, 3, 2);
        let w = common::random_weights(seed, 3);
        let out = solve_dpc_newton(&ch, &cs, &w, &NewtonConfig::default()).unwrap();
        let rows = out.trace.records();
        for pair in rows.windows(2) {
            if pair[0].stage == pair[1].stage {
                assert!(pair[1].residual_norm.unwrap() <= pair[0].residual_norm.unwrap());
            }
        }
        assert!(rows.iter().all(|r| r.lambda.iter().all(|l| *l > 0.0)));
        assert!(out.solution.is_feasible(&cs, 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Relabeling users permutes the residual and the KKT matrix the same way.
    #[test]
    fn relabeling_permutes_residual(seed in 0u64..10_000) {
        let (ch, cs) = common::instance(seed, 4, 3, 2);
        let w = common::random_weights(seed, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, 3, 2, 10.0);
        let sigma = [2usize, 0, 1];
        let ch2 = ch.permuted(&sigma);
        let w2 = WeightVector::new(sigma.iter().map(|&i| w.values()[i]).collect()).unwrap();
        let s2 = NewtonState { p: sigma.iter().map(|&i| s.p[i]).collect(), ..s.clone() };
        let (r, r2) = (residual(&ch, &cs, &w, &s).unwrap(), residual(&ch2, &cs, &w2, &s2).unwrap());
        for (i, &o) in sigma.iter().enumerate() {
            prop_assert!((r2[i] - r[o]).abs() < 1e-10);
        }
        for i in 3..6 {
            prop_assert!((r2[i] - r[i]).abs() < 1e-10);
        }
    }
}
