mod common;

use bcopt_core::dual_mac::g_of_lambda;
use bcopt_core::linalg::identity;
use bcopt_core::subgradient::{solve_dpc_subgradient, subgradient_at, SubgradientConfig};
use bcopt_core::{ConstraintSet, LinearConstraint, WeightVector};
use common::oracle::{mac_value, sample_lambda, simplex_max};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn iterates_stay_nonnegative_and_bound_the_result() {
    for seed in 0..8 {
        let (ch, cs) = common::instance(seed, 4, 3, 2);
        let w = common::random_weights(seed, 3);
        let out = solve_dpc_subgradient(&ch, &cs, &w, &SubgradientConfig::default()).unwrap();
        let rows = out.trace.records();
        assert!(rows.iter().all(|r| r.lambda.iter().all(|l| *l >= 0.0)));
        assert!(out.solution.is_feasible(&cs, 1e-9));
        assert!(out.upper_bound.unwrap() >= out.objective - 1e-9);

        // every visited lambda certifies an upper bound on the final value
        let mut last: Option<&[f64]> = None;
        for r in rows {
            if last == Some(r.lambda.as_slice()) {
                continue;
            }
            last = Some(&r.lambda);
            let (g, sol) = g_of_lambda(&ch, &cs, &w, &r.lambda, 1e-10).unwrap();
            assert!(g + sol.gap >= out.objective - 1e-9, "seed {seed}: g = {g} below {}", out.objective);
        }
    }
}

#[test]
fn sum_power_only_matches_grid_oracle() {
    for seed in 0..6 {
        let (ch, _) = common::instance(seed, 4, 3, 0);
        let cs = ConstraintSet::new(vec![LinearConstraint::sum_power(4, 10.0)]).unwrap();
        let w = common::random_weights(seed, 3);
        let out = solve_dpc_subgradient(&ch, &cs, &w, &SubgradientConfig::default()).unwrap();
        let channels = ch.columns();
        let (_, best) = simplex_max(|p| mac_value(&channels, &identity(4), w.values(), w.order(), p), 3, 10.0, 30);
        assert!(out.converged);
        assert!((out.objective - best).abs() < 1e-4 * best, "seed {seed}: {} vs {best}", out.objective);
    }
}

#[test]
fn heavy_direction_price_leaves_slack() {
    let (ch, cs) = common::instance(1, 4, 3, 2);
    let w = WeightVector::uniform(3);
    let s = subgradient_at(&ch, &cs, &w, &[100.0, 100.0, 1.0], 1e-10).unwrap();
    assert!(s[0] > 0.0 && s[1] > 0.0, "{s:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// `g` is the best weighted rate under the single aggregated constraint
    /// `sum lambda_l tr(Sigma Phi_l) <= sum lambda_l gamma_l`, which is
    /// tight at the optimum: `lambda^T s = 0`. The maximizer at `lambda`
    /// stays feasible at any `lambda'` with `s^T (lambda' - lambda) >= 0`,
    /// so `g` cannot drop there.
    #[test]
    fn subgradient_separates_lower_level_set(seed in 0u64..10_000) {
        let (ch, cs) = common::instance(seed, 4, 3, 2);
        let w = common::random_weights(seed, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = sample_lambda(&mut rng, cs.len());
        let tol = 1e-11;
        let (ga, sa) = g_of_lambda(&ch, &cs, &w, &a, tol).unwrap();
        let s = subgradient_at(&ch, &cs, &w, &a, tol).unwrap();
        let scale: f64 = a.iter().zip(cs.budgets()).map(|(l, g)| l * g).sum();
        let complementary: f64 = a.iter().zip(&s).map(|(l, si)| l * si).sum();
        prop_assert!(complementary.abs() < 1e-8 * scale, "lambda^T s = {complementary}");

        let ascent = |b: &[f64]| s.iter().zip(b.iter().zip(&a)).map(|(si, (y, x))| si * (y - x)).sum::<f64>();
        let b = (0..20)
            .map(|_| sample_lambda(&mut rng, cs.len()))
            .find(|b| ascent(b) > 1e-6 * scale)
            .unwrap_or_else(|| a.iter().zip(&s).map(|(x, si)| x + si.max(0.0)).collect());
        if ascent(&b) > 1e-6 * scale {
            let (gb, sb) = g_of_lambda(&ch, &cs, &w, &b, tol).unwrap();
            prop_assert!(gb + sa.gap + sb.gap + 1e-9 >= ga, "g(b) = {gb} < g(a) = {ga}");
        }
    }

    #[test]
    fn dual_value_is_scale_free(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let (ch, cs) = common::instance(seed, 4, 3, 2);
        let w = common::random_weights(seed, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = sample_lambda(&mut rng, cs.len());
        let scaled: Vec<f64> = a.iter().map(|x| c * x).collect();
        let (g1, _) = g_of_lambda(&ch, &cs, &w, &a, 1e-11).unwrap();
        let (g2, _) = g_of_lambda(&ch, &cs, &w, &scaled, 1e-11).unwrap();
        prop_assert!((g1 - g2).abs() < 1e-7 * (1.0 + g1.abs()));
    }
}
