//! Randomized invariants over small 1D grids.

use proptest::prelude::*;
use tvmfg::{
    flow_step, normalize, redistribute, select_lowest_income, solve_linear, tv_distance,
    w1_distance_1d, Density, FlowConfig, Grid, ModelSpec, PayoffSolver, ScalarField, StepOutcome,
    Variant,
};

const N: usize = 40;

fn grid() -> Grid {
    Grid::new(1, N).unwrap()
}

fn density() -> impl Strategy<Value = Density> {
    prop::collection::vec(0.0..1.0f64, N + 1)
        .prop_filter("needs mass", |v| v.iter().sum::<f64>() > 0.1)
        .prop_map(|v| normalize(grid(), v).unwrap())
}

fn field(lo: f64, hi: f64) -> impl Strategy<Value = ScalarField> {
    prop::collection::vec(lo..hi, N + 1).prop_map(|v| ScalarField::new(grid(), v).unwrap())
}

fn mass(g: &Grid, v: &[f64]) -> f64 {
    g.integrate(v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tv_is_a_metric(a in density(), b in density(), c in density()) {
        let ab = tv_distance(&a, &b).unwrap();
        prop_assert!((ab - tv_distance(&b, &a).unwrap()).abs() < 1e-15);
        prop_assert!(tv_distance(&a, &a).unwrap() == 0.0);
        prop_assert!(ab <= tv_distance(&a, &c).unwrap() + tv_distance(&c, &b).unwrap() + 1e-12);
    }

    #[test]
    fn w1_is_bounded_by_tv(a in density(), b in density()) {
        prop_assert!(w1_distance_1d(&a, &b).unwrap() <= tv_distance(&a, &b).unwrap() + 1e-12);
    }

    #[test]
    fn lowest_income_takes_exactly_eps_from_the_bottom(
        m in density(),
        theta in field(-1.0, 1.0),
        eps in 0.01..0.99f64,
    ) {
        let g = grid();
        let sel = select_lowest_income(&m, &theta, eps).unwrap();
        prop_assert!((mass(&g, &sel.removed) - eps).abs() < 1e-10);
        let t = theta.values();
        let mut top_removed = f64::NEG_INFINITY;
        let mut low_kept = f64::INFINITY;
        for i in 0..g.len() {
            prop_assert!(sel.kept[i] >= 0.0);
            prop_assert!((sel.kept[i] + sel.removed[i] - m.values()[i]).abs() < 1e-12);
            if sel.removed[i] > 0.0 {
                top_removed = top_removed.max(t[i]);
            }
            if sel.kept[i] > 0.0 && sel.removed[i] == 0.0 {
                low_kept = low_kept.min(t[i]);
            }
        }
        prop_assert!(top_removed <= low_kept);
    }

    #[test]
    fn redistribution_fills_from_the_top(
        theta in field(0.0, 1.0),
        f in field(2.0, 6.0),
        eps in 0.01..0.5f64,
    ) {
        let g = grid();
        let model = ModelSpec::linear(0.1, ScalarField::constant(g, 0.5), f).unwrap();
        let kept = vec![0.0; g.len()];
        let red = redistribute(&kept, &theta, &model, eps).unwrap();
        prop_assert!((mass(&g, &red.added) - eps).abs() < 1e-10);
        let height = model.plateau_height(red.theta_bar);
        let t = theta.values();
        for i in 0..g.len() {
            prop_assert!(red.added[i] >= 0.0 && red.added[i] <= height[i].max(0.0) + 1e-12);
            if red.added[i] > 0.0 {
                prop_assert!(t[i] >= red.level);
            }
        }
    }

    #[test]
    fn payoff_is_monotone_in_f(m in density(), f in field(0.0, 5.0), bump in field(0.0, 1.0)) {
        let g = grid();
        let p = ScalarField::constant(g, 0.5);
        let larger: Vec<f64> = f.values().iter().zip(bump.values()).map(|(a, b)| a + b).collect();
        let lo = solve_linear(&ModelSpec::linear(0.1, p.clone(), f).unwrap(), &m).unwrap();
        let hi = solve_linear(
            &ModelSpec::linear(0.1, p, ScalarField::new(g, larger).unwrap()).unwrap(),
            &m,
        )
        .unwrap();
        for (a, b) in lo.values().iter().zip(hi.values()) {
            prop_assert!(b >= &(a - 1e-12));
        }
    }

    #[test]
    fn a_step_conserves_mass_and_moves_at_most_two_eps(
        m in density(),
        f in field(0.0, 5.0),
        eps in 0.001..0.2f64,
        eikonal in any::<bool>(),
    ) {
        let g = grid();
        let model = ModelSpec::linear(0.1, ScalarField::constant(g, 0.5), f).unwrap();
        let solver = PayoffSolver::new(&model).unwrap();
        let theta = solver.solve(&m).unwrap();
        let variant = if eikonal { Variant::Eikonal } else { Variant::BestResponse };
        let cfg = FlowConfig::new(variant, g.spacing());
        // Capacity or selection failures are legitimate for an arbitrary m.
        if let Ok(StepOutcome::Moved { density, tv_step, .. }) =
            flow_step(&solver, &m, &theta, eps, &cfg)
        {
            prop_assert!((density.mass() - 1.0).abs() < 1e-9);
            prop_assert!((tv_step - tv_distance(&density, &m).unwrap()).abs() < 1e-12);
            prop_assert!(tv_step <= 2.0 * eps + 1e-9);
        }
    }
}
