use hjarl_core::{Axis, Grid, ScalarField};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = Grid> {
    prop::collection::vec((-3.0..0.0f64, 0.5..3.0f64, 3usize..9), 1..=4).prop_map(|axes| {
        Grid::new(axes.into_iter().map(|(lo, w, n)| Axis::new(lo, lo + w, n)).collect()).unwrap()
    })
}

fn linear_case() -> impl Strategy<Value = (Grid, f64, Vec<f64>, Vec<f64>)> {
    grid_strategy().prop_flat_map(|grid| {
        let d = grid.dim();
        let fracs = prop::collection::vec(0.0..=1.0f64, d);
        let slopes = prop::collection::vec(-5.0..5.0f64, d);
        (Just(grid), -2.0..2.0f64, slopes, fracs)
    })
}

fn point_in(grid: &Grid, fracs: &[f64]) -> Vec<f64> {
    grid.axes()
        .iter()
        .zip(fracs)
        .map(|(a, t)| a.lower + t * (a.upper - a.lower))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn linear_fields_interpolate_and_differentiate_exactly((grid, c, slopes, fracs) in linear_case()) {
        let f = |x: &[f64]| c + x.iter().zip(&slopes).map(|(a, b)| a * b).sum::<f64>();
        let field = ScalarField::from_fn(grid.clone(), f);
        let x = point_in(&grid, &fracs);
        let probe = field.interpolate(&x).unwrap();
        prop_assert!(!probe.clamped);
        prop_assert!((probe.value - f(&x)).abs() < 1e-9);
        let grad = field.gradient_at(&x).unwrap().value;
        for (g, s) in grad.iter().zip(&slopes) {
            prop_assert!((g - s).abs() < 1e-9, "gradient {g} vs slope {s}");
        }
    }

    #[test]
    fn interpolation_is_exact_at_nodes_and_bounded(
        grid in grid_strategy(),
        seed in any::<u64>(),
        fracs in prop::collection::vec(0.0..=1.0f64, 4),
    ) {
        let mut state = seed | 1;
        let values: Vec<f64> = (0..grid.len())
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state % 2001) as f64 / 1000.0 - 1.0
            })
            .collect();
        let field = ScalarField::new(grid.clone(), values.clone()).unwrap();
        let mut ok = true;
        grid.for_each_node(|flat, _, x| {
            ok &= field.interpolate(x).unwrap().value == values[flat];
        });
        prop_assert!(ok);
        let x = point_in(&grid, &fracs[..grid.dim()]);
        let v = field.interpolate(&x).unwrap().value;
        prop_assert!(v >= field.min() - 1e-12 && v <= field.max() + 1e-12);
    }

    #[test]
    fn queries_outside_the_box_are_clamped_and_flagged(
        (grid, c, slopes, fracs) in linear_case(),
        overshoot in 0.01..2.0f64,
    ) {
        let field = ScalarField::from_fn(grid.clone(), |x| c + x.iter().zip(&slopes).map(|(a, b)| a * b).sum::<f64>());
        let mut x = point_in(&grid, &fracs);
        x[0] = grid.axis(0).upper + overshoot;
        let probe = field.interpolate(&x).unwrap();
        prop_assert!(probe.clamped);
        x[0] = grid.axis(0).upper;
        prop_assert!((probe.value - field.interpolate(&x).unwrap().value).abs() < 1e-12);
    }
}

#[test]
fn periodic_axis_wraps() {
    let grid = Grid::new(vec![Axis::periodic(-std::f64::consts::PI, std::f64::consts::PI, 60)]).unwrap();
    let field = ScalarField::from_fn(grid, |x| x[0].sin());
    let a = field.interpolate(&[0.3]).unwrap();
    let b = field.interpolate(&[0.3 + 2.0 * std::f64::consts::PI]).unwrap();
    assert!(!b.clamped);
    assert!((a.value - b.value).abs() < 1e-12);
}
