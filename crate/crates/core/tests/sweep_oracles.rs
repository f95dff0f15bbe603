use hjarl_core::adversary::*;
use hjarl_core::dynamics::*;
use hjarl_core::envs::*;
use hjarl_core::eval::*;
use hjarl_core::hjsolver::*;
use hjarl_core::Grid;
use std::sync::OnceLock;

fn game() -> &'static ReachAvoidHj {
    static HJ: OnceLock<ReachAvoidHj> = OnceLock::new();
    HJ.get_or_init(|| {
        let grid = Grid::uniform(4, -1.0, 1.0, 25).unwrap();
        let sets = level_set_target(
            &grid,
            &TargetSet::ReachAvoid {
                target_center: [0.7, 0.7],
                target_side: 0.2,
                capture_radius: 0.1,
            },
        )
        .unwrap();
        let buffer =
            build_buffer(&NominalModel::Sig1v1(Sig1v1::default()), &[1.0], &sets, &SolveConfig::default()).unwrap();
        let plane = Grid::uniform(2, -1.0, 1.0, 101).unwrap();
        let reach = level_set_target(
            &plane,
            &TargetSet::Box {
                axes: vec![0, 1],
                center: vec![0.7, 0.7],
                half_widths: vec![0.1, 0.1],
            },
        )
        .unwrap();
        let fallback = solve(&Sig1v0::default(), &reach.target, None, &SolveConfig::finite(0.05)).unwrap();
        ReachAvoidHj::new(buffer, fallback)
    })
}

#[test]
fn slice_membership_examples() {
    let result = &game().buffer.entry(0).unwrap().result;
    let mask = brt_slice(result, [-0.5, -0.5], 1.0, 0.05).unwrap();
    let coords = lattice(1.0, 0.05).unwrap();
    let at = |x: f64, y: f64| {
        let i = coords.iter().position(|c| (c - x).abs() < 1e-9).unwrap();
        let j = coords.iter().position(|c| (c - y).abs() < 1e-9).unwrap();
        mask[i * coords.len() + j]
    };
    assert!(at(0.7, 0.7));
    assert!(!at(-0.5, -0.5));
    assert!(!at(-0.45, -0.5));
}

#[test]
fn stationary_defender_loses_from_every_uncaptured_cell() {
    let hj = game();
    let config = ReachAvoidConfig::default();
    let brt = brt_slice(&hj.buffer.entry(0).unwrap().result, [0.5, 0.0], 1.0, 0.05).unwrap();
    let still = |_: &[f64]| Ok(vec![0.0, 0.0]);
    let attacker = |s: &[f64]| hj.attacker_control(0, s);
    let r = sweep_games(&config, &still, &attacker, [0.5, 0.0], 0.05, &brt).unwrap();
    let evaluated = r.outcomes.iter().flatten().count();
    let reached = r.outcomes.iter().filter(|o| **o == Some(Outcome::Reached)).count();
    assert!(evaluated > 1500);
    assert_eq!(reached, evaluated, "{:?}", r.outcomes.iter().flatten().filter(|o| **o != Outcome::Reached).count());
}

#[test]
fn hj_defender_wins_outside_the_slice_on_a_coarse_grid() {
    let hj = game();
    let result = &hj.buffer.entry(0).unwrap().result;
    let config = ReachAvoidConfig::default();
    let brt = brt_slice(result, [0.5, 0.0], 1.0, 0.05).unwrap();
    let defender = |s: &[f64]| hj_defender_policy(result, s, EPSILON_GRAD);
    let attacker = |s: &[f64]| hj.attacker_control(0, s);
    let r = sweep_games(&config, &defender, &attacker, [0.5, 0.0], 0.05, &brt).unwrap();
    let skip = boundary_cells(&brt, r.side());
    let (capture_outside, reach_inside) = r.guarantee_rates(&skip);
    assert!(capture_outside >= 0.95, "{capture_outside}");
    assert!(reach_inside >= 0.9, "{reach_inside}");
}
