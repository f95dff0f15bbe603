//! Benchmark fixtures shared by the criterion targets.

use hjarl_core::hjsolver::{level_set_target, LevelSets, TargetSet};
use hjarl_core::{Grid, Result};

/// The default reach-avoid target and capture sets on a uniform 4-D grid over [-1, 1]⁴.
pub fn reach_avoid_sets(points: usize) -> Result<LevelSets> {
    let grid = Grid::uniform(4, -1.0, 1.0, points)?;
    level_set_target(
        &grid,
        &TargetSet::ReachAvoid {
            target_center: [0.7, 0.7],
            target_side: 0.2,
            capture_radius: 0.1,
        },
    )
}
