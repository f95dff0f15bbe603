//! Evaluation: attacker-position sweeps of the reach-avoid game against the BRT slice,
//! critic heatmaps, and quadrotor episode-length statistics.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{DisturbanceAxes, Env, Opponent, Outcome, QuadEnv, ReachAvoidConfig, ReachAvoidEnv};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::hjsolver::{brt_contains, SolveResult};
use crate::rl::AgentParams;

/// Coordinates `−a, −a + h, …, a` of a sweep lattice over the arena `[-a, a]`.
pub fn lattice(half_width: f64, spacing: f64) -> Result<Vec<f64>> {
    if !(spacing > 0.0 && half_width > 0.0) {
        return Err(Error::Config("sweep spacing and arena must be positive".into()));
    }
    let cells = 2.0 * half_width / spacing;
    let n = cells.round();
    if (cells - n).abs() > 1e-9 || n < 2.0 {
        return Err(Error::Config(format!(
            "spacing {spacing} does not divide the arena width {}",
            2.0 * half_width
        )));
    }
    let n = n as usize;
    Ok((0..=n)
        .map(|i| if i == n { half_width } else { -half_width + spacing * i as f64 })
        .collect())
}

fn lattice_grid(coords: &[f64]) -> Result<Grid> {
    let a = *coords.last().unwrap();
    Grid::uniform(2, -a, a, coords.len())
}

/// Critic values at joint states `(x_A, defender_init)` over the attacker-position lattice.
/// Entry `[i, j]` belongs to attacker position `(coords[i], coords[j])`.
pub fn critic_heatmap(
    agent: &AgentParams,
    normalization: &crate::envs::Normalization,
    defender_init: [f64; 2],
    half_width: f64,
    spacing: f64,
) -> Result<ScalarField> {
    let coords = lattice(half_width, spacing)?;
    let grid = lattice_grid(&coords)?;
    let mut values = Vec::with_capacity(grid.len());
    for &x in &coords {
        for &y in &coords {
            values.push(agent.value(normalization, &[x, y, defender_init[0], defender_init[1]])?);
        }
    }
    ScalarField::new(grid, values)
}

/// BRT membership at joint states `(x_A, defender_init)` over the attacker lattice, in the
/// same layout as [`critic_heatmap`].
pub fn brt_slice(result: &SolveResult, defender_init: [f64; 2], half_width: f64, spacing: f64) -> Result<Vec<bool>> {
    let coords = lattice(half_width, spacing)?;
    let mut mask = Vec::with_capacity(coords.len() * coords.len());
    for &x in &coords {
        for &y in &coords {
            mask.push(brt_contains(result, &[x, y, defender_init[0], defender_init[1]])?);
        }
    }
    Ok(mask)
}

/// Lattice cells with a neighbour (8-connectivity) of the other BRT membership, i.e. the
/// cells within one lattice step of the zero level.
pub fn boundary_cells(mask: &[bool], n: usize) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for i in 0..n {
        for j in 0..n {
            let here = mask[i * n + j];
            'scan: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if a < 0 || b < 0 || a >= n as i64 || b >= n as i64 {
                        continue;
                    }
                    if mask[a as usize * n + b as usize] != here {
                        out[i * n + j] = true;
                        break 'scan;
                    }
                }
            }
        }
    }
    out
}

/// Outcome of every sweep cell; `None` marks a cell that starts terminal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub defender_init: [f64; 2],
    pub spacing: f64,
    pub coords: Vec<f64>,
    pub outcomes: Vec<Option<Outcome>>,
    pub critic: Option<Vec<f64>>,
    pub brt: Vec<bool>,
    pub agreement: f64,
}

impl SweepReport {
    pub fn side(&self) -> usize {
        self.coords.len()
    }

    /// Recomputes agreement: the fraction of non-excluded cells where "the attacker
    /// reached" coincides with BRT membership.
    pub fn compute_agreement(outcomes: &[Option<Outcome>], brt: &[bool]) -> f64 {
        let mut hits = 0usize;
        let mut total = 0usize;
        for (o, b) in outcomes.iter().zip(brt) {
            if let Some(o) = o {
                total += 1;
                if (*o == Outcome::Reached) == *b {
                    hits += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        }
    }

    /// `(capture rate outside the BRT, reach rate inside it)` over non-excluded cells,
    /// skipping cells flagged in `skip`.
    pub fn guarantee_rates(&self, skip: &[bool]) -> (f64, f64) {
        let (mut cap, mut out, mut reach, mut inside) = (0usize, 0usize, 0usize, 0usize);
        for k in 0..self.outcomes.len() {
            let Some(o) = self.outcomes[k] else { continue };
            if skip[k] {
                continue;
            }
            if self.brt[k] {
                inside += 1;
                reach += (o == Outcome::Reached) as usize;
            } else {
                out += 1;
                cap += (o == Outcome::Capture) as usize;
            }
        }
        let rate = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
        (rate(cap, out), rate(reach, inside))
    }
}

/// A deterministic map from joint state to an input.
pub type StatePolicy<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a;

/// Plays one game from every lattice cell with the defender fixed at `defender_init`.
pub fn sweep_games(
    config: &ReachAvoidConfig,
    defender: &StatePolicy<'_>,
    attacker: &StatePolicy<'_>,
    defender_init: [f64; 2],
    spacing: f64,
    brt: &[bool],
) -> Result<SweepReport> {
    let coords = lattice(config.arena_half_width, spacing)?;
    if brt.len() != coords.len() * coords.len() {
        return Err(Error::Shape("BRT mask does not match the sweep lattice".into()));
    }
    let mut env = ReachAvoidEnv::new(config.clone(), None)?;
    let mut outcomes = Vec::with_capacity(brt.len());
    for &x in &coords {
        for &y in &coords {
            let start = [x, y, defender_init[0], defender_init[1]];
            if config.is_terminal_state(&start) {
                outcomes.push(None);
                continue;
            }
            env.reset_to([x, y], defender_init)?;
            let outcome = loop {
                let s = env.state().to_vec();
                let d = defender(&s)?;
                let u = attacker(&s)?;
                let t = env.step_with(&d, &u)?;
                if t.terminal() {
                    break t.outcome;
                }
            };
            outcomes.push(Some(outcome));
        }
    }
    let agreement = SweepReport::compute_agreement(&outcomes, brt);
    Ok(SweepReport {
        defender_init,
        spacing,
        coords,
        outcomes,
        critic: None,
        brt: brt.to_vec(),
        agreement,
    })
}

/// Point-biserial correlation between `values` and the binary `membership`; positive when
/// members have larger values. Zero when either group is empty or values are constant.
pub fn point_biserial(values: &[f64], membership: &[bool]) -> f64 {
    let n = values.len() as f64;
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
    for (v, m) in values.iter().zip(membership) {
        if *m {
            s1 += v;
            n1 += 1.0;
        } else {
            s0 += v;
            n0 += 1.0;
        }
    }
    if n1 == 0.0 || n0 == 0.0 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        return 0.0;
    }
    (s1 / n1 - s0 / n0) / sd * (n1 / n * n0 / n).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadEvalMode {
    /// A buffer level drawn uniformly per episode, disturbance from its value gradient.
    RandomHj,
    /// A fresh uniform draw from the disturbance box every step.
    Random,
    /// One uniform draw held for the whole episode.
    Constant,
    /// No disturbance.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadEvalReport {
    pub mode: QuadEvalMode,
    /// Half-width of the random/constant disturbance box (N·m).
    pub magnitude: f64,
    pub seeds: Vec<u64>,
    pub lengths: Vec<usize>,
    pub mean: f64,
    pub std: f64,
}

/// Mean ± std episode length of a deterministic policy under a disturbance mode, applied
/// to the roll and pitch torques only.
pub fn quad_eval(
    agent: &AgentParams,
    normalization: &crate::envs::Normalization,
    env: &mut QuadEnv,
    mode: QuadEvalMode,
    episodes: usize,
    seeds: &[u64],
) -> Result<QuadEvalReport> {
    let levels = env.hj_levels();
    if mode == QuadEvalMode::RandomHj && levels == 0 {
        return Err(Error::Config("random_hj evaluation needs a value-function buffer".into()));
    }
    let magnitude = env.buffer().map_or(env.config().adversary_bound, |b| b.max_bound());
    let saved_axes = env.config().disturbance_axes;
    env.set_disturbance_axes(DisturbanceAxes::Xy);
    let mut lengths = Vec::with_capacity(episodes * seeds.len());
    let result = (|| -> Result<()> {
        for &seed in seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..episodes {
                env.reset(&mut rng)?;
                let level = if mode == QuadEvalMode::RandomHj { rng.random_range(0..levels) } else { 0 };
                let constant = uniform_torque(&mut rng, magnitude);
                let mut steps = 0;
                loop {
                    let a = agent.act(normalization, env.state())?;
                    let torque;
                    let opponent = match mode {
                        QuadEvalMode::RandomHj => Opponent::Hj { level },
                        QuadEvalMode::Random => {
                            torque = uniform_torque(&mut rng, magnitude);
                            Opponent::Direct(&torque)
                        }
                        QuadEvalMode::Constant => Opponent::Direct(&constant),
                        QuadEvalMode::None => Opponent::Passive,
                    };
                    let t = env.step(&a, opponent, &mut rng)?;
                    steps += 1;
                    if t.terminal() {
                        break;
                    }
                }
                lengths.push(steps);
            }
        }
        Ok(())
    })();
    env.set_disturbance_axes(saved_axes);
    result?;
    let n = lengths.len().max(1) as f64;
    let mean = lengths.iter().sum::<usize>() as f64 / n;
    let std = (lengths.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(QuadEvalReport {
        mode,
        magnitude,
        seeds: seeds.to_vec(),
        lengths,
        mean,
        std,
    })
}

fn uniform_torque(rng: &mut dyn RngCore, bound: f64) -> Vec<f64> {
    (0..3)
        .map(|_| if bound > 0.0 { rng.random_range(-bound..=bound) } else { 0.0 })
        .collect()
}

/// Outcome codes used in exported grids.
pub fn outcome_code(o: Option<Outcome>) -> i32 {
    match o {
        Some(Outcome::Capture) => 0,
        Some(Outcome::Reached) => 1,
        Some(Outcome::Timeout) => 2,
        Some(Outcome::Crash) => 3,
        Some(Outcome::Running) => 4,
        None => -1,
    }
}

pub fn outcome_of_code(code: i32) -> Result<Option<Outcome>> {
    Ok(match code {
        0 => Some(Outcome::Capture),
        1 => Some(Outcome::Reached),
        2 => Some(Outcome::Timeout),
        3 => Some(Outcome::Crash),
        4 => Some(Outcome::Running),
        -1 => None,
        other => return Err(Error::Config(format!("unknown outcome code {other}"))),
    })
}

pub const OUTCOME_HEADER: &str = "# outcome codes: 0=capture 1=reached 2=timeout -1=excluded";
pub const BRT_HEADER: &str = "# brt membership: 1=attacker wins 0=defender wins";
pub const CRITIC_HEADER: &str = "# critic value";
const LAYOUT: &str = "# row i: attacker x = coords[i]; column j: attacker y = coords[j]";

/// Renders a square grid as CSV with two comment lines.
pub fn grid_csv_string<T: std::fmt::Display>(header: &str, n: usize, values: &[T]) -> Result<String> {
    if values.len() != n * n {
        return Err(Error::Shape("grid values do not form a square".into()));
    }
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    out.push_str(LAYOUT);
    out.push('\n');
    for row in values.chunks(n) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Writes a square grid as CSV with two comment lines.
pub fn write_grid_csv<T: std::fmt::Display>(path: &Path, header: &str, n: usize, values: &[T]) -> Result<()> {
    fs::write(path, grid_csv_string(header, n, values)?)?;
    Ok(())
}

/// Reads a grid written by [`write_grid_csv`], returning its side and row-major values.
pub fn read_grid_csv<T: std::str::FromStr>(path: &Path) -> Result<(usize, Vec<T>)> {
    parse_grid_csv(&fs::read_to_string(path)?)
}

/// Parses the text of a grid CSV.
pub fn parse_grid_csv<T: std::str::FromStr>(text: &str) -> Result<(usize, Vec<T>)> {
    let mut values = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.is_empty()) {
        let row: Vec<T> = line
            .split(',')
            .map(|c| c.trim().parse::<T>().map_err(|_| Error::Config(format!("bad CSV cell {c:?}"))))
            .collect::<Result<_>>()?;
        if *cols.get_or_insert(row.len()) != row.len() {
            return Err(Error::Shape("ragged CSV grid".into()));
        }
        values.extend(row);
        rows += 1;
    }
    if cols != Some(rows) {
        return Err(Error::Shape("CSV grid is not square".into()));
    }
    Ok((rows, values))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub defender_init: [f64; 2],
    pub spacing: f64,
    pub coords: Vec<f64>,
    pub agreement: f64,
    pub evaluated_cells: usize,
    pub excluded_cells: usize,
    pub critic_brt_correlation: Option<f64>,
    pub config_hash: String,
    pub checkpoint_hash: Option<String>,
    pub seeds: Vec<u64>,
}

/// Writes `outcomes.csv`, `brt.csv`, `critic.csv` (when present) and `summary.json` into
/// `dir`, returning the written paths.
pub fn export_report(
    report: &SweepReport,
    dir: &Path,
    config_hash: &str,
    checkpoint_hash: Option<&str>,
    seeds: &[u64],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let n = report.side();
    let mut written = Vec::new();
    let codes: Vec<i32> = report.outcomes.iter().map(|o| outcome_code(*o)).collect();
    let p = dir.join("outcomes.csv");
    write_grid_csv(&p, OUTCOME_HEADER, n, &codes)?;
    written.push(p);
    let mask: Vec<u8> = report.brt.iter().map(|b| *b as u8).collect();
    let p = dir.join("brt.csv");
    write_grid_csv(&p, BRT_HEADER, n, &mask)?;
    written.push(p);
    let mut correlation = None;
    if let Some(critic) = &report.critic {
        let p = dir.join("critic.csv");
        write_grid_csv(&p, CRITIC_HEADER, n, critic)?;
        written.push(p);
        correlation = Some(point_biserial(critic, &report.brt));
    }
    let excluded = report.outcomes.iter().filter(|o| o.is_none()).count();
    let summary = SweepSummary {
        defender_init: report.defender_init,
        spacing: report.spacing,
        coords: report.coords.clone(),
        agreement: report.agreement,
        evaluated_cells: report.outcomes.len() - excluded,
        excluded_cells: excluded,
        critic_brt_correlation: correlation,
        config_hash: config_hash.to_string(),
        checkpoint_hash: checkpoint_hash.map(str::to_string),
        seeds: seeds.to_vec(),
    };
    let p = dir.join("summary.json");
    fs::write(&p, serde_json::to_string_pretty(&summary)? + "\n")?;
    written.push(p);
    Ok(written)
}
