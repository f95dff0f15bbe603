//! The `solve`, `train`, `eval` and `heatmap` verbs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use hjarl_core::adversary::{build_buffer, hj_defender_policy, EPSILON_GRAD};
use hjarl_core::envs::{QuadEnv, ReachAvoidConfig, ReachAvoidEnv, ReachAvoidHj};
use hjarl_core::eval::{
    brt_slice, critic_heatmap, export_report, quad_eval, sweep_games, write_grid_csv, QuadEvalReport,
    BRT_HEADER, CRITIC_HEADER,
};
use hjarl_core::hjsolver::{level_set_target, solve};
use hjarl_core::rl::{seeded_rng, train, Checkpoint, CurveRow, TrainerKind};

use crate::artifacts::{
    artifact_hash, write_json, CheckpointFile, LoadedBuffer, Manifest, RunMetadata, ARTIFACT_VERSION,
    MANIFEST_FORMAT,
};
use crate::config::{EnvSection, RunConfig};
use crate::error::{CliError, Result};
use crate::vf::ValueFunctionFile;

pub const MANIFEST_NAME: &str = "manifest.json";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Removes files written so far; used when a solve fails part-way.
fn remove_all(paths: &[PathBuf]) {
    for p in paths {
        let _ = std::fs::remove_file(p);
    }
}

/// Solves every buffer level (and the reach-avoid fallback) into `out`, then writes the
/// manifest. On failure every file written by this call is removed.
pub fn cmd_solve(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    let problem = config.problem()?;
    create_dir(out)?;
    let mut written = Vec::new();
    let result = solve_into(config, &problem, out, &mut written);
    if result.is_err() {
        remove_all(&written);
    }
    result
}

fn solve_into(
    config: &RunConfig,
    problem: &crate::config::Problem,
    out: &Path,
    written: &mut Vec<PathBuf>,
) -> Result<PathBuf> {
    let sets = level_set_target(&problem.grid, &problem.target)?;
    let mut levels = Vec::with_capacity(problem.levels.len());
    for (i, &bound) in problem.levels.iter().enumerate() {
        let buffer = build_buffer(&problem.model, &[bound], &sets, &problem.solver).map_err(|e| match e {
            hjarl_core::Error::NonConvergence { bound, iterations, .. } => hjarl_core::Error::NonConvergence {
                level: i,
                bound,
                iterations,
            },
            other => other,
        })?;
        let entry = &buffer.entries()[0];
        let name = format!("level_{i:03}.hjvf");
        let path = out.join(&name);
        written.push(path.clone());
        ValueFunctionFile::from_entry(entry).write(&path)?;
        levels.push(Manifest::listed(out, name, bound, entry.result.iterations())?);
    }
    let fallback = match &problem.fallback {
        Some(f) => {
            let target = level_set_target(&f.grid, &f.target)?.target;
            let result = solve(f.model.as_hj(), &target, None, &f.solver)?;
            if !result.converged {
                return Err(hjarl_core::Error::NonConvergence {
                    level: problem.levels.len(),
                    bound: 0.0,
                    iterations: result.iterations(),
                }
                .into());
            }
            let name = "fallback.hjvf".to_string();
            let path = out.join(&name);
            written.push(path.clone());
            ValueFunctionFile::from_result(&result, 0.0, f.model.model_id()).write(&path)?;
            Some(Manifest::listed(out, name, 0.0, result.iterations())?)
        }
        None => None,
    };
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: ARTIFACT_VERSION,
        config_hash: config.config_hash(),
        problem_hash: config.problem_hash()?,
        model_id: problem.model.model_id().into(),
        levels,
        fallback,
    };
    let path = out.join(MANIFEST_NAME);
    written.push(path.clone());
    write_json(&path, &manifest)?;
    Ok(path)
}

pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub metadata: RunMetadata,
    pub curve: Vec<CurveRow>,
}

fn curve_csv(rows: &[CurveRow]) -> String {
    let mut s = String::from("step,mean_reward,episode_len,kl,clip_frac\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step, r.mean_reward, r.episode_len, r.kl, r.clip_frac
        ));
    }
    s
}

/// Trains the configured trainer, writing checkpoints, `curves.csv` and `run.json` into `out`.
/// Only `hjarl` reads the buffer manifest.
pub fn cmd_train(
    config: &RunConfig,
    manifest: Option<&Path>,
    resume: Option<&Path>,
    out: &Path,
) -> Result<TrainOutcome> {
    let needs_buffer = config.trainer.kind == TrainerKind::Hjarl;
    let loaded = match (needs_buffer, manifest) {
        (true, Some(m)) => Some(Manifest::load(m, config)?),
        (true, None) => {
            return Err(CliError::config(
                "the hjarl trainer needs a value-function manifest (run `hjarl solve` and pass --manifest)",
            ))
        }
        (false, _) => None,
    };
    let problem_hash = loaded.as_ref().map(|l| l.manifest.problem_hash.clone());
    let resumed = match resume {
        Some(p) => {
            let file = CheckpointFile::read(p)?;
            file.check_env(config)?;
            Some(file.checkpoint)
        }
        None => None,
    };
    let start_step = resumed.as_ref().map_or(0, |c| c.steps);

    let ckpt_dir = out.join("checkpoints");
    create_dir(&ckpt_dir)?;
    let mut saved = Vec::new();
    let mut save = |c: &Checkpoint| -> hjarl_core::Result<()> {
        let path = ckpt_dir.join(format!("step_{:010}.json", c.steps));
        CheckpointFile::new(c.clone(), config, problem_hash.clone())
            .write(&path)
            .map_err(|e| hjarl_core::Error::Io(std::io::Error::other(e.to_string())))?;
        saved.push(path);
        Ok(())
    };
    let mut rng = seeded_rng(config.seed);
    let report = match &config.env {
        EnvSection::ReachAvoid(c) => {
            let hj = loaded.map(LoadedBuffer::reach_avoid_hj).transpose()?.map(Arc::new);
            let mut env = ReachAvoidEnv::new(c.clone(), hj)?;
            train(&mut env, &config.trainer, resumed, &mut rng, &mut save)?
        }
        EnvSection::Quadrotor(c) => {
            let buffer = loaded.map(|l| Arc::new(l.buffer));
            let mut env = QuadEnv::new(c.clone(), buffer)?;
            train(&mut env, &config.trainer, resumed, &mut rng, &mut save)?
        }
    };
    let final_checkpoint = out.join("checkpoint.json");
    CheckpointFile::new(report.checkpoint.clone(), config, problem_hash.clone()).write(&final_checkpoint)?;
    let curves = out.join("curves.csv");
    std::fs::write(&curves, curve_csv(&report.curve)).map_err(|e| CliError::io(&curves, e))?;
    let metadata = RunMetadata {
        seed: config.seed,
        trainer: config.trainer.kind.as_str().into(),
        config_hash: config.config_hash(),
        env_hash: config.env_hash(),
        problem_hash,
        resumed_from: resume.map(Path::to_path_buf),
        start_step,
        final_step: report.checkpoint.steps,
        checkpoints: saved,
    };
    write_json(&out.join("run.json"), &metadata)?;
    Ok(TrainOutcome {
        final_checkpoint,
        metadata,
        curve: report.curve,
    })
}

/// Per-defender-start sweep results, as listed in `eval.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub defender_init: [f64; 2],
    pub dir: PathBuf,
    pub agreement: f64,
    pub critic_brt_correlation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub task: String,
    pub config_hash: String,
    pub checkpoint_hash: String,
    pub problem_hash: Option<String>,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub sweeps: Vec<SweepEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub quad: Vec<QuadEvalReport>,
}

fn top_level(config: &RunConfig, levels: usize) -> Result<usize> {
    match config.eval.level {
        Some(l) if l < levels => Ok(l),
        Some(l) => Err(CliError::config(format!("eval.level {l} outside a {levels}-level buffer"))),
        None => Ok(levels - 1),
    }
}

/// Sweeps (reach-avoid) or episode statistics (quadrotor) of a trained checkpoint.
pub fn cmd_eval(config: &RunConfig, checkpoint: &Path, manifest: Option<&Path>, out: &Path) -> Result<EvalSummary> {
    let file = CheckpointFile::read(checkpoint)?;
    file.check_env(config)?;
    let checkpoint_hash = artifact_hash(checkpoint)?;
    let ck = &file.checkpoint;
    create_dir(out)?;
    let loaded = manifest.map(|m| Manifest::load(m, config)).transpose()?;
    let problem_hash = loaded.as_ref().map(|l| l.manifest.problem_hash.clone());
    let mut summary = EvalSummary {
        task: config.env.task().into(),
        config_hash: config.config_hash(),
        checkpoint_hash: checkpoint_hash.clone(),
        problem_hash,
        seeds: config.eval.seeds.clone(),
        sweeps: Vec::new(),
        quad: Vec::new(),
    };
    match &config.env {
        EnvSection::ReachAvoid(c) => {
            let hj = loaded
                .ok_or_else(|| CliError::config("reach-avoid evaluation needs the buffer manifest"))?
                .reach_avoid_hj()?;
            let level = top_level(config, hj.buffer.len())?;
            for (k, &d0) in config.eval.defender_inits.iter().enumerate() {
                let dir = out.join(format!("sweep_{k}"));
                let entry = sweep_checkpoint(c, &hj, level, ck, d0, config.eval.spacing)?;
                export_report(
                    &entry,
                    &dir,
                    &summary.config_hash,
                    Some(&checkpoint_hash),
                    &[config.seed],
                )?;
                let rho = hjarl_core::eval::point_biserial(entry.critic.as_deref().unwrap_or(&[]), &entry.brt);
                summary.sweeps.push(SweepEntry {
                    defender_init: d0,
                    dir,
                    agreement: entry.agreement,
                    critic_brt_correlation: rho,
                });
            }
        }
        EnvSection::Quadrotor(c) => {
            let buffer = loaded.map(|l| Arc::new(l.buffer));
            let mut env = QuadEnv::new(c.clone(), buffer)?;
            for &mode in &config.eval.modes {
                summary.quad.push(quad_eval(
                    &ck.protagonist,
                    &ck.normalization,
                    &mut env,
                    mode,
                    config.eval.episodes,
                    &config.eval.seeds,
                )?);
            }
        }
    }
    write_json(&out.join("eval.json"), &summary)?;
    Ok(summary)
}

/// Sweep of the checkpoint's defender against the HJ attacker, with its critic heatmap.
pub fn sweep_checkpoint(
    config: &ReachAvoidConfig,
    hj: &ReachAvoidHj,
    level: usize,
    checkpoint: &Checkpoint,
    defender_init: [f64; 2],
    spacing: f64,
) -> Result<hjarl_core::eval::SweepReport> {
    let game = &hj.buffer.entry(level)?.result;
    let brt = brt_slice(game, defender_init, config.arena_half_width, spacing)?;
    let defender = |s: &[f64]| checkpoint.protagonist.act(&checkpoint.normalization, s);
    let attacker = |s: &[f64]| hj.attacker_control(level, s);
    let mut report = sweep_games(config, &defender, &attacker, defender_init, spacing, &brt)?;
    let heat = critic_heatmap(
        &checkpoint.protagonist,
        &checkpoint.normalization,
        defender_init,
        config.arena_half_width,
        spacing,
    )?;
    report.critic = Some(heat.into_values());
    Ok(report)
}

/// Sweep of the HJ-optimal defender against the HJ attacker.
pub fn sweep_hj(
    config: &ReachAvoidConfig,
    hj: &ReachAvoidHj,
    level: usize,
    defender_init: [f64; 2],
    spacing: f64,
) -> Result<hjarl_core::eval::SweepReport> {
    let game = &hj.buffer.entry(level)?.result;
    let brt = brt_slice(game, defender_init, config.arena_half_width, spacing)?;
    let defender = |s: &[f64]| hj_defender_policy(game, s, EPSILON_GRAD);
    let attacker = |s: &[f64]| hj.attacker_control(level, s);
    Ok(sweep_games(config, &defender, &attacker, defender_init, spacing, &brt)?)
}

/// Critic heatmaps (and BRT slices when a manifest is given) as CSV grids.
pub fn cmd_heatmap(
    config: &RunConfig,
    checkpoint: &Path,
    manifest: Option<&Path>,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let EnvSection::ReachAvoid(c) = &config.env else {
        return Err(CliError::config("heatmaps are defined for the reach-avoid task only"));
    };
    let file = CheckpointFile::read(checkpoint)?;
    file.check_env(config)?;
    let ck = &file.checkpoint;
    let loaded = manifest.map(|m| Manifest::load(m, config)).transpose()?;
    create_dir(out)?;
    let spacing = config.eval.spacing;
    let n = hjarl_core::eval::lattice(c.arena_half_width, spacing)?.len();
    let mut written = Vec::new();
    for (k, &d0) in config.eval.defender_inits.iter().enumerate() {
        let heat = critic_heatmap(&ck.protagonist, &ck.normalization, d0, c.arena_half_width, spacing)?;
        let p = out.join(format!("critic_{k}.csv"));
        write_grid_csv(&p, CRITIC_HEADER, n, heat.values())?;
        written.push(p);
        if let Some(l) = &loaded {
            let level = top_level(config, l.buffer.len())?;
            let mask = brt_slice(&l.buffer.entry(level)?.result, d0, c.arena_half_width, spacing)?;
            let mask: Vec<u8> = mask.into_iter().map(u8::from).collect();
            let p = out.join(format!("brt_{k}.csv"));
            write_grid_csv(&p, BRT_HEADER, n, &mask)?;
            written.push(p);
        }
    }
    Ok(written)
}
