//! JSON artifacts: buffer manifests, checkpoints and run metadata.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hjarl_core::adversary::{BufferEntry, ValueBuffer};
use hjarl_core::envs::ReachAvoidHj;
use hjarl_core::hjsolver::SolveResult;
use hjarl_core::rl::Checkpoint;

use crate::config::{sha256_hex, Problem, RunConfig};
use crate::error::{CliError, Result};
use crate::vf::ValueFunctionFile;

pub const MANIFEST_FORMAT: &str = "hjarl-manifest";
pub const CHECKPOINT_FORMAT: &str = "hjarl-checkpoint";
pub const ARTIFACT_VERSION: u32 = 1;

/// One value-function file listed in a manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub bound: f64,
    pub sha256: String,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub problem_hash: String,
    pub model_id: String,
    /// Buffer levels in increasing disturbance order.
    pub levels: Vec<ManifestFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback: Option<ManifestFile>,
}

/// Reads and writes JSON with a trailing newline, mapping parse failures to `Corrupt`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact types serialize") + "\n";
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::config(format!("{} does not exist", path.display())),
        std::io::ErrorKind::InvalidData => CliError::corrupt(path, "not UTF-8"),
        _ => CliError::io(path, e),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::corrupt(path, e.to_string()))
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// A verified value function read through a manifest entry.
fn read_listed(dir: &Path, file: &ManifestFile) -> Result<ValueFunctionFile> {
    let path = dir.join(&file.path);
    let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    if sha256_hex(&bytes) != file.sha256 {
        return Err(CliError::corrupt(&path, "checksum differs from the manifest"));
    }
    let vf = ValueFunctionFile::from_bytes(&bytes).map_err(|e| CliError::corrupt(&path, e.0))?;
    if vf.bound.to_bits() != file.bound.to_bits() {
        return Err(CliError::corrupt(&path, "disturbance bound differs from the manifest"));
    }
    Ok(vf)
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let m: Manifest = read_json(path)?;
        if m.format != MANIFEST_FORMAT || m.version != ARTIFACT_VERSION {
            return Err(CliError::corrupt(path, "not a version-1 buffer manifest"));
        }
        Ok(m)
    }

    pub fn listed(dir: &Path, path: String, bound: f64, iterations: usize) -> Result<ManifestFile> {
        let sha256 = file_sha256(&dir.join(&path))?;
        Ok(ManifestFile {
            path,
            bound,
            sha256,
            iterations,
        })
    }

    /// Loads the buffer after checking that it was solved for `config`'s problem.
    pub fn load(path: &Path, config: &RunConfig) -> Result<LoadedBuffer> {
        let manifest = Self::read(path)?;
        let problem = config.problem()?;
        let expected = config.problem_hash()?;
        if manifest.problem_hash != expected {
            return Err(CliError::config(format!(
                "manifest {} was solved for problem {}, the config describes {}",
                path.display(),
                short(&manifest.problem_hash),
                short(&expected)
            )));
        }
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut entries = Vec::with_capacity(manifest.levels.len());
        for file in &manifest.levels {
            let vf = read_listed(dir, file)?;
            check_against(&vf, &problem, &dir.join(&file.path))?;
            entries.push(BufferEntry {
                bound: vf.bound,
                model: problem.model.with_disturbance_bound(vf.bound)?,
                result: vf.to_result()?,
            });
        }
        let buffer = ValueBuffer::new(entries)?;
        let fallback = match (&manifest.fallback, &problem.fallback) {
            (Some(file), Some(spec)) => {
                let vf = read_listed(dir, file)?;
                if vf.grid != spec.grid || vf.model_id != spec.model.model_id() {
                    return Err(CliError::corrupt(dir.join(&file.path), "fallback does not match the config"));
                }
                Some(vf.to_result()?)
            }
            (None, None) => None,
            _ => return Err(CliError::corrupt(path, "fallback entry does not match the task")),
        };
        Ok(LoadedBuffer {
            manifest,
            buffer,
            fallback,
        })
    }
}

fn check_against(vf: &ValueFunctionFile, problem: &Problem, path: &Path) -> Result<()> {
    if vf.grid != problem.grid {
        return Err(CliError::corrupt(path, "grid differs from the config"));
    }
    if vf.model_id != problem.model.model_id() {
        return Err(CliError::corrupt(path, format!("model {} differs from the config", vf.model_id)));
    }
    Ok(())
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

pub struct LoadedBuffer {
    pub manifest: Manifest,
    pub buffer: ValueBuffer,
    pub fallback: Option<SolveResult>,
}

impl LoadedBuffer {
    pub fn reach_avoid_hj(self) -> Result<ReachAvoidHj> {
        let fallback = self
            .fallback
            .ok_or_else(|| CliError::config("the reach-avoid attacker needs a fallback value function"))?;
        Ok(ReachAvoidHj::new(self.buffer, fallback))
    }
}

/// A checkpoint together with the hashes of the run that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointFile {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub env_hash: String,
    /// Problem hash of the buffer the run trained against, if any.
    pub problem_hash: Option<String>,
    pub seed: u64,
    /// SHA-256 of the compact JSON of `checkpoint`.
    pub digest: String,
    pub checkpoint: Checkpoint,
}

fn checkpoint_digest(c: &Checkpoint) -> String {
    sha256_hex(&serde_json::to_vec(c).expect("checkpoints serialize"))
}

impl CheckpointFile {
    pub fn new(checkpoint: Checkpoint, config: &RunConfig, problem_hash: Option<String>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: ARTIFACT_VERSION,
            config_hash: config.config_hash(),
            env_hash: config.env_hash(),
            problem_hash,
            seed: config.seed,
            digest: checkpoint_digest(&checkpoint),
            checkpoint,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let c: CheckpointFile = read_json(path)?;
        if c.format != CHECKPOINT_FORMAT || c.version != ARTIFACT_VERSION {
            return Err(CliError::corrupt(path, "not a version-1 checkpoint"));
        }
        if checkpoint_digest(&c.checkpoint) != c.digest {
            return Err(CliError::corrupt(path, "parameters do not match the stored digest"));
        }
        Ok(c)
    }

    /// Refuses checkpoints trained on a different environment.
    pub fn check_env(&self, config: &RunConfig) -> Result<()> {
        if self.env_hash != config.env_hash() {
            return Err(CliError::config(format!(
                "checkpoint was trained on env {}, the config describes {}",
                short(&self.env_hash),
                short(&config.env_hash())
            )));
        }
        Ok(())
    }
}

/// Hash of a file's bytes, embedded in reports derived from it.
pub fn artifact_hash(path: &Path) -> Result<String> {
    file_sha256(path)
}

/// Metadata written next to every training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMetadata {
    pub seed: u64,
    pub trainer: String,
    pub config_hash: String,
    pub env_hash: String,
    pub problem_hash: Option<String>,
    pub resumed_from: Option<PathBuf>,
    pub start_step: u64,
    pub final_step: u64,
    pub checkpoints: Vec<PathBuf>,
}
