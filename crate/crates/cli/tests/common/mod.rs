#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use hjarl_cli::RunConfig;

/// Reach-avoid on a coarse 21⁴ joint grid and a 41² fallback: solves in seconds.
pub fn small_reach_avoid() -> RunConfig {
    let mut c = RunConfig::from_json(
        r#"{
            "grid": [
                {"lower": -1, "upper": 1, "points": 21},
                {"lower": -1, "upper": 1, "points": 21},
                {"lower": -1, "upper": 1, "points": 21},
                {"lower": -1, "upper": 1, "points": 21}
            ],
            "buffer": {"fallback_points": 41},
            "trainer": {"kind": "ppo", "total_steps": 2048, "steps_per_update": 512, "hidden": [16]},
            "eval": {"spacing": 0.1, "defender_inits": [[0.5, 0.0]]}
        }"#,
    )
    .unwrap();
    c.seed = 7;
    c
}

pub fn write_config(dir: &Path, config: &RunConfig) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, config.to_json()).unwrap();
    p
}

pub fn hjarl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjarl")).args(args).output().unwrap()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
