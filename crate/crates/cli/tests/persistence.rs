mod common;

use common::*;
use proptest::prelude::*;

use hjarl_cli::artifacts::{CheckpointFile, Manifest};
use hjarl_cli::commands::{cmd_solve, cmd_train};
use hjarl_cli::vf::ValueFunctionFile;
use hjarl_cli::RunConfig;
use hjarl_core::{Axis, Grid};

fn arb_vf() -> impl Strategy<Value = ValueFunctionFile> {
    let axis = (-10.0..10.0f64, 0.1..5.0f64, 3usize..6, any::<bool>())
        .prop_map(|(lo, w, n, p)| Axis { lower: lo, upper: lo + w, points: n, periodic: p });
    (prop::collection::vec(axis, 1..4), any::<f64>(), "[a-z0-9_]{0,12}", any::<bool>(), any::<u64>())
        .prop_flat_map(|(axes, bound, id, conv, res_bits)| {
            let grid = Grid::new(axes).unwrap();
            let n = grid.len();
            (Just(grid), Just(bound), Just(id), Just(conv), Just(f64::from_bits(res_bits)),
             prop::collection::vec(any::<u64>().prop_map(f64::from_bits), n))
        })
        .prop_map(|(grid, bound, model_id, converged, residual, values)| ValueFunctionFile {
            grid, bound, model_id, converged, residual, values,
        })
}

fn same_bits(a: &ValueFunctionFile, b: &ValueFunctionFile) -> bool {
    a.grid == b.grid
        && a.bound.to_bits() == b.bound.to_bits()
        && a.model_id == b.model_id
        && a.converged == b.converged
        && a.residual.to_bits() == b.residual.to_bits()
        && a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_function_files_round_trip_bit_exactly(vf in arb_vf()) {
        let bytes = vf.to_bytes();
        let back = ValueFunctionFile::from_bytes(&bytes).unwrap();
        prop_assert!(same_bits(&vf, &back));
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupted_magic_or_version_is_rejected(vf in arb_vf(), pos in 0usize..8, flip in 1u8..=255) {
        let mut bytes = vf.to_bytes();
        bytes[pos] ^= flip;
        prop_assert!(ValueFunctionFile::from_bytes(&bytes).is_err());
    }
}

#[test]
fn corrupted_value_functions_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_reach_avoid();
    let cfg = write_config(dir.path(), &config);
    let out = dir.path().join("buf");
    let o = hjarl(&["solve", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = out.join("manifest.json");
    let level = out.join("level_000.hjvf");
    let original = std::fs::read(&level).unwrap();
    let vf = ValueFunctionFile::read(&level).unwrap();
    assert_eq!(vf.to_bytes(), original);

    let mut train_config = config.clone();
    train_config.trainer.kind = hjarl_core::rl::TrainerKind::Hjarl;
    let tcfg = dir.path().join("hjarl.json");
    std::fs::write(&tcfg, train_config.to_json()).unwrap();
    let run = |label: &str| {
        let o = hjarl(&["train", "--config", s(&tcfg), "--manifest", s(&manifest), "--out", s(&dir.path().join(label))]);
        (code(&o), String::from_utf8_lossy(&o.stderr).to_string())
    };

    let mut bad_magic = original.clone();
    bad_magic[0] = b'X';
    std::fs::write(&level, &bad_magic).unwrap();
    assert_eq!(run("magic").0, 3);

    std::fs::write(&level, &original[..original.len() - 8]).unwrap();
    let (c, err) = run("truncated");
    assert_eq!(c, 3, "{err}");

    // Truncation is caught by the reader itself, not only the manifest checksum.
    assert_eq!(ValueFunctionFile::read(&level).unwrap_err().exit_code(), 3);

    std::fs::write(&level, &original).unwrap();
    let (c, err) = run("restored");
    assert_eq!(c, 0, "{err}");
}

#[test]
fn checkpoints_round_trip_bit_exactly_and_reject_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_reach_avoid();
    let out = dir.path().join("run");
    let trained = cmd_train(&config, None, None, &out).unwrap();
    let path = trained.final_checkpoint;
    let bytes = std::fs::read(&path).unwrap();
    let file = CheckpointFile::read(&path).unwrap();
    let copy = dir.path().join("copy.json");
    file.write(&copy).unwrap();
    assert_eq!(std::fs::read(&copy).unwrap(), bytes);

    // Change one parameter digit without breaking the JSON.
    let text = String::from_utf8(bytes.clone()).unwrap();
    let at = text.find("\"params\": [").unwrap() + "\"params\": [".len();
    let digit = text[at..].find(|c: char| c.is_ascii_digit() && c != '0').unwrap() + at;
    let mut tampered = text.into_bytes();
    tampered[digit] = if tampered[digit] == b'9' { b'8' } else { tampered[digit] + 1 };
    let bad = dir.path().join("tampered.json");
    std::fs::write(&bad, &tampered).unwrap();
    assert_eq!(CheckpointFile::read(&bad).unwrap_err().exit_code(), 3);

    let truncated = dir.path().join("truncated.json");
    std::fs::write(&truncated, &bytes[..bytes.len() / 2]).unwrap();
    let cfg = write_config(dir.path(), &config);
    for p in [&bad, &truncated] {
        let o = hjarl(&["heatmap", "--config", s(&cfg), "--checkpoint", s(p), "--out", s(&dir.path().join("h"))]);
        assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn solve_writes_one_level_plus_fallback_and_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_reach_avoid();
    let a = cmd_solve(&config, &dir.path().join("a")).unwrap();
    let b = cmd_solve(&config, &dir.path().join("b")).unwrap();
    let m = Manifest::read(&a).unwrap();
    assert_eq!(m.levels.len(), 1);
    assert_eq!(m.levels[0].bound, 1.0);
    assert_eq!(m.config_hash, config.config_hash());
    assert!(m.fallback.is_some());
    for name in ["manifest.json", "level_000.hjvf", "fallback.hjvf"] {
        let x = std::fs::read(a.parent().unwrap().join(name)).unwrap();
        let y = std::fs::read(b.parent().unwrap().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn quadrotor_solve_writes_21_levels() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig::from_json(
        r#"{
            "env": {"task": "quadrotor"},
            "grid": [
                {"lower": -1.2, "upper": 1.2, "points": 5},
                {"lower": -1.2, "upper": 1.2, "points": 5},
                {"lower": -3.141592653589793, "upper": 3.141592653589793, "points": 3, "periodic": true},
                {"lower": -5, "upper": 5, "points": 5},
                {"lower": -5, "upper": 5, "points": 5},
                {"lower": -5, "upper": 5, "points": 5}
            ],
            "solver": {"horizon": {"finite": 0.1}}
        }"#,
    )
    .unwrap();
    let manifest = cmd_solve(&config, dir.path()).unwrap();
    let m = Manifest::read(&manifest).unwrap();
    assert_eq!(m.levels.len(), 21);
    assert!(m.fallback.is_none());
    let files = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "hjvf"))
        .count();
    assert_eq!(files, 21);
    let loaded = Manifest::load(&manifest, &config).unwrap();
    assert_eq!(loaded.buffer.len(), 21);
    assert!((loaded.buffer.max_bound() - 2e-3).abs() < 1e-15);
}

#[test]
fn non_convergence_exits_4_and_leaves_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_reach_avoid();
    // The levels converge; the fallback cannot reach its horizon within the iteration cap.
    config.buffer.levels = Some(vec![0.5, 1.0]);
    config.buffer.fallback_horizon = Some(1000.0);
    config.solver = Some(hjarl_core::hjsolver::SolveConfig { max_iterations: 3000, ..Default::default() });
    let cfg = write_config(dir.path(), &config);
    let out = dir.path().join("buf");
    let o = hjarl(&["solve", "--config", s(&cfg), "--out", s(&out)]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(code(&o), 4, "{err}");
    assert!(err.contains("level 2"), "the failure should come after both levels were written: {err}");
    let left: Vec<_> = std::fs::read_dir(&out).unwrap().collect();
    assert!(left.is_empty(), "{left:?}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"trainer": {"kindd": "ppo"}}"#).unwrap();
    let o = hjarl(&["solve", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    let o = hjarl(&["eval", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2, "missing checkpoint");
    let o = hjarl(&["frobnicate"]);
    assert_eq!(code(&o), 2, "unknown verb");
}
