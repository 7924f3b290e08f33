use std::path::{Path, PathBuf};
use std::process::Command;

use ssmk::cli::run;
use ssmk::lattice::{IntegerMatrix, RationalMatrix};

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn ssmk(args: &str) -> ssmk::cli::Outcome {
    run(std::iter::once("ssmk").chain(args.split_whitespace()))
}

const GOLDEN: &[(&str, &str)] = &[
    ("fibers tent -n 2", "fibers_tent_2.txt"),
    ("fibers gasket -n 2", "fibers_gasket_2.txt"),
    ("fibers fullshift2 -n 2", "fibers_fullshift2_2.txt"),
    ("k0 tent -n 2", "k0_tent_2.txt"),
    ("k0 gasket -n 2", "k0_gasket_2.txt"),
    ("k0 fullshift2 -n 2", "k0_fullshift2_2.txt"),
    ("embed tent -n 2", "embed_tent_2.txt"),
    ("embed gasket -n 2", "embed_gasket_2.txt"),
    ("embed fullshift2 -n 2", "embed_fullshift2_2.txt"),
    ("traces tent -n 2 --rmax 2", "traces_tent_2.txt"),
    ("traces gasket -n 2 --rmax 2", "traces_gasket_2.txt"),
    ("traces fullshift2 -n 2 --rmax 2", "traces_fullshift2_2.txt"),
    ("k0 tent -n 2 --format json", "k0_tent_2.json"),
    ("k0 gasket -n 2 --format json", "k0_gasket_2.json"),
    ("k0 fullshift2 -n 2 --format json", "k0_fullshift2_2.json"),
    ("orbits tent --point 0 --depth 4 --format dot", "orbits_tent_0_4.dot"),
    ("orbits gasket --point Q --depth 1 --format dot", "orbits_gasket_Q_1.dot"),
    ("limit tent --max 3 --rmax 3", "limit_tent_3.txt"),
];

#[test]
fn outputs_match_golden_files() {
    for (args, file) in GOLDEN {
        let out = ssmk(args);
        assert_eq!(out.code, 0, "{args}: {}", out.stderr);
        let expected = std::fs::read_to_string(golden_dir().join(file)).unwrap();
        assert_eq!(out.stdout, expected, "{args}");
    }
}

#[test]
fn outputs_are_deterministic() {
    for args in
        ["embed gasket -n 2 --format json", "traces tent -n 3 --rmax 3 --format json", "limit fullshift2 --max 3 --rmax 1 --format json"]
    {
        let a = ssmk(args);
        let b = ssmk(args);
        assert_eq!(a, b, "{args}");
    }
}

#[test]
fn tent_fiber_table_at_zero() {
    let out = ssmk("fibers tent -n 3 --point 0");
    assert_eq!(out.code, 0);
    let first = out.stdout.lines().next().unwrap();
    assert_eq!(first, "0 at level 3: M_5 ⊕ M_2 ⊕ C");
    assert!(out.stdout.contains("C(0,half,2)"));
    assert!(out.stdout.contains("C(0,half,3)"));
}

#[test]
fn tent_orbit_picture() {
    let out = ssmk("orbits tent --point 0 --depth 4 --format dot");
    assert!(out.stdout.starts_with("digraph orbits {"));
    assert!(out.stdout.contains("label=\"Orbit_3-1(half) from 0\""));
    assert!(out.stdout.contains("f1_2 -> f1_3 [label=\"gamma_0,gamma_1\", penwidth=2"));
    let gasket = ssmk("orbits gasket --point Q --depth 1 --format dot");
    assert!(gasket.stdout.contains("f0_0 [label=\"Q\"]"));
    assert!(gasket.stdout.contains("f0_1 [label=\"S\"]"));
    assert!(gasket.stdout.contains("label=\"gamma_0,gamma_1\""));
    let none = ssmk("orbits fullshift2 --depth 3 --format dot");
    assert_eq!(none.stdout, "digraph orbits {\n}\n");
}

fn json(args: &str) -> serde_json::Value {
    let out = ssmk(args);
    assert_eq!(out.code, 0, "{args}: {}", out.stderr);
    serde_json::from_str(&out.stdout).unwrap()
}

#[test]
fn json_documents_carry_meta() {
    let doc = json("embed tent -n 1 --format json");
    assert_eq!(doc["meta"]["spec"], "tent");
    assert_eq!(doc["meta"]["level"], 1);
    assert_eq!(doc["meta"]["assumptions"]["connected_base"], "assumed");
    assert!(doc["result"].is_object());
}

#[test]
fn json_matrices_round_trip() {
    let doc = json("embed gasket -n 3 --format json");
    let labelled: IntegerMatrix = serde_json::from_value(doc["result"]["labelled"].clone()).unwrap();
    assert_eq!((labelled.rows(), labelled.cols()), (13, 10));
    assert_eq!(serde_json::to_value(&labelled).unwrap(), doc["result"]["labelled"]);

    let doc = json("traces tent -n 3 --rmax 3 --format json");
    let values: RationalMatrix = serde_json::from_value(doc["result"]["values"].clone()).unwrap();
    assert_eq!(serde_json::to_value(&values).unwrap(), doc["result"]["values"]);
    assert!(doc["result"]["values"]["entries"].as_array().unwrap().iter().any(|e| e.as_str().unwrap().contains('/')));
}

#[test]
fn approx_only_touches_human_output() {
    let exact = ssmk("traces tent -n 2 --rmax 2");
    let approx = ssmk("traces tent -n 2 --rmax 2 --approx");
    assert!(approx.stdout.contains("1/4 (~0.250000)"));
    assert!(!exact.stdout.contains('~'));
    let doc = json("traces tent -n 2 --rmax 2 --approx --format json");
    let plain = json("traces tent -n 2 --rmax 2 --format json");
    assert_eq!(doc["result"]["values"], plain["result"]["values"]);
    assert!(doc["result"]["approx"].is_array());
}

#[test]
fn validation_failures_exit_one() {
    let dir = std::env::temp_dir().join(format!("ssmk-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let broken = dir.join("broken.toml");
    std::fs::write(&broken, "branch_count = 2\npoints = [\"a\", \"b\"]\n[gamma.a]\n0 = \"b\"\n5 = \"a\"\n").unwrap();
    let out = run(["ssmk", "validate", broken.to_str().unwrap()]);
    assert_eq!(out.code, 1);
    assert!(out.stderr.starts_with("ValidationFailed:"));
    assert!(out.stderr.contains("outside 0..2"), "{}", out.stderr);

    let fine = dir.join("shift.toml");
    std::fs::write(&fine, "branch_count = 2\npoints = [\"0\", \"1\"]\n[gamma.0]\n0 = \"0\"\n[gamma.1]\n1 = \"1\"\n").unwrap();
    let out = run(["ssmk", "validate", fine.to_str().unwrap()]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.starts_with("shift is valid"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(ssmk("k0 tent -n 1 --format dot").code, 2);
    assert_eq!(ssmk("embed").code, 2);
    assert_eq!(ssmk("k0 tent -n x").code, 2);
    assert_eq!(ssmk("--help").code, 0);
}

#[test]
fn computation_errors_name_their_source() {
    let out = ssmk("k0 gasket -n 3 --size-guard 9");
    assert_eq!(out.code, 1);
    assert!(out.stderr.starts_with("SizeGuardExceeded:"), "{}", out.stderr);
    let out = ssmk("branch-sets tent -n 0");
    assert!(out.stderr.starts_with("LevelZero:"), "{}", out.stderr);
    let out = ssmk("fibers tent -n 2 --point nowhere");
    assert!(out.stderr.starts_with("UnknownPoint:"), "{}", out.stderr);
}

#[test]
fn binary_honours_size_guard_variable() {
    let exe = env!("CARGO_BIN_EXE_ssmk");
    let out = Command::new(exe).args(["k0", "gasket", "-n", "3"]).env("SSMK_SIZE_GUARD", "9").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("SizeGuardExceeded:"));
    let out = Command::new(exe).args(["k0", "gasket", "-n", "1"]).env("SSMK_SIZE_GUARD", "9").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = Command::new(exe).args(["k0", "tent", "--format", "dot"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
