//! Small runs of every experiment kind, shared by the golden-file test and
//! the acceptance suite.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

pub struct GoldenCase {
    pub name: &'static str,
    pub config: &'static str,
    pub overrides: &'static [&'static str],
}

pub const GOLDEN_CASES: &[GoldenCase] = &[
    GoldenCase {
        name: "ou_exact_converge",
        config: "ou_exact_converge.toml",
        overrides: &["scheme.trajectories=500", "experiment.levels=3", "plots=false"],
    },
    GoldenCase {
        name: "ou_euler_converge",
        config: "ou_euler_converge.toml",
        overrides: &[
            "scheme.trajectories=400",
            "experiment.levels=3",
            "experiment.kolmogorov_nodes=401",
            "experiment.kolmogorov_steps=200",
        ],
    },
    GoldenCase {
        name: "ou_cubature_converge",
        config: "ou_cubature_converge.toml",
        overrides: &[
            "scheme.steps=1",
            "experiment.levels=3",
            "experiment.kolmogorov_nodes=401",
            "experiment.kolmogorov_steps=200",
        ],
    },
    GoldenCase {
        name: "cubature_verify",
        config: "cubature_verify.toml",
        overrides: &[],
    },
    GoldenCase {
        name: "heat_simulate",
        config: "heat_simulate.toml",
        overrides: &["scheme.trajectories=32", "scheme.steps=16", "plots=false"],
    },
    GoldenCase {
        name: "stability",
        config: "stability.toml",
        overrides: &["experiment.trajectories=100", "experiment.steps=32"],
    },
    GoldenCase {
        name: "picard_validate",
        config: "picard_validate.toml",
        overrides: &[
            "experiment.fine_steps=64",
            "experiment.coarse_steps=[8, 16, 32]",
            "experiment.ensemble=16",
        ],
    },
    GoldenCase {
        name: "variation_check",
        config: "variation_check.toml",
        overrides: &["experiment.ensemble=8", "scheme.steps=16"],
    },
    GoldenCase {
        name: "noise_validate",
        config: "noise_validate.toml",
        overrides: &[
            "experiment.integrands=2",
            "experiment.trajectories=500",
            "experiment.fubini_nodes=100",
            "experiment.fubini_paths=20",
        ],
    },
];

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn golden_dir(case: &GoldenCase) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(case.name)
}

/// Runs the binary for `case` into `out`; returns an error message on a
/// non-zero exit.
pub fn run_case(case: &GoldenCase, out: &Path, threads: usize) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mframe"));
    cmd.arg("--config")
        .arg(repo_root().join("configs").join(case.config))
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string());
    for o in case.overrides {
        cmd.arg("--override").arg(o);
    }
    let output = cmd.output().map_err(|e| e.to_string())?;
    if output.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{}: exit {:?}: {}",
            case.name,
            output.status.code(),
            String::from_utf8_lossy(&output.stderr)
        ))
    }
}

/// Sorted `(file name, bytes)` of every file in `dir`.
pub fn read_dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map(|rd| {
            rd.map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

/// Compares a run directory against the checked-in golden directory; lists
/// every mismatch.
pub fn compare_with_golden(case: &GoldenCase, out: &Path) -> Vec<String> {
    let want = read_dir_files(&golden_dir(case));
    let got = read_dir_files(out);
    let mut problems = Vec::new();
    if want.is_empty() {
        problems.push(format!("{}: no golden files", case.name));
    }
    let names = |v: &[(String, Vec<u8>)]| v.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    if names(&want) != names(&got) {
        problems.push(format!("{}: files {:?} vs golden {:?}", case.name, names(&got), names(&want)));
    }
    for (name, bytes) in &want {
        if let Some((_, g)) = got.iter().find(|(n, _)| n == name) {
            if g != bytes {
                problems.push(format!("{}/{name} differs from golden", case.name));
            }
        }
    }
    problems
}
