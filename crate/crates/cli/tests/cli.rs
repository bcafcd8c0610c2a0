use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn mframe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mframe")).args(args).output().unwrap()
}

fn run_config(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    mframe(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

const SCALAR_OU: &str = r#"
seed = 42

[problem]
eigenvalues = [-1.0]
r0 = [1.0]
horizon = 1.0
q = [1.0]
lipschitz = 0.0
drift = { constant = [0.3] }
diffusion = [{ constant = [0.5] }]

[scheme]
steps = 4
trajectories = 2000

[experiment]
kind = "converge"
levels = 4
reference = "ou-exact"
"#;

#[test]
fn missing_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run_config(&dir.path().join("absent.toml"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cannot read config"));
    assert!(!out.exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (from, to) in [
        ("seed = 42", "seed = 42\nsed = 1"),
        ("steps = 4", "step = 4"),
        ("lipschitz = 0.0", "lipschitz = 0.0\nextra = true"),
        ("levels = 4", "levels = 4\nlevel = 4"),
    ] {
        let cfg = write_config(dir.path(), &SCALAR_OU.replace(from, to));
        let o = run_config(&cfg, &out, &[]);
        assert_eq!(o.status.code(), Some(2), "{to}: {}", stderr(&o));
        assert!(stderr(&o).contains("unknown"), "{}", stderr(&o));
        assert!(!out.exists());
    }
}

#[test]
fn overrides_are_validated_like_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SCALAR_OU);
    let out = dir.path().join("out");
    let o = run_config(&cfg, &out, &["--override", "scheme.stepz=3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run_config(&cfg, &out, &["--override", "no-equals-sign"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run_config(&cfg, &out, &["--override", "problem.r0=[1.0, 2.0]"]);
    assert_eq!(o.status.code(), Some(2), "dimension mismatch must be a validation error");
    assert!(!out.exists());
}

#[test]
fn numerical_guards_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run_config(
        &configs().join("heat_simulate.toml"),
        &out,
        &[
            "--override",
            "problem.heat.diffusivity=1.0",
            "--override",
            "scheme.frame=direct",
            "--override",
            "scheme.trajectories=4",
        ],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("overflow guard"));
    assert!(!out.exists());
}

#[test]
fn converge_on_scalar_ou_recovers_weak_order_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SCALAR_OU);
    let out = dir.path().join("out");
    let o = run_config(&cfg, &out, &["--override", "scheme.antithetic=true"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = std::fs::read_to_string(out.join("converge.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("level,dt,abs_error,stderr"));
    assert_eq!(lines.count(), 4);
    let summary = std::fs::read_to_string(out.join("converge_summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    let slope: f64 = row[0].parse().unwrap();
    assert!((0.7..=1.3).contains(&slope), "slope {slope}");
}

#[test]
fn cubature_verify_certifies_the_shipped_formulas() {
    let dir = tempfile::tempdir().unwrap();
    for (file, checked) in [("degree3_d1.txt", "checked=6"), ("degree3_d2.txt", "")] {
        let formula = configs().join("../formulas").join(file);
        let formula_override = format!("experiment.formula=\"{}\"", formula.display());
        let out = dir.path().join(file);
        let o = run_config(
            &configs().join("cubature_verify.toml"),
            &out,
            &["--override", &formula_override],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let s = stdout(&o);
        assert!(s.contains("certified=true"), "{s}");
        assert!(s.contains(checked));
        let table = std::fs::read_to_string(out.join("cubature_verify.csv")).unwrap();
        for line in table.lines().skip(1) {
            let residual: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
            assert!(residual <= 1e-10, "{line}");
        }
    }
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("heat_simulate.toml");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let extra = ["--override", "scheme.trajectories=64", "--override", "scheme.frame=none"];
    let mut args_a = extra.to_vec();
    args_a.extend(["--threads", "1"]);
    let mut args_b = extra.to_vec();
    args_b.extend(["--threads", "4"]);
    assert_eq!(run_config(&config, &a, &args_a).status.code(), Some(0));
    assert_eq!(run_config(&config, &b, &args_b).status.code(), Some(0));
    for f in ["moments.csv", "paths.csv", "moments.gp"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert!(x == y, "{f} differs between thread counts");
    }
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SCALAR_OU.replace("levels = 4", "levels = 3"));
    let read = |out: &Path| std::fs::read_to_string(out.join("converge.csv")).unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    run_config(&cfg, &a, &[]);
    run_config(&cfg, &b, &["--seed", "42"]);
    run_config(&cfg, &c, &["--seed", "43"]);
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn output_directory_comes_from_config_when_no_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SCALAR_OU.replace("seed = 42", "seed = 42\noutput = \"from-config\"\nplots = true"),
    );
    let o = mframe(&["--config", cfg.to_str().unwrap(), "--override", "experiment.levels=3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("from-config");
    assert!(out.join("converge.csv").exists());
    let gp = std::fs::read_to_string(out.join("converge.gp")).unwrap();
    assert!(gp.contains("'converge.csv'"));
    assert!(!out.join("converge_summary.gp").exists());
}

#[test]
fn every_shipped_config_parses() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let cfg = moving_frame_cli::config::parse_config(&text, &[]).unwrap_or_else(|e| panic!("{path:?}: {e}"));
        cfg.problem.build().unwrap_or_else(|e| panic!("{path:?}: {e}"));
    }
}
