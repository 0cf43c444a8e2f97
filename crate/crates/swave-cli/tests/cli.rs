use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const EXPERIMENTS: [&str; 10] = [
    "condition-check",
    "gamma0",
    "identity-residual",
    "duality-check",
    "observability",
    "hum",
    "negative-classical",
    "negative-localized",
    "negative-noboundary",
    "reduction-check",
];

fn swave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swave"))
        .args(args)
        .output()
        .expect("spawn swave")
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small(experiment: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![experiment, "--K", "3", "--M", "7", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    swave(&args)
}

#[test]
fn list_presets_is_sorted_and_stable() {
    let a = swave(&["list-presets"]);
    assert!(a.status.success());
    let text = stdout(&a);
    assert!(text.contains("remark-rm2"));
    let names: Vec<&str> = text
        .lines()
        .skip(1)
        .filter_map(|l| l.split_whitespace().next())
        .collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    assert_eq!(text, stdout(&swave(&["list-presets"])));
}

#[test]
fn every_experiment_passes_on_a_small_tree() {
    for e in EXPERIMENTS {
        let dir = scratch(e);
        let o = small(e, &dir, &[]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{e}: {}{}",
            stdout(&o),
            String::from_utf8_lossy(&o.stderr)
        );
        let csv = fs::read_to_string(dir.join("result.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2, "{e}");
        assert!(csv.lines().nth(1).unwrap().starts_with(&format!("{e},PASS")));
        assert!(dir.join("report.txt").exists());
    }
}

#[test]
fn run_subcommand_matches_direct_form() {
    let (a, b) = (scratch("run-a"), scratch("run-b"));
    let x = small("gamma0", &a, &[]);
    let y = swave(&["run", "gamma0", "--K", "3", "--M", "7", "--out", b.to_str().unwrap()]);
    assert_eq!(x.status.code(), y.status.code());
    assert_eq!(
        fs::read(a.join("result.csv")).unwrap(),
        fs::read(b.join("result.csv")).unwrap()
    );
}

#[test]
fn every_preset_passes_condition_check() {
    let list = stdout(&swave(&["list-presets"]));
    for name in list.lines().skip(1).filter_map(|l| l.split_whitespace().next()) {
        let o = small(
            "condition-check",
            &scratch(&format!("preset-{name}")),
            &["--preset", name],
        );
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stdout(&o));
    }
}

#[test]
fn same_seed_gives_identical_outputs() {
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    for dir in [&a, &b] {
        assert!(small("hum", dir, &["--seed", "7"]).status.success());
    }
    for file in ["result.csv", "cg_history.csv", "control_h.csv"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn canonical_observability_reports_right_boundary() {
    let o = small("observability", &scratch("obs"), &[]);
    let text = stdout(&o);
    assert!(text.contains("Γ₀ = {right}"), "{text}");
    assert!(text.contains("observability_constant"));
}

#[test]
fn critical_point_is_a_precondition_failure() {
    let o = small("condition-check", &scratch("alpha0"), &["--alpha", "0"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("critical point"));
}

#[test]
fn configuration_errors_exit_2() {
    assert_eq!(small("hum", &scratch("k0"), &["--K", "20"]).status.code(), Some(2));
    assert_eq!(swave(&["hum", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        small("hum", &scratch("preset"), &["--preset", "nope"]).status.code(),
        Some(2)
    );

    let dir = scratch("badcfg");
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.toml");
    fs::write(&path, "[grid]\nK = 3\nunknown = 1\n").unwrap();
    let o = swave(&["hum", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_is_layered_under_flags() {
    let dir = scratch("layered");
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join("c.toml");
    fs::write(
        &path,
        "experiment = \"duality-check\"\n[grid]\nK = 2\nM = 5\n[run]\nsamples = 2\n",
    )
    .unwrap();
    let out = dir.join("out");
    let o = swave(&[
        "duality-check",
        "--config",
        path.to_str().unwrap(),
        "--K",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("K = 3") && text.contains("M = 5"), "{text}");
    let rows = fs::read_to_string(out.join("duality.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
}

#[test]
fn injected_fault_fails_the_verdict() {
    let o = small("reduction-check", &scratch("fault"), &["--fault", "0.1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("verdict: FAIL"));
}
