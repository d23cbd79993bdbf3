use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_autotherm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn list_presets_names_the_whole_catalog() {
    let out = run(&["list-presets"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for name in [
        "jc-excited-vacuum",
        "jc-superposition-vacuum",
        "jc-mixed-vacuum",
        "jc-coherent-drive",
        "qq-excited-ground",
        "qq-superposition-ground",
        "se-lindblad",
        "se-rc",
        "jc-excited-vacuum-full",
        "jc-superposition-vacuum-full",
    ] {
        assert!(text.contains(name), "missing {name}");
    }
}

#[test]
fn run_to_stdout_has_schema_and_is_deterministic() {
    let args = ["run", "--preset", "jc-excited-vacuum", "--samples", "16"];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout, "outputs differ between runs");
    let text = stdout(&first);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# preset=jc-excited-vacuum"));
    assert!(lines.next().unwrap().starts_with("t,U_A,Uth_A,S_A,beta_A,Q_A,W_A,"));
    assert_eq!(text.lines().count(), 2 + 17);
}

#[test]
fn run_writes_csv_and_gnuplot_script() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("table.csv");
    let out = run(&[
        "run",
        "--preset",
        "qq-excited-ground",
        "--samples",
        "12",
        "--out",
        csv.to_str().unwrap(),
        "--gnuplot",
    ]);
    assert!(out.status.success());
    let script = std::fs::read_to_string(dir.path().join("table.gp")).unwrap();
    assert!(script.contains("set datafile separator"));
    assert!(script.contains("table.csv"));
    assert!(std::fs::read_to_string(&csv).unwrap().lines().count() > 10);
}

#[test]
fn config_file_runs_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# comment\npreset=qq-excited-ground\nsamples=16\n").unwrap();
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--samples", "8"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 2 + 9, "cli override wins");
}

#[test]
fn usage_errors_exit_1() {
    for args in [
        vec!["run"],
        vec!["run", "--preset", "no-such-preset"],
        vec!["run", "--preset", "qq-excited-ground", "--alpha", "3"],
        vec!["run", "--preset", "jc-excited-vacuum", "--gnuplot"],
        vec!["no-such-subcommand"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "args {args:?}");
    }
}

#[test]
fn bad_config_key_exits_1_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "preset=se-lindblad\nmodel.bogus=1\n").unwrap();
    let out = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("line 2"), "stderr: {err}");
}

#[test]
fn unwritable_out_path_exits_3() {
    let out = run(&[
        "run",
        "--preset",
        "jc-excited-vacuum",
        "--samples",
        "8",
        "--out",
        "/no-such-dir/anywhere/table.csv",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn alpha_override_runs_a_small_coherent_drive() {
    let out = run(&[
        "run",
        "--preset",
        "jc-coherent-drive",
        "--alpha",
        "3",
        "--samples",
        "10",
        "--tmax",
        "0.05",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let meta = text.lines().next().unwrap();
    assert!(meta.contains("preset=jc-coherent-drive"));
    assert!(meta.contains("levels_B=46"), "meta: {meta}");
    assert_eq!(text.lines().count(), 2 + 11);
}

#[test]
fn help_exits_0() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("list-presets"));
}
