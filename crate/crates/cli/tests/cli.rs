use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use adcs::attmath::Vec3;
use adcs::calib::{synthetic_rate_log, SyntheticLogSpec};

fn adcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adcs")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const PD_SEQUENCE: &str = r#"
[scenario]
inertia = [0.0428, 0.0422, 0.00985]
initial_attitude = [-0.5, -0.5, -0.5, -0.5]
sensor_noise = false

[controller]
kind = "pd"

[run]
sequence = "repeated_pd"
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn assert_single_line_error(o: &Output, kind: &str) {
    assert!(!o.status.success());
    let e = stderr(o);
    assert_eq!(e.trim_end().lines().count(), 1, "{e}");
    assert!(e.starts_with(&format!("error[{kind}]: ")), "{e}");
}

#[test]
fn run_sequence_reports_attained_maneuvers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pd.toml", PD_SEQUENCE);
    let out = dir.path().join("out");
    let o = adcs(&["run", "--config", &cfg, "--seeds", "1", "--out", out.to_str().unwrap(), "--deterministic"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("maneuvers = 7"), "{summary}");
    assert!(summary.contains("attained = ["), "{summary}");
    let report = fs::read_to_string(out.join("seed1_report.txt")).unwrap();
    assert_eq!(report.matches("Maneuver ").count(), 7);
    for f in ["telemetry", "reward", "euler"] {
        assert!(out.join(format!("seed1_{f}.csv")).exists());
    }
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pd.toml", PD_SEQUENCE);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = adcs(&["run", "--config", &cfg, "--seeds", "42,7", "--out", out.to_str().unwrap(), "--deterministic"]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 11);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn analyze_matches_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pd.toml", PD_SEQUENCE);
    let out = dir.path().join("out");
    let o = adcs(&["run", "--config", &cfg, "--seeds", "3", "--out", out.to_str().unwrap(), "--deterministic"]);
    assert!(o.status.success());
    let tel = out.join("seed3_telemetry.csv");
    let o = adcs(&["analyze", tel.to_str().unwrap(), "--goal", "1,0,0,0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("seed3_report.txt")).unwrap();
    let printed = stdout(&o);
    let body = printed.split_once('\n').unwrap().1;
    assert_eq!(body, report);
}

#[test]
fn analyze_marks_unconverged_maneuvers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "off.toml",
        "[scenario]\ninertia = [0.0428, 0.0422, 0.00985]\ninitial_attitude = [-0.5, -0.5, -0.5, -0.5]\n\
         sensor_noise = false\n[controller]\nkind = \"off\"\n[run]\nduration = 60\n",
    );
    let out = dir.path().join("out");
    assert!(adcs(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let tel = out.join("seed0_telemetry.csv");
    let o = adcs(&["analyze", tel.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("not attained"), "{}", stdout(&o));
}

#[test]
fn missing_inertia_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[scenario]\npreset = \"flight\"\n");
    let o = adcs(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_single_line_error(&o, "config");
    assert!(stderr(&o).contains("inertia"));
}

#[test]
fn duplicate_seeds_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pd.toml", PD_SEQUENCE);
    let o = adcs(&["run", "--config", &cfg, "--seeds", "1,1", "--out", dir.path().to_str().unwrap()]);
    assert_single_line_error(&o, "args");
}

#[test]
fn strict_run_fails_on_cage_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "runaway.toml",
        "[scenario]\ninertia = [0.0428, 0.0422, 0.00985]\nsensor_noise = false\n\
         [controller]\nkind = \"constant\"\nrw_action = { x = 1.0, y = 1.0, z = 1.0 }\n[run]\nduration = 300\n",
    );
    let out = dir.path().join("out");
    let o = adcs(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("cage = tripped body-rate"), "{summary}");
    let o = adcs(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--strict"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn netinfo_reports_parameter_count() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("rw.bin");
    assert!(adcs(&["netgen", "--out", f.to_str().unwrap(), "--seed", "5"]).status.success());
    let o = adcs(&["netinfo", f.to_str().unwrap()]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("dims: 39->64->64->64->3"), "{s}");
    assert!(s.contains("params: 11,075"), "{s}");
}

#[test]
fn netinfo_pair_is_about_105_kb() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("pair.bin");
    assert!(adcs(&["netgen", "--pair", "--out", f.to_str().unwrap()]).status.success());
    let o = adcs(&["netinfo", f.to_str().unwrap()]);
    let s = stdout(&o);
    assert!(s.contains("networks: 2"), "{s}");
    let bytes = fs::metadata(&f).unwrap().len();
    assert!((100_000..110_000).contains(&bytes), "{bytes}");
}

#[test]
fn netinfo_rejects_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("rw.bin");
    assert!(adcs(&["netgen", "--out", f.to_str().unwrap()]).status.success());
    let mut bytes = fs::read(&f).unwrap();
    bytes[0] ^= 0xff;
    fs::write(&f, bytes).unwrap();
    let o = adcs(&["netinfo", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_single_line_error(&o, "decode");
    assert!(stderr(&o).contains("magic"));
}

fn synthetic_csv(dir: &Path, name: &str, spec: &SyntheticLogSpec) -> String {
    let p = dir.join(name);
    fs::write(&p, synthetic_rate_log(spec).unwrap().to_series().to_csv_string()).unwrap();
    p.to_str().unwrap().to_string()
}

fn fixture_spec(mu: Vec3) -> SyntheticLogSpec {
    SyntheticLogSpec {
        mu,
        bias: Vec3::new(-0.028, 0.761, -0.032),
        duration: 3000.0,
        dt: 0.2,
        substeps: 2,
        ..Default::default()
    }
}

fn parse_vec(s: &str, key: &str, section: &str) -> Vec3 {
    let body = s.split(&format!("[{section}]")).nth(1).unwrap();
    let line = body.lines().find(|l| l.starts_with(key)).unwrap();
    let inner = line.split_once('[').unwrap().1.trim_end_matches(']');
    let v: Vec<f64> = inner.split(',').map(|x| x.trim().parse().unwrap()).collect();
    Vec3::new(v[0], v[1], v[2])
}

#[test]
fn calibrate_recovers_dipole() {
    let dir = tempfile::tempdir().unwrap();
    let mu = Vec3::new(-0.459, -0.024, 0.069);
    let f = synthetic_csv(dir.path(), "log.csv", &fixture_spec(mu));
    let o = adcs(&["calibrate", &f, "--inertia", "0.0428,0.0422,0.00985"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    let got = parse_vec(&s, "mu_Am2", "calibration");
    assert!((got - mu).norm() / mu.norm() < 0.01, "{s}");
    let b = parse_vec(&s, "bias_deg_s", "calibration");
    assert!((b - Vec3::new(-0.028, 0.761, -0.032)).norm() < 0.01, "{s}");
}

#[test]
fn calibrate_mt_step_prints_delta_table() {
    let dir = tempfile::tempdir().unwrap();
    let mu = Vec3::new(-0.459, -0.024, 0.069);
    let before = synthetic_csv(dir.path(), "before.csv", &fixture_spec(mu));
    let after = synthetic_csv(dir.path(), "after.csv", &fixture_spec(mu + Vec3::new(0.0, 0.2, 0.0)));
    let o = adcs(&["calibrate", &before, "--inertia", "0.0428,0.0422,0.00985", "--mt-step", &after, "--axis", "y"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("dMu_Am2"), "{s}");
    let line = s.lines().find(|l| l.starts_with("delta_on_axis")).unwrap();
    let d: f64 = line.split('=').nth(1).unwrap().trim().parse().unwrap();
    assert!((d - 0.2).abs() < 0.002, "{d}");
}

#[test]
fn calibrate_warns_on_still_log() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticLogSpec {
        initial_omega: Vec3::ZERO,
        duration: 300.0,
        ..Default::default()
    };
    let f = synthetic_csv(dir.path(), "still.csv", &spec);
    let o = adcs(&["calibrate", &f, "--inertia", "0.0428,0.0422,0.00985"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning[calib]"));
}

#[test]
fn calibrate_rejects_bad_inertia() {
    let dir = tempfile::tempdir().unwrap();
    let f = synthetic_csv(dir.path(), "log.csv", &fixture_spec(Vec3::ZERO));
    let o = adcs(&["calibrate", &f, "--inertia", "1,2"]);
    assert_single_line_error(&o, "args");
}
