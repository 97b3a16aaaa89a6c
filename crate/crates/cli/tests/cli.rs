use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

const SHORT: &[&str] = &[
    "--set",
    "frames=300",
    "--set",
    "warmup=0.1",
    "--set",
    "voice_users=3",
    "--set",
    "video_users=2",
    "--set",
    "data_users=3",
];

fn fqpsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fqpsa")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fqpsa-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_prints_csv_with_all_rows() {
    let out = fqpsa(&[&["run"], SHORT].concat());
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = stdout(&out);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "metric,value");
    assert_eq!(lines.len(), 13);
    for label in ["FQPS Voice (B)", "LWDF Video (G)", "FQPS (Mbps)", "LWDF Log-sum"] {
        assert!(lines.iter().any(|l| l.starts_with(&format!("{label},"))), "missing {label}");
    }
    // the aligned table with diagnostics goes to stderr
    assert!(stderr(&out).contains("channel checksum"));
}

#[test]
fn out_file_matches_stdout_csv_and_is_reproducible() {
    let path = scratch("run.csv");
    let args = [&["run", "--seed", "7", "--out", path.to_str().unwrap()], SHORT].concat();
    let first = fqpsa(&args);
    assert!(first.status.success(), "{}", stderr(&first));
    let a = fs::read(&path).unwrap();
    assert!(stdout(&first).contains("FQPS (Mbps)"));

    let again = fqpsa(&[&["run", "--seed", "7"], SHORT].concat());
    assert_eq!(a, again.stdout);
}

#[test]
fn seeds_change_the_result() {
    let a = fqpsa(&[&["run", "--seed", "1"], SHORT].concat());
    let b = fqpsa(&[&["run", "--seed", "2"], SHORT].concat());
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn single_scheduler_prints_only_its_rows() {
    let out = fqpsa(&[&["run", "--scheduler", "fqpsa"], SHORT].concat());
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = stdout(&out);
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("FQPS ")));
}

#[test]
fn sweep_has_one_column_per_value() {
    let out = fqpsa(&[&["sweep", "--axis", "voice", "--values", "1,4"], SHORT].concat());
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = stdout(&out);
    assert_eq!(csv.lines().next().unwrap(), "V,1,4");
    assert!(csv.lines().all(|l| l.split(',').count() == 3));
}

#[test]
fn config_file_and_override_precedence() {
    let path = scratch("scenario.cfg");
    fs::write(
        &path,
        "# short run\nframes = 300\nwarmup = 0.1\nvoice_users = 2\nvideo_users = 0\ndata_users = 2\nseed = 3\n",
    )
    .unwrap();
    let cfg = path.to_str().unwrap();
    let from_file = fqpsa(&["run", "--config", cfg]);
    assert!(from_file.status.success(), "{}", stderr(&from_file));
    let overridden = fqpsa(&["run", "--config", cfg, "--set", "seed=4"]);
    assert!(overridden.status.success());
    assert_ne!(from_file.stdout, overridden.stdout);
    let flag = fqpsa(&["run", "--config", cfg, "--seed", "4"]);
    assert_eq!(flag.stdout, overridden.stdout);
}

#[test]
fn quantized_run_with_mcs_file() {
    let mcs = scratch("mcs.txt");
    fs::write(&mcs, "# sinr_db nats/s/Hz\n0 0.5\n6 1.5\n12 2.5\n").unwrap();
    let set = format!("mcs_file={}", mcs.display());
    let out = fqpsa(&[&["run", "--quantize", "on", "--set", &set], SHORT].concat());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("FQPS (Mbps)"));

    fs::write(&mcs, "4 1.0 extra\n").unwrap();
    let bad = fqpsa(&[&["run", "--quantize", "on", "--set", &set], SHORT].concat());
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("line 1"));
}

#[test]
fn unknown_key_is_rejected_with_the_valid_list() {
    let out = fqpsa(&["run", "--set", "voice_user=3"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("voice_user"));
    assert!(err.contains("voice_users"));
}

#[test]
fn invalid_values_exit_with_code_two() {
    for set in ["frames=0", "total_power=-1", "warmup=100", "scheduler=round-robin"] {
        let out = fqpsa(&["run", "--set", set]);
        assert_eq!(out.status.code(), Some(2), "{set}: {}", stderr(&out));
        assert!(stderr(&out).starts_with("error:"), "{set}");
    }
    let missing = fqpsa(&["run", "--config", "/nonexistent/scenario.cfg"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn selftest_passes_and_reports_each_family() {
    let out = fqpsa(&["selftest", "--instances", "30", "--seed", "5"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let report = stdout(&out);
    assert!(report.lines().count() >= 9);
    assert!(report.lines().all(|l| l.starts_with("PASS ")));
    assert!(report.contains("sinr alignment"));
}

#[test]
fn selftest_rejects_zero_instances() {
    let out = fqpsa(&["selftest", "--instances", "0"]);
    assert_eq!(out.status.code(), Some(2));
}
