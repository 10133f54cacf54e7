use std::fs;
use std::process::{Command, Output};

fn tclsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tclsim")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tclsim(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: [&str; 6] = ["--seed", "5", "--ac-count", "40", "--ewh-count", "40"];

fn small(extra: &[&str]) -> Vec<String> {
    SMALL.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn ok_small(extra: &[&str]) -> String {
    let args = small(extra);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn seed_is_mandatory() {
    let out = tclsim(&["generate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn unknown_override_is_rejected() {
    let out = tclsim(&["--seed", "1", "--set", "population.ac.colour=3", "config"]);
    assert!(!out.status.success());
}

#[test]
fn flags_and_dotted_overrides_reach_the_config() {
    let toml = ok(&[
        "--seed", "9", "--runs", "7", "--commitment", "0.8", "--tolerance-kw", "2", "--window-s", "900",
        "--placement", "end", "--allocation", "shuffled", "--dt-s", "2", "--mode", "latching", "--rmvt", "average",
        "--quality-beta", "0.2", "--quality-delay-s", "1.5", "--ac-count", "3", "--ewh-count", "4",
        "--set", "bands.under_hz=[59.8, 59.99]", "--set", "trace.follow_ups=0", "config",
    ]);
    for line in [
        "seed = 9", "runs = 7", "commitment = 0.8", "tolerance_kw = 2.0", "window_s = 900.0", "placement = \"end\"",
        "allocation = \"shuffled\"", "dt_s = 2.0", "mode = \"latching\"", "rmvt = \"average\"", "quality_beta = 0.2",
        "quality_delay_s = 1.5", "ac_count = 3", "ewh_count = 4", "under_hz = [59.8, 59.99]", "follow_ups = 0",
    ] {
        assert!(toml.contains(line), "missing `{line}` in\n{toml}");
    }
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    fs::write(&path, "runs = 3\ncommitment = 0.4\n[population]\nac_count = 12\newh_count = 0\n").unwrap();
    let toml = ok(&["--seed", "2", "--config", path.to_str().unwrap(), "--commitment", "0.5", "config"]);
    assert!(toml.contains("runs = 3"));
    assert!(toml.contains("commitment = 0.5"));
    assert!(toml.contains("ac_count = 12"));
}

#[test]
fn generate_fitness_allocate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let pop = dir.path().join("pop.csv");
    ok_small(&["generate", "--out", pop.to_str().unwrap()]);
    let text = fs::read_to_string(&pop).unwrap();
    assert!(text.starts_with("id,kind,power_kw,"));
    assert_eq!(text.lines().count(), 81);

    let from_file = ok_small(&["fitness", "--population", pop.to_str().unwrap()]);
    assert_eq!(from_file, ok_small(&["fitness"]));
    assert!(from_file.starts_with("device_id,service,availability,quality,fitness\n"));
    assert_eq!(from_file.lines().count(), 81);

    let alloc = ok_small(&["allocate", "--population", pop.to_str().unwrap()]);
    assert!(alloc.starts_with("rank,device_id,power_kw,fitness,threshold_hz\n"));
    assert!(alloc.lines().count() > 1);
}

#[test]
fn simulate_writes_all_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    ok_small(&["simulate", "--out", out.to_str().unwrap()]);
    let head = |f: &str| fs::read_to_string(out.join(f)).unwrap().lines().next().unwrap().to_string();
    assert_eq!(head("trace.csv"), "time_s,freq_hz");
    assert_eq!(head("series.csv"), "t_s,freq_hz,p_sigma_kw,target_kw,achieved_kw");
    assert_eq!(head("switches.csv"), "t_s,device_id,cause,state");
    let summary = fs::read_to_string(out.join("summary.toml")).unwrap();
    assert!(summary.contains("committed_devices"));
    assert_eq!(ok_small(&["simulate"]), summary);
}

#[test]
fn sweep_table() {
    let csv = ok_small(&["--runs", "3", "sweep", "--levels", "0.3,0.9"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "level_pct,mean_rmvt_pct,std_rmvt_pct,runs");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("30.0,"));
}

#[test]
fn montecarlo_is_reproducible() {
    let a = ok_small(&["--runs", "4", "montecarlo"]);
    let b = ok_small(&["--runs", "4", "montecarlo"]);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 7);
    assert!(a.starts_with("window_min,event_time,"));
    let other = ok(&["--seed", "6", "--ac-count", "40", "--ewh-count", "40", "--runs", "4", "montecarlo"]);
    assert_ne!(a, other);
}
