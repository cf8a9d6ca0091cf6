use std::path::Path;
use std::process::{Command, Output};

fn bilevel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bilevel")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.cfg");
    std::fs::write(
        &path,
        "s_max = 5\nhorizon = 6\nepisodes = 120\nwarmup = 20\nradius_scale = 0.001\ngrid_step = 0.25\nseeds = 3,4\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_one_row_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("r.csv");
    let res = bilevel(&["run", "--config", &cfg, "--episodes", "80", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,b,lambda,exp_loss,exp_cons,real_loss,real_cons,f_k,switch_cost,episode_cost,cum_gap,cum_viol,lp_status,solve_ms"
    );
    assert_eq!(lines.count(), 80);
}

#[test]
fn run_without_out_streams_csv_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let res = bilevel(&["run", "--config", &cfg, "--algorithm", "decoupled", "--episodes", "30"]);
    assert!(res.status.success());
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 31);
    assert!(stdout.lines().nth(1).unwrap().starts_with("1,2.0,,"));
}

#[test]
fn sweep_names_files_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("sweep");
    let res = bilevel(&[
        "sweep",
        "--config",
        &cfg,
        "--algorithms",
        "blol,fixed:4,decoupled",
        "--seeds",
        "0,1,2,3,4",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let mut names: Vec<String> =
        std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    let mut expected: Vec<String> = ["blol", "fixed-b4", "decoupled"]
        .iter()
        .flat_map(|a| (0..5).map(move |s| format!("{a}_seed{s}.csv")))
        .collect();
    expected.sort();
    assert_eq!(names, expected);
}

#[test]
fn oracle_prints_the_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let res = bilevel(&["oracle", "--config", &cfg]);
    assert!(res.status.success());
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.starts_with("# b_star = "));
    assert!(stdout.contains("b,l_star,consumption,total\n2,"));
    // grid 2, 2.25, ..., 6
    assert_eq!(stdout.lines().filter(|l| !l.starts_with('#')).count(), 1 + 17);
}

#[test]
fn trace_generation_feeds_a_trace_run() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    let res = bilevel(&["gen-trace", "--out", trace.to_str().unwrap(), "--bins", "2000", "--seed", "5"]);
    assert!(res.status.success());
    let cfg = small_config(dir.path());
    let set = format!("trace_path={}", trace.display());
    let res = bilevel(&["run", "--config", &cfg, "--set", "arrival=trace", "--set", &set, "--episodes", "40"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn checkpoint_can_be_inspected_and_dumped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let counts = dir.path().join("counts.csv");
    let lp = dir.path().join("plan.lp");
    let out = dir.path().join("r.csv");
    let res = bilevel(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--checkpoint",
        counts.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let res = bilevel(&[
        "inspect",
        "--config",
        &cfg,
        "--counts",
        counts.to_str().unwrap(),
        "--budget",
        "3",
        "--lp-out",
        lp.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8(res.stdout).unwrap();
    // every stage saw each of the 120 episodes once
    assert!(stdout.lines().any(|l| l.starts_with("0,120,")), "{stdout}");
    let dumped = bilevel_core::lp::read_lp(std::fs::File::open(&lp).unwrap()).unwrap();
    assert_eq!(dumped.designated_row, Some(0));
}

#[test]
fn usage_and_runtime_errors_have_distinct_exit_codes() {
    assert_eq!(bilevel(&["run", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(bilevel(&["frobnicate"]).status.code(), Some(1));
    let missing = bilevel(&["run", "--config", "/nonexistent/x.cfg"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("cannot read config"));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "episodes = ten\n").unwrap();
    let res = bilevel(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 1"));
    assert_eq!(bilevel(&["--help"]).status.code(), Some(0));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["poisson.cfg", "trace.cfg"] {
        let text = std::fs::read_to_string(root.join(name)).unwrap();
        bilevel_core::RunConfig::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
