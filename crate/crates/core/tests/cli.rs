use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twoway-aoi"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Data rows (header comments and column line dropped), split on commas.
fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn analytic_reference_row() {
    let out = stdout(&run(&["analytic"]));
    assert!(out.starts_with("# command = analytic\n# version = "));
    let r = rows(&out);
    assert_eq!(r.len(), 1);
    assert_eq!(r[0][0..3], ["0.5", "0.5", "83.4909090909"]);
    assert!(r[0][3].starts_with("1172.63"), "{}", r[0][3]);
    assert!(r[0][4].starts_with("1172.13"), "{}", r[0][4]);
    assert!(r[0][5].starts_with("628.06"), "{}", r[0][5]);
}

#[test]
fn starved_sides_print_inf() {
    let out = stdout(&run(&["analytic", "--rho_grid", "0,1"]));
    let r = rows(&out);
    assert_eq!(r[0][3], "inf");
    assert_eq!(r[0][7], "0");
    assert_eq!(r[1][2], "inf");
    assert_eq!(r[1][6], "0");
}

#[test]
fn analytic_rows_round_trip() {
    let first = stdout(&run(&[
        "analytic",
        "--rho_grid",
        "0.05:0.95:7",
        "--w_grid",
        "0,0.3,1",
    ]));
    let r = rows(&first);
    let mut rhos: Vec<&str> = r.iter().map(|row| row[0].as_str()).collect();
    rhos.dedup();
    let ws: Vec<&str> = r[..3].iter().map(|row| row[1].as_str()).collect();
    let again = stdout(&run(&[
        "analytic",
        "--rho_grid",
        &rhos.join(","),
        "--w_grid",
        &ws.join(","),
    ]));
    assert_eq!(rows(&again), r);
}

#[test]
fn optimize_sweep() {
    let out = stdout(&run(&["optimize", "--w_grid", "0:1:101"]));
    let r = rows(&out);
    assert_eq!(r.len(), 101);
    assert_eq!(r[0][3], "boundary");
    assert_eq!(r[100][3], "boundary");
    let rho: Vec<f64> = r.iter().map(|row| row[1].parse().unwrap()).collect();
    assert!(rho.windows(2).all(|p| p[1] >= p[0]));
    assert_eq!(out, stdout(&run(&["optimize", "--w_grid", "0:1:101"])));
}

#[test]
fn simulate_rows_and_side_files() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("hist.csv");
    let trace = dir.path().join("trace.csv");
    let out = stdout(&run(&[
        "simulate",
        "--num_blocks",
        "100000",
        "--replications",
        "3",
        "--hist",
        hist.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]));
    let r = rows(&out);
    assert_eq!(r.len(), 4);
    assert_eq!(r[3][0], "all");
    assert_eq!(r[0][12], "nan");
    assert_ne!(r[3][12], "nan");
    let hist = std::fs::read_to_string(hist).unwrap();
    assert!(hist.contains("kind,j,count\n"));
    assert!(hist.contains("harvest_slot,"));
    let trace = std::fs::read_to_string(trace).unwrap();
    assert_eq!(
        trace.lines().filter(|l| !l.starts_with('#')).count(),
        100_001
    );
}

#[test]
fn time_split_simulation_reports_energy_share() {
    let out = stdout(&run(&[
        "simulate",
        "--scheme",
        "time_split",
        "--gen_prob",
        "0.01",
        "--num_blocks",
        "2000000",
    ]));
    let all = rows(&out).pop().unwrap();
    let fraction: f64 = all[8].parse().unwrap();
    assert!((fraction - 0.72).abs() < 0.01, "{fraction}");
}

#[test]
fn replay_reproduces_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.csv");
    let second = dir.path().join("b.csv");
    let cfg = dir.path().join("run.conf");
    std::fs::write(
        &cfg,
        "# short run\nnum_blocks = 50000\nreplications = 2\nseed = 42\n",
    )
    .unwrap();
    let status = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--distance",
        "1.2",
        "-o",
        first.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let replayed = run(&[
        "replay",
        first.to_str().unwrap(),
        "-o",
        second.to_str().unwrap(),
    ]);
    assert!(
        replayed.status.success(),
        "{}",
        String::from_utf8_lossy(&replayed.stderr)
    );
    let a = std::fs::read(&first).unwrap();
    assert_eq!(a, std::fs::read(&second).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.contains("# distance = 1.2\n"));
    assert!(text.contains("# seed = 42\n"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.conf");
    std::fs::write(&cfg, "harvest_eff = 0.9\npacket-nats = 50\n").unwrap();
    let out = stdout(&run(&[
        "analytic",
        "--config",
        cfg.to_str().unwrap(),
        "--harvest_eff",
        "0.3",
    ]));
    assert!(out.contains("# harvest_eff = 0.3\n"));
    assert!(out.contains("# packet_nats = 50\n"));
    let kebab = stdout(&run(&[
        "analytic",
        "--harvest-eff",
        "0.3",
        "--packet-nats",
        "50",
    ]));
    assert_eq!(out, kebab);
}

#[test]
fn exit_codes() {
    let bad = run(&["analytic", "--harvest_eff", "2"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("harvest_eff"));

    let unstable = run(&[
        "simulate",
        "--scheme",
        "time_split",
        "--gen_prob",
        "0.05",
        "--num_blocks",
        "1000",
    ]);
    assert_eq!(unstable.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unstable.stderr).contains("1/(1+theta)"));

    assert_eq!(
        run(&["analytic", "--no_such_flag", "1"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["analytic", "--rho_grid", "x"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(
        run(&["optimize", "--max_iters", "1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["analytic", "--config", "/nonexistent/c.conf"])
            .status
            .code(),
        Some(3)
    );
    let missing_dir = Path::new("/nonexistent/dir/out.csv");
    assert_eq!(
        run(&["analytic", "-o", missing_dir.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn replay_rejects_foreign_headers() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("x.csv");
    std::fs::write(&f, "# command = analytic\n# version = 0.0.0\n").unwrap();
    assert_eq!(run(&["replay", f.to_str().unwrap()]).status.code(), Some(1));
    std::fs::write(&f, "rho,w\n").unwrap();
    assert_eq!(run(&["replay", f.to_str().unwrap()]).status.code(), Some(1));
}
