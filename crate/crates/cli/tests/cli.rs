use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
ports = [0, 1]

[network]
kind = "random"
seed = 3
generators = 4
loads = 5

[fault]
alpha = 1
delta0 = [1.0, 0.5]
"#;

fn retrofit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retrofit"))
        .args(args)
        .current_dir(dir)
        .env("RETROFIT_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), config).unwrap();
    dir
}

#[test]
fn design_prints_certificate_keys() {
    let dir = workspace(SMALL);
    let o = retrofit(&["design", "--config", "exp.toml", "--out", "res"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cert = std::fs::read_to_string(dir.path().join("res/certificate.toml")).unwrap();
    let keys: Vec<&str> = cert.lines().map(|l| l.split(" = ").next().unwrap()).collect();
    assert_eq!(keys, ["epsilon", "gamma_K", "gamma1", "gamma2", "gamma3", "delta1", "delta2", "q0"]);
    assert!(stdout(&o).contains(&cert));
}

#[test]
fn simulate_writes_trajectories() {
    let dir = workspace(SMALL);
    let o = retrofit(&["simulate", "--config", "exp.toml", "--out", "res"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("res/retrofit.csv")).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    // 9 appliances, 4 generators, ports 1 and 2
    assert_eq!(header.len(), 1 + 9 + 9 + 4 + 2);
    assert_eq!(header[0], "t");
    assert_eq!(header[1], "theta_1");
    assert_eq!(header[10], "omega_1");
    assert_eq!(header[19], "v_1");
    assert_eq!(&header[23..], ["vhat_1", "vhat_2"]);
    let second: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!((second[2], second[11]), ("1", "0.5"));

    let summary = std::fs::read_to_string(dir.path().join("res/summary.csv")).unwrap();
    let omega = |run: &str| -> f64 {
        let line = summary.lines().find(|l| l.starts_with(run)).unwrap();
        line.split(',').nth(2).unwrap().parse().unwrap()
    };
    assert!(omega("retrofit") < omega("broadcast"));
}

#[test]
fn commands_are_deterministic() {
    let dir = workspace(SMALL);
    let args = ["sweep", "--config", "exp.toml", "--rank-grid", "16-18"];
    let (a, b) = (retrofit(&args, dir.path()), retrofit(&args, dir.path()));
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(stdout(&a).lines().count(), 4);

    let seeded = |s: &str| stdout(&retrofit(&["design", "--config", "exp.toml", "--seed", s], dir.path()));
    assert_eq!(seeded("9"), seeded("9"));
    assert_ne!(seeded("9"), seeded("10"));
}

#[test]
fn schema_errors_are_line_anchored() {
    let dir = workspace(&SMALL.replace("alpha = 1", "alpha = 1\nbeta = 2"));
    let o = retrofit(&["design", "--config", "exp.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("exp.toml:12:1"), "{}", stderr(&o));

    let o = retrofit(&["sweep", "--config", "exp.toml", "--rank-grid", "0"], workspace(SMALL).path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn network_file_errors_are_line_anchored() {
    let dir = workspace("[network]\nkind = \"file\"\npath = \"grid.toml\"\n");
    std::fs::write(
        dir.path().join("grid.toml"),
        "[[appliances]]\nid = \"g\"\nkind = \"generator\"\nm = 1.0\nd = -0.1\n",
    )
    .unwrap();
    let o = retrofit(&["design", "--config", "exp.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("grid.toml:5:5"), "{}", stderr(&o));
}

#[test]
fn unstable_preexisting_loop_is_numerical_failure() {
    let dir = workspace(&format!("kappa = -5.0\n{SMALL}"));
    let o = retrofit(&["simulate", "--config", "exp.toml"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn verify_passes_on_small_experiment() {
    let dir = workspace(SMALL);
    let o = retrofit(&["verify", "--config", "exp.toml", "--trials", "4", "--seed", "5"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).lines().all(|l| l.contains(": PASS")));
}
