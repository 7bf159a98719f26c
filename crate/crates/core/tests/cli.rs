use std::path::Path;
use std::process::{Command, Output};

use relay_eh::model::{throughput, SystemParams};
use relay_eh::report::solve_reference;

fn relay_eh(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_relay-eh"));
    cmd.args(args).env_remove("RELAY_EH_THREADS");
    if let Some(t) = threads {
        cmd.env("RELAY_EH_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const WORKED_INSTANCE: [&str; 13] = [
    "--n", "2", "--gamma1", "2", "--gamma2", "1", "--beta", "0.4", "--p10", "1", "--p20", "1",
    "--b",
];

#[test]
fn solve_reports_regime_and_throughput() {
    let mut args = vec!["solve"];
    args.extend(WORKED_INSTANCE);
    args.extend(["1", "--alg", "opt"]);
    let o = relay_eh(&args, None);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("regime      LowProductCase1"));
    assert!(text.contains("throughput  0.816288046828"));
    assert!(text.contains("slack1"));
    assert!(text.contains("check P3"));
}

#[test]
fn solve_json_and_relay_only_without_harvest() {
    let o = relay_eh(
        &[
            "solve", "--n", "1", "--gamma1", "1", "--gamma2", "1", "--beta", "0", "--p10", "1",
            "--p20", "1", "--alg", "rno", "--format", "json",
        ],
        None,
    );
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["throughput"].as_f64().unwrap(), 0.0);
    assert_eq!(v["algorithm"], "rno");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&relay_eh(&["solve", "--n", "two"], None)), 1);
    assert_eq!(
        code(&relay_eh(
            &[
                "solve", "--n", "1", "--gamma1", "-1", "--gamma2", "1", "--beta", "0", "--p10",
                "1", "--p20", "1"
            ],
            None
        )),
        1
    );
    assert_eq!(code(&relay_eh(&["frobnicate"], None)), 1);
    assert_eq!(
        code(&relay_eh(
            &["sweep", "--axis", "beta", "--values", ""],
            None
        )),
        1
    );
    assert_eq!(
        code(&relay_eh(
            &["sweep", "--axis", "beta", "--values", "0.5,0.2"],
            None
        )),
        1
    );
    assert_eq!(
        code(&relay_eh(
            &["sweep", "--axis", "warp", "--values", "1"],
            None
        )),
        1
    );
    assert_eq!(
        code(&relay_eh(
            &[
                "sweep",
                "--axis",
                "beta",
                "--values",
                "0,1",
                "--csv",
                "/nonexistent-dir/out.csv"
            ],
            None
        )),
        1
    );
    assert_eq!(code(&relay_eh(&["validate", "--n-max", "4"], None)), 1);
    assert_eq!(code(&relay_eh(&["validate", "--trials", "0"], None)), 1);
    assert_eq!(code(&relay_eh(&["--help"], None)), 0);
}

#[test]
fn injected_fault_is_named() {
    let o = relay_eh(
        &[
            "validate",
            "--seed",
            "42",
            "--trials",
            "1",
            "--inject-fault",
        ],
        None,
    );
    assert_eq!(code(&o), 3);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text
        .lines()
        .last()
        .unwrap()
        .starts_with("result: FAIL (agreement"));
}

fn sweep_csv(dir: &Path, name: &str, threads: Option<&str>) -> Vec<u8> {
    let path = dir.join(name);
    let o = relay_eh(
        &[
            "sweep",
            "--axis",
            "beta",
            "--values",
            "0:0.1:0.9",
            "--n",
            "1,2,4",
            "--gamma1",
            "1,2",
            "--algs",
            "opt,sno,rno",
            "--csv",
            path.to_str().unwrap(),
        ],
        threads,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read(path).unwrap()
}

#[test]
fn sweep_csv_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = sweep_csv(dir.path(), "a.csv", Some("0"));
    let b = sweep_csv(dir.path(), "b.csv", Some("4"));
    let c = sweep_csv(dir.path(), "c.csv", None);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert!(!a.contains(&b'\r'));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.conf");
    std::fs::write(
        &cfg,
        "# unit parameters\naxis = n_phases\nvalues = 1,2,4,8\nbeta = 0.9\nalgs = opt, sno\n",
    )
    .unwrap();
    let o = relay_eh(
        &[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--beta",
            "0.5",
            "--check-monotone",
        ],
        None,
    );
    assert_eq!(code(&o), 0);
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 8);
    for i in 0..4 {
        assert_eq!(&rows[i][1], "opt");
        assert_eq!(&rows[i + 4][1], "sno");
        let opt: f64 = rows[i][2].parse().unwrap();
        let sno: f64 = rows[i + 4][2].parse().unwrap();
        assert!(opt >= sno - 1e-9);
    }
}

#[test]
fn csv_rows_round_trip_through_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("chart.svg");
    let o = relay_eh(
        &[
            "sweep",
            "--axis",
            "initial1",
            "--values",
            "0.25,0.5,1,2",
            "--n",
            "3",
            "--beta",
            "0.3",
            "--gamma1",
            "1.5",
            "--algs",
            "ref",
            "--svg",
            svg.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code(&o), 0);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<polyline"));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["axis", "algorithm", "throughput", "regime", "status", "ms"]
    );
    for row in rdr.records() {
        let row = row.unwrap();
        let x: f64 = row[0].parse().unwrap();
        let c: f64 = row[2].parse().unwrap();
        let p = SystemParams::new(1.0, 3, 1.5, 1.0, 0.3, x, 1.0).unwrap();
        let r = solve_reference(&p).unwrap();
        assert!((throughput(&p, &r.schedule).unwrap() - c).abs() <= 1e-9);
        assert_eq!(&row[4], "converged");
        assert_eq!(&row[5], "");
    }
}

#[test]
fn timing_fills_the_ms_column() {
    let o = relay_eh(
        &["sweep", "--axis", "beta", "--values", "0,0.5", "--timing"],
        None,
    );
    assert_eq!(code(&o), 0);
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    for row in rdr.records() {
        assert!(row.unwrap()[5].parse::<f64>().unwrap() >= 0.0);
    }
}
