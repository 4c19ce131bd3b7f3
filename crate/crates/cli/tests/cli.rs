//! End-to-end runs of the `kdv` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn kdv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kdv"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn read(dir: &Path, path: &str) -> String {
    fs::read_to_string(dir.join(path)).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const SOLITON: &str =
    "scheme=preissman\nn=49\ntau=0.02\nsteps=12\nic=soliton:0.5:0\nsnapshot-every=5\n";

#[test]
fn run_writes_the_three_outputs() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(dir, "run.conf", SOLITON);
    let out = kdv(dir, &["run", "--config", "run.conf"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let snapshots = read(dir, "out/snapshots.csv");
    assert!(snapshots.starts_with("t,x,u\n"));
    // levels 0, 5, 10 and the last one, 12
    let times: Vec<String> = rows(&snapshots)
        .iter()
        .step_by(49)
        .map(|r| r[0].clone())
        .collect();
    assert_eq!(rows(&snapshots).len(), 4 * 49);
    assert_eq!(times.len(), 4);
    assert_eq!(times[0], "0.0");
    assert_eq!(
        rows(&snapshots)[1][1].parse::<f64>().unwrap(),
        -15.0 + 30.0 / 49.0
    );

    let diagnostics = read(dir, "out/diagnostics.csv");
    assert!(
        diagnostics.starts_with("step,t,mass,linf_vs_oracle,l2_vs_oracle,iterations,residual\n")
    );
    let records = rows(&diagnostics);
    assert_eq!(records.len(), 13);
    let m0: f64 = records[0][2].parse().unwrap();
    for (k, r) in records.iter().enumerate() {
        assert_eq!(r[0], k.to_string());
        assert!((r[2].parse::<f64>().unwrap() - m0).abs() < 1e-12);
        assert!(r[3].parse::<f64>().unwrap() < 0.05);
    }
    assert!(!diagnostics.contains('\r'));

    let manifest = read(dir, "out/manifest.txt");
    for line in [
        "scheme=preissman",
        "tol=1e-12",
        "anchor=1:0.0",
        "variant=exact",
        "status=completed",
        "steps-completed=12",
    ] {
        assert!(
            manifest.lines().any(|l| l == line),
            "{line} missing from\n{manifest}"
        );
    }
    assert!(manifest.lines().any(|l| l.starts_with("wall-time-s=")));
}

#[test]
fn flags_override_the_file() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(
        dir,
        "run.conf",
        "scheme=eight\nn=20\ntau=0.01\nsteps=3\nic=zero\n",
    );
    let out = kdv(
        dir,
        &[
            "run",
            "--config",
            "run.conf",
            "--tau=0.001",
            "--out",
            "fast",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(read(dir, "fast/manifest.txt")
        .lines()
        .any(|l| l == "tau=0.001"));
    let last = rows(&read(dir, "fast/diagnostics.csv")).pop().unwrap();
    assert_eq!(last[1], "0.003");
}

#[test]
fn invalid_configurations_exit_with_three() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let cases = [
        ("scheme=pq\nn=100\ntau=0.01\nsteps=5\nic=zero\n", "even n"),
        (
            "scheme=eight\nn=20\ntau=0.01\nsteps=5\nic=zero\ncolor=red\n",
            "run.conf:6",
        ),
        ("scheme=eight\nn=2O\ntau=0.01\nsteps=5\nic=zero\n", "\"2O\""),
        ("scheme=eight\nn=20\nsteps=5\nic=zero\n", "\"tau\""),
        (
            "scheme=eight\nn=20\ntau=0.01\nsteps=5\nic=zero\ncompare-with=twelve\n",
            "compare",
        ),
    ];
    for (text, hint) in cases {
        write(dir, "run.conf", text);
        let out = kdv(dir, &["run", "--config", "run.conf"]);
        assert_eq!(code(&out), 3, "{text}");
        assert!(stderr(&out).contains(hint), "{hint}: {}", stderr(&out));
    }
    assert_eq!(code(&kdv(dir, &["run", "--bogus"])), 3);
    assert_eq!(
        code(&kdv(
            dir,
            &["compare", "--config", "run.conf", "--compare-with", "zk-2"]
        )),
        3
    );
    assert_eq!(code(&kdv(dir, &["--help"])), 0);
    assert!(!dir.join("out").exists());
}

#[test]
fn zero_data_gives_zero_snapshots_for_every_scheme() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let schemes = [
        "preissman",
        "preissman-monolithic",
        "pq",
        "pq-explicit",
        "z",
        "z-explicit",
        "z-explicit-unstable",
        "eight",
        "eight-explicit",
        "twelve",
        "zk",
    ];
    for scheme in schemes {
        let out = kdv(
            dir,
            &[
                "run", "--scheme", scheme, "--n", "15", "--tau", "0.01", "--steps", "10", "--ic",
                "zero", "--out", scheme,
            ],
        );
        assert_eq!(code(&out), 0, "{scheme}: {}", stderr(&out));
        let snapshots = rows(&read(dir, &format!("{scheme}/snapshots.csv")));
        assert_eq!(snapshots.len(), 2 * 15);
        assert!(snapshots.iter().all(|r| r[2] == "0.0"), "{scheme}");
        // no oracle for zero data
        assert!(rows(&read(dir, &format!("{scheme}/diagnostics.csv")))
            .iter()
            .all(|r| r[3].is_empty() && r[4].is_empty()));
    }
}

#[test]
fn unstable_scheme_blows_up_with_a_marker() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(dir, "run.conf", "scheme=z-explicit-unstable\nn=99\ntau=1e-3\nsteps=20000\nic=soliton:2:0\nsnapshot-every=1000\n");
    let out = kdv(dir, &["run", "--config", "run.conf"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    for file in ["out/snapshots.csv", "out/diagnostics.csv"] {
        let text = read(dir, file);
        let last = text.lines().last().unwrap();
        assert!(
            last.starts_with("# truncated: solution blew up at step "),
            "{last}"
        );
    }
    let manifest = read(dir, "out/manifest.txt");
    assert!(manifest.lines().any(|l| l == "status=blowup"));
    let completed: usize = manifest
        .lines()
        .find_map(|l| l.strip_prefix("steps-completed="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(completed < 20000);
    assert_eq!(rows(&read(dir, "out/diagnostics.csv")).len(), completed + 1);
}

#[test]
fn divergent_iteration_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let out = kdv(
        dir,
        &[
            "run",
            "--scheme",
            "preissman",
            "--n",
            "49",
            "--tau",
            "0.02",
            "--steps",
            "5",
            "--ic",
            "soliton:0.5:0",
            "--max-iter",
            "2",
        ],
    );
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(read(dir, "out/diagnostics.csv")
        .lines()
        .last()
        .unwrap()
        .starts_with("# truncated: "));
    assert!(read(dir, "out/manifest.txt")
        .lines()
        .any(|l| l == "status=diverged"));
}

#[test]
fn preissman_and_eight_point_agree_step_by_step() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(
        dir,
        "run.conf",
        "scheme=preissman\nn=99\ntau=0.0303\nsteps=100\nic=soliton:0.5:0\n",
    );
    let out = kdv(
        dir,
        &["compare", "--config", "run.conf", "--compare-with", "eight"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = read(dir, "out/compare.csv");
    assert!(table.starts_with("step,t,linf,l2\n"));
    let gaps = rows(&table);
    assert_eq!(gaps.len(), 101);
    assert!(gaps.iter().all(|r| r[2].parse::<f64>().unwrap() <= 1e-9));
}

#[test]
fn identical_configurations_give_identical_bytes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(
        dir,
        "run.conf",
        "scheme=twelve\nn=64\ntau=0.01\nsteps=40\nic=two-soliton:1:-6:0.5:4\n",
    );
    for out in ["a", "b"] {
        assert_eq!(
            code(&kdv(dir, &["run", "--config", "run.conf", "--out", out])),
            0
        );
    }
    for file in ["snapshots.csv", "diagnostics.csv"] {
        assert_eq!(
            fs::read(dir.join("a").join(file)).unwrap(),
            fs::read(dir.join("b").join(file)).unwrap()
        );
    }
}

#[test]
fn the_manifest_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(
        dir,
        "u0.txt",
        &(0..25)
            .map(|i| format!("{}\n", (i as f64 * 0.3).sin() * 0.2))
            .collect::<String>(),
    );
    let args = [
        "run",
        "--scheme",
        "pq",
        "--n",
        "25",
        "--tau",
        "0.0123",
        "--steps",
        "17",
        "--ic",
        "file:u0.txt",
        "--eta",
        "1",
        "--delta",
        "0.5",
        "--xmin",
        "-3",
        "--xmax",
        "4.5",
        "--anchor",
        "4:-2",
        "--snapshot-every",
        "4",
        "--out",
        "first",
    ];
    assert_eq!(code(&kdv(dir, &args)), 0);
    let out = kdv(
        dir,
        &["run", "--config", "first/manifest.txt", "--out", "second"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for file in ["snapshots.csv", "diagnostics.csv"] {
        assert_eq!(
            read(dir, &format!("first/{file}")),
            read(dir, &format!("second/{file}"))
        );
    }
    let strip = |text: String| -> Vec<String> {
        text.lines()
            .filter(|l| !l.starts_with("wall-time-s=") && !l.starts_with("out="))
            .map(str::to_string)
            .collect()
    };
    assert_eq!(
        strip(read(dir, "first/manifest.txt")),
        strip(read(dir, "second/manifest.txt"))
    );
}

#[test]
fn sweep_runs_each_file_and_reports_the_worst_status() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(dir, "a.conf", &format!("{SOLITON}out=a\n"));
    write(
        dir,
        "b.conf",
        "scheme=eight\nn=40\ntau=0.01\nsteps=10\nic=cosine\nout=b\n",
    );
    write(
        dir,
        "c.conf",
        "scheme=pq\nn=49\ntau=0.02\nsteps=5\nic=soliton:0.5:0\nmax-iter=2\nout=c\n",
    );
    let out = kdv(dir, &["sweep", "a.conf", "b.conf"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.join("a/snapshots.csv").exists() && dir.join("b/snapshots.csv").exists());
    // the sweep result matches a standalone run
    assert_eq!(
        code(&kdv(dir, &["run", "--config", "a.conf", "--out", "solo"])),
        0
    );
    assert_eq!(
        read(dir, "a/diagnostics.csv"),
        read(dir, "solo/diagnostics.csv")
    );

    assert_eq!(code(&kdv(dir, &["sweep", "a.conf", "c.conf", "b.conf"])), 2);
    write(dir, "d.conf", &format!("{SOLITON}out=a\n"));
    let clash = kdv(dir, &["sweep", "a.conf", "d.conf"]);
    assert_eq!(code(&clash), 3);
    assert!(stderr(&clash).contains("same output directory"));
}
