use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ade_core::{AdeParams, AdeStructure, Points};
use tempfile::TempDir;

fn ade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ade"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ade(args);
    assert!(
        out.status.success(),
        "ade {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &TempDir, name: &str, contents: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const DATA: &str = "a,b,c,d\n1,2,3,4\n0.5,-1,0,2\n-3,0.25,1,1\n";

#[test]
fn build_reports_resolved_sizes() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "x.csv", DATA);
    let out = dir.path().join("s.ades");
    let stdout = ok(&[
        "build",
        "--data",
        s(&data),
        "--epsilon",
        "0.5",
        "--delta",
        "0.1",
        "--out",
        s(&out),
    ]);
    assert!(
        stdout.contains("m=160") && stdout.contains("l=7"),
        "{stdout}"
    );
    let structure = AdeStructure::load(&out).unwrap();
    assert_eq!(
        (
            structure.sizes().m,
            structure.sizes().l,
            structure.n(),
            structure.d()
        ),
        (160, 7, 3, 4)
    );
}

#[test]
fn non_finite_rows_are_ingestion_errors() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "x.csv", "1,2\n3,inf\n");
    let out = ade(&[
        "build",
        "--data",
        s(&data),
        "--out",
        s(&dir.path().join("s.ades")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2"), "{err}");
    assert!(!dir.path().join("s.ades").exists());
}

#[test]
fn capacity_errors_have_their_own_exit_code() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "x.csv", DATA);
    let out = ade(&[
        "build",
        "--data",
        s(&data),
        "--epsilon",
        "0.01",
        "--memory-cap-mib",
        "1",
        "--out",
        s(&dir.path().join("s.ades")),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "x.csv", DATA);
    let queries = write(&dir, "q.csv", "0,0,0,0\n1,1,1,1\n");
    let mut files = Vec::new();
    // same paths both times: the output header embeds the resolved config
    let st = dir.path().join("s.ades");
    let est = dir.path().join("e.csv");
    for _ in 0..2 {
        ok(&[
            "build",
            "--data",
            s(&data),
            "--p",
            "1",
            "--epsilon",
            "0.5",
            "--seed",
            "9",
            "--out",
            s(&st),
        ]);
        ok(&[
            "query",
            "--structure",
            s(&st),
            "--queries",
            s(&queries),
            "--seed",
            "4",
            "--out",
            s(&est),
        ]);
        files.push((fs::read(&st).unwrap(), fs::read(&est).unwrap()));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn queries_embed_their_config_and_sampled_indices() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "x.csv", DATA);
    let st = dir.path().join("s.ades");
    ok(&[
        "build",
        "--data",
        s(&data),
        "--epsilon",
        "0.5",
        "--out",
        s(&st),
    ]);

    let queries = write(&dir, "q.csv", "1,2,3,4\n");
    let est = dir.path().join("e.csv");
    ok(&[
        "query",
        "--structure",
        s(&st),
        "--queries",
        s(&queries),
        "--seed",
        "17",
        "--out",
        s(&est),
    ]);
    let text = fs::read_to_string(&est).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# ade "), "{text}");
    assert!(lines.iter().any(|l| l.starts_with("# config: {")), "{text}");
    assert!(lines.contains(&"# seed: 17"), "{text}");
    assert!(lines.contains(&"point_index,estimate"));
    let sampled = lines
        .iter()
        .find(|l| l.starts_with("# query 0 sampled_indices "))
        .unwrap();
    assert_eq!(sampled.split_whitespace().count() - 4, 13);
    assert!(lines.contains(&"0,0"), "{text}");

    let empty = write(&dir, "none.csv", "");
    let est0 = dir.path().join("e0.csv");
    ok(&[
        "query",
        "--structure",
        s(&st),
        "--queries",
        s(&empty),
        "--out",
        s(&est0),
    ]);
    let text0 = fs::read_to_string(&est0).unwrap();
    assert!(
        text0
            .lines()
            .all(|l| l.starts_with('#') || l == "point_index,estimate"),
        "{text0}"
    );
}

#[test]
fn verify_checks_against_brute_force_distances() {
    let dir = TempDir::new().unwrap();
    let rows: Vec<String> = (0..20)
        .map(|i| {
            (0..6)
                .map(|k| format!("{}", ((i * 7 + k * 3) % 11) as f64 - 5.0))
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    let data = write(&dir, "x.csv", &(rows.join("\n") + "\n"));
    let queries = write(&dir, "q.csv", "0.5,1,-2,3,0,1\n-1,-1,4,0.5,2,2\n");
    for p in ["1", "2"] {
        let st = dir.path().join(format!("s{p}.ades"));
        ok(&[
            "build",
            "--data",
            s(&data),
            "--p",
            p,
            "--epsilon",
            "0.25",
            "--out",
            s(&st),
        ]);
        for seed in ["1", "2"] {
            let est = dir.path().join(format!("e{p}_{seed}.csv"));
            ok(&[
                "query",
                "--structure",
                s(&st),
                "--queries",
                s(&queries),
                "--seed",
                seed,
                "--verify",
                "--data",
                s(&data),
                "--out",
                s(&est),
            ]);
        }
        assert_ne!(
            fs::read_to_string(dir.path().join(format!("e{p}_1.csv"))).unwrap(),
            fs::read_to_string(dir.path().join(format!("e{p}_2.csv"))).unwrap()
        );
    }

    // a structure built on other data is far off and must be flagged
    let other = write(
        &dir,
        "y.csv",
        &rows
            .iter()
            .map(|r| format!("{r}\n"))
            .collect::<String>()
            .replace('5', "9"),
    );
    let st = dir.path().join("other.ades");
    ok(&[
        "build",
        "--data",
        s(&other),
        "--epsilon",
        "0.25",
        "--out",
        s(&st),
    ]);
    let out = ade(&[
        "query",
        "--structure",
        s(&st),
        "--queries",
        s(&queries),
        "--verify",
        "--data",
        s(&data),
        "--out",
        s(&dir.path().join("bad.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("violation"));
}

#[test]
fn audit_of_an_identity_embedding_counts_every_direction() {
    let dir = TempDir::new().unwrap();
    let points = Points::new(4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    // c_m = 1 at epsilon = 0.5 gives m = 4 = d
    let params = AdeParams::new(2.0, 0.5, 0.1, 1)
        .with_constants(1.0, 1.0, 3.0)
        .with_max_sketches(1);
    let mut structure = AdeStructure::build(&points, params).unwrap();
    let entries = structure.matrices_mut()[0].entries_mut();
    entries.fill(0.0);
    for i in 0..4 {
        entries[i * 4 + i] = 1.0;
    }
    let path = dir.path().join("id.ades");
    structure.save(&path).unwrap();

    let report = dir.path().join("audit.csv");
    let stdout = ok(&[
        "audit",
        "--structure",
        s(&path),
        "--directions",
        "50",
        "--out",
        s(&report),
    ]);
    assert!(stdout.contains("l=1 min=1"), "{stdout}");
    let text = fs::read_to_string(&report).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("direction"))
        .collect();
    assert_eq!(rows.len(), 50);
    assert!(rows.iter().all(|r| r.ends_with(",1,1")), "{text}");
}

#[test]
fn audit_flags_a_corrupted_structure() {
    let dir = TempDir::new().unwrap();
    let rows: String = (0..10)
        .map(|i| format!("{i},1,{},0,2,-1,3,0.5\n", i % 3))
        .collect();
    let data = write(&dir, "x.csv", &rows);
    let st = dir.path().join("s.ades");
    ok(&[
        "build",
        "--data",
        s(&data),
        "--epsilon",
        "0.25",
        "--out",
        s(&st),
    ]);
    ok(&["audit", "--structure", s(&st)]);

    let mut structure = AdeStructure::load(&st).unwrap();
    let l = structure.sizes().l;
    for mat in structure.matrices_mut().iter_mut().take(l.div_ceil(2)) {
        mat.entries_mut().fill(0.0);
    }
    structure.save(&st).unwrap();
    let out = ade(&["audit", "--structure", s(&st)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn attack_against_exact_distances_stays_at_one() {
    let dir = TempDir::new().unwrap();
    let stdout = ok(&[
        "attack",
        "--oracle",
        "exact",
        "--d",
        "200",
        "--rounds",
        "300",
        "--eval-every",
        "100",
        "--reps",
        "2",
        "--out",
        s(dir.path()),
    ]);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(stdout, summary);
    let data: Vec<&str> = summary.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "round,adaptive_median_ratio,random_median_ratio");
    assert_eq!(&data[1..], ["100,1,1", "200,1,1", "300,1,1"]);
    for rep in 0..2 {
        for mode in ["adaptive", "random"] {
            let trace =
                fs::read_to_string(dir.path().join(format!("{mode}_rep{rep}.csv"))).unwrap();
            assert!(trace
                .lines()
                .any(|l| l == "round,w,acc_norm_true,acc_norm_reported,ratio"));
        }
    }
}

#[test]
fn smallest_bench_cell_is_fast() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bench.csv");
    ok(&[
        "bench",
        "--n",
        "1000",
        "--d",
        "16",
        "--queries",
        "3",
        "--out",
        s(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let row = text.lines().find(|l| l.starts_with("1000,16,")).unwrap();
    let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
    assert!(cols[5] + 3.0 * cols[6] < 1000.0, "{row}");
}

#[test]
fn binary_datasets_are_accepted() {
    let dir = TempDir::new().unwrap();
    let bytes = ade_cli::dataset::encode_binary(
        &Points::new(3, vec![1.0, 0.0, 2.0, -1.0, 4.0, 0.5]).unwrap(),
    );
    let path = dir.path().join("x.adev");
    fs::write(&path, bytes).unwrap();
    let st = dir.path().join("s.ades");
    let stdout = ok(&[
        "build",
        "--data",
        s(&path),
        "--epsilon",
        "0.5",
        "--out",
        s(&st),
    ]);
    assert!(stdout.contains("n=2 d=3"), "{stdout}");
}
