use std::path::Path;
use std::process::{Command, Output};

fn cogmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cogmap"))
        .args(args)
        .output()
        .unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = cogmap(&[
        "run",
        "--preset",
        "square",
        "--laps",
        "2",
        "--seed",
        "4",
        "--out",
        arg(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for f in ["map.graph", "metrics.csv", "events.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("compact-full"));
}

#[test]
fn replay_matches_simulation_and_compare_to_self_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(
        cogmap(&["run", "--preset", "irat-maze-like", "--out", arg(&a)])
            .status
            .success()
    );
    let events = a.join("events.txt");
    assert!(cogmap(&["run", "--in", arg(&events), "--out", arg(&b)])
        .status
        .success());
    assert_eq!(
        std::fs::read(a.join("map.graph")).unwrap(),
        std::fs::read(b.join("map.graph")).unwrap()
    );

    let o = cogmap(&["compare", arg(&a), arg(&b)]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    for line in table.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!((cols[3], cols[6]), ("1", "1"), "{line}");
    }
}

#[test]
fn standard_run_has_more_vertices() {
    let dir = tempfile::tempdir().unwrap();
    let (s, c) = (dir.path().join("s"), dir.path().join("c"));
    assert!(
        cogmap(&["run", "--mode", "standard", "--laps", "2", "--out", arg(&s)])
            .status
            .success()
    );
    assert!(cogmap(&["run", "--laps", "2", "--out", arg(&c)])
        .status
        .success());
    let o = cogmap(&["compare", arg(&s.join("metrics.csv")), arg(&c)]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    let last: Vec<&str> = table.lines().last().unwrap().split(',').collect();
    assert!(last[3].parse::<f64>().unwrap() > 1.0);
}

#[test]
fn simulate_writes_parseable_events() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("ev.txt");
    assert!(cogmap(&[
        "simulate",
        "--preset",
        "square",
        "--laps",
        "1",
        "--noiseless",
        "--out",
        arg(&f)
    ])
    .status
    .success());
    let text = std::fs::read_to_string(&f).unwrap();
    assert!(text
        .lines()
        .all(|l| l.starts_with("ODOM ") || l.starts_with("LOOP ")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(cogmap(&["run", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        cogmap(&["run", "--mode", "fast", "--out", arg(&out)])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        cogmap(&["run", "--delta", "-1", "--out", arg(&out)])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(cogmap(&["--help"]).status.code(), Some(0));

    let missing = dir.path().join("missing.txt");
    assert_eq!(
        cogmap(&["run", "--in", arg(&missing), "--out", arg(&out)])
            .status
            .code(),
        Some(2)
    );

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "ODOM 2 1 0 0\nODOM 1 1 0 0\n").unwrap();
    let o = cogmap(&["run", "--in", arg(&bad), "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    std::fs::write(
        &a,
        "stamp,vertex_count,edge_count,optimize_calls,final_cost\n1,1,0,0,0\n",
    )
    .unwrap();
    std::fs::write(
        &b,
        "stamp,vertex_count,edge_count,optimize_calls,final_cost\n2,1,0,0,0\n",
    )
    .unwrap();
    assert_eq!(
        cogmap(&["compare", arg(&a), arg(&b)]).status.code(),
        Some(2)
    );
}
