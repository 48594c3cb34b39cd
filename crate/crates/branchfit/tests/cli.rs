use std::fs;
use std::path::Path;

use branchfit::cli::run;
use branchfit::{dataset, gridfile};

fn run_args(args: &[&str]) -> i32 {
    let mut v = vec!["branchfit"];
    v.extend_from_slice(args);
    run(v)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_is_byte_identical_for_equal_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let code = run_args(&[
            "simulate", "--k", "20", "--theta", "0.07", "--seed", "11", "--n-data", "8", "--pop-cap", "500",
            "--threads", threads, "--out", p(out),
        ]);
        assert_eq!(code, 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let (ds, meta) = dataset::read(&a).unwrap();
    assert_eq!(ds.n_data(), 8);
    assert_eq!(meta.get("seed").map(String::as_str), Some("11"));
}

#[test]
fn sigma_table_is_byte_identical_for_equal_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let outs = [dir.path().join("g1.txt"), dir.path().join("g2.txt")];
    for (out, threads) in outs.iter().zip(["1", "2"]) {
        let code = run_args(&[
            "sigma-table", "--mesh", "20", "--seed", "4", "--mc-per-node", "2000", "--mc-zeta", "2000",
            "--age-nodes", "16", "--threads", threads, "--quiet", "--out", p(out),
        ]);
        assert_eq!(code, 0);
    }
    assert_eq!(fs::read(&outs[0]).unwrap(), fs::read(&outs[1]).unwrap());
    let g = gridfile::load(&outs[0]).unwrap();
    assert_eq!(g.k_values.first().copied(), Some(1.0));
}

#[test]
fn config_file_sits_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.conf");
    let out = dir.path().join("d.txt");
    fs::write(&cfg, format!("# test\nk = 2\ntheta = 0.5\nn-data = 3\nseed = 9\nout = {}\n", p(&out))).unwrap();
    assert_eq!(run_args(&["simulate", "--config", p(&cfg), "--n-data", "2", "--n-grid", "40"]), 0);
    let (ds, meta) = dataset::read(&out).unwrap();
    assert_eq!(ds.n_data(), 2);
    assert_eq!(ds.n_times(), 41);
    assert_eq!(meta.get("k").map(String::as_str), Some("2.0"));

    fs::write(&cfg, "k = 2\nbogus = 1\n").unwrap();
    assert_eq!(run_args(&["simulate", "--config", p(&cfg), "--theta", "1", "--out", p(&out)]), 2);
}

#[test]
fn single_trajectory_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("one.txt");
    let out = dir.path().join("rep");
    assert_eq!(
        run_args(&["simulate", "--k", "80", "--theta", "0.0175", "--seed", "2", "--n-data", "1", "--pop-cap", "3000", "--out", p(&ds)]),
        0
    );
    let (data, _) = dataset::read(&ds).unwrap();
    assert_eq!(data.n_data(), 1);
    assert!(data.counts[0][0] == 1.0);
    // Variance-based steps need at least two rows.
    assert_eq!(run_args(&["infer", "--dataset", p(&ds), "--out", p(&out)]), 2);
}

#[test]
fn gaussian_data_without_grid_exits_with_input_code() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("g.txt");
    let out = dir.path().join("rep");
    assert_eq!(
        run_args(&["simulate", "--k", "1", "--theta", "1", "--seed", "1", "--n-data", "1000", "--pop-cap", "8000", "--out", p(&ds)]),
        0
    );
    assert_eq!(run_args(&["infer", "--dataset", p(&ds), "--out", p(&out)]), 2);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["pipeline"]["outcome"], "GridRequired");
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    assert_eq!(run_args(&["infer", "--dataset", p(&missing), "--out", p(dir.path())]), 4);
    assert_eq!(run_args(&["simulate", "--k=-1", "--theta", "1", "--out", p(&missing)]), 2);
    assert_eq!(run_args(&["no-such-command"]), 2);
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "branchfit-sigma-grid v1\nmesh=1\n").unwrap();
    let ds = dir.path().join("d.txt");
    assert_eq!(run_args(&["simulate", "--k", "1", "--theta", "1", "--n-data", "3", "--pop-cap", "200", "--out", p(&ds)]), 0);
    assert_eq!(run_args(&["infer", "--dataset", p(&ds), "--grid-file", p(&bad), "--out", p(dir.path())]), 2);
}
