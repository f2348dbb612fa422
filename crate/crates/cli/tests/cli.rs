use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sle_lab::records::{ResultFile, Rows};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sle-lab"));
    c.env_remove("SLE_LAB_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn xi_three_three_with_surd_label() {
    let o = run(&["exponents", "--xi", "3", "3"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("4.659332709"), "{out}");
    assert!(out.contains("(73\u{2212}2\u{221a}73)/12"), "{out}");
}

#[test]
fn xi_tilde_one_one() {
    let o = run(&["exponents", "--xi-tilde", "1,1"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("3.33333333333333"));
    assert!(stdout(&o).contains("10/3"));
}

#[test]
fn lambda_line() {
    let o = run(&["exponents", "--kappa", "6", "--w1", "1", "--w2", "2"]);
    assert!(stdout(&o).contains("9.33333333333333"), "{}", stdout(&o));
}

#[test]
fn eigen_check_passes() {
    let o = run(&["eigen-check", "--kappa", "6", "--w1", "1", "--w2", "1", "--check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("residual"));
}

#[test]
fn bad_arguments_exit_two() {
    assert_eq!(run(&["exponents"]).status.code(), Some(2));
    assert_eq!(run(&["sim-diffusion", "--x0", "1.5", "--samples", "10"]).status.code(), Some(2));
    assert_eq!(run(&["sim-loewner", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["walkers", "--radii", "8,12"]).status.code(), Some(2));
    assert_eq!(run(&["exponents", "--xi", "0.5", "0.5"]).status.code(), Some(2));
    let o = bin().args(["sim-diffusion", "--samples", "10"]).env("SLE_LAB_THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn extinction_exits_three() {
    let o = run(&["walkers", "--packs", "3,3,3", "--radii", "16,32", "--population", "100"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("extinct"), "{}", stderr(&o));
}

#[test]
fn result_file_embeds_config_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("nested/a.csv");
    let b = dir.path().join("b.csv");
    let args = |p: &Path| {
        let mut v: Vec<String> =
            ["sim-diffusion", "--samples", "3000", "--s-grid", "0.5,1", "--seed", "5", "--workers", "2", "--out"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        v.push(path_str(p).to_string());
        v
    };
    assert!(bin().args(args(&a)).status().unwrap().success());
    assert!(bin().args(args(&b)).status().unwrap().success());
    let (fa, fb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fa, fb);
    let text = String::from_utf8(fa).unwrap();
    assert!(text.starts_with("# config: {"));
    let parsed = ResultFile::parse(&text).unwrap();
    assert_eq!(parsed.config["seed"], 5);
    assert_eq!(parsed.config["workers"], 2);
    assert_eq!(parsed.config["command"], "sim-diffusion");
    match parsed.rows {
        Rows::Estimates(r) => assert_eq!(r.len(), 4),
        Rows::Walkers(_) => panic!("wrong table"),
    }
}

#[test]
fn worker_count_does_not_change_rows() {
    let rows = |threads: &str| {
        let o = bin()
            .args(["sim-loewner", "--samples", "3000", "--s", "0.5"])
            .env("SLE_LAB_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success());
        let text = stdout(&o);
        let f = ResultFile::parse(&text).unwrap();
        assert_eq!(f.config["workers"], threads.parse::<u64>().unwrap());
        text.lines().skip(1).map(str::to_owned).collect::<Vec<_>>()
    };
    assert_eq!(rows("1"), rows("3"));
}

#[test]
fn report_of_nothing_is_an_empty_table() {
    let o = run(&["report"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn report_rejects_bad_schema() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    fs::write(&p, "a,b,c\n1,2,3\n").unwrap();
    assert_eq!(run(&["report", path_str(&p)]).status.code(), Some(2));
    assert_eq!(run(&["report", "/nonexistent/file.csv"]).status.code(), Some(2));
}

#[test]
fn disjoint_seed_ranges_merge_like_one_run() {
    let dir = tempfile::tempdir().unwrap();
    let go = |seed: &str, n: &str, name: &str| {
        let p = dir.path().join(name);
        let o = run(&["sim-loewner", "--s", "0.5", "--samples", n, "--seed", seed, "--format", "json", "--out", path_str(&p)]);
        assert!(o.status.success(), "{}", stderr(&o));
        p
    };
    let a = go("0", "2048", "a.json");
    let b = go("2048", "2048", "b.json");
    let all = go("0", "4096", "all.json");
    let value = |paths: &[&Path]| {
        let mut args = vec!["report", "--format", "csv"];
        args.extend(paths.iter().map(|p| path_str(p)));
        let o = run(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let out = stdout(&o);
        let line = out.lines().find(|l| l.contains("s=0.5")).unwrap().to_string();
        line.split(',').nth(3).unwrap().parse::<f64>().unwrap()
    };
    let merged = value(&[&a, &b]);
    let single = value(&[&all]);
    assert!((merged - single).abs() <= 1e-12 * single.abs(), "{merged} vs {single}");
}

#[test]
fn check_violation_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    // h_G far below exp(-7) G(0.5) with a tiny error bar.
    fs::write(
        &p,
        "kappa,x0,w1,w2,s,mean,stderr,n,seed,method,observable\r\n6,0.5,1,1,1,1e-4,1e-7,1000,0,sde,hG\r\n",
    )
    .unwrap();
    assert_eq!(run(&["report", path_str(&p)]).status.code(), Some(0));
    let o = run(&["report", "--check", path_str(&p)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("check failed"));
}

#[test]
fn martingale_rows_pass_their_own_check() {
    let o = run(&["martingale-check", "--samples", "4000", "--check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let f = ResultFile::parse(&stdout(&o)).unwrap();
    assert_eq!(f.config["s"], 1.0);
}

#[test]
fn pde_writes_rows_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pde.csv");
    let grid = dir.path().join("grid.csv");
    let o = run(&[
        "solve-pde",
        "--initial",
        "g",
        "--nx",
        "201",
        "--ns",
        "400",
        "--s-grid",
        "0.5,1",
        "--out",
        path_str(&out),
        "--dump-grid",
        path_str(&grid),
        "--check",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("solve-pde:"));
    let f = ResultFile::parse(&fs::read_to_string(&out).unwrap()).unwrap();
    match f.rows {
        Rows::Estimates(r) => assert_eq!(r.len(), 2),
        Rows::Walkers(_) => panic!("wrong table"),
    }
    assert!(fs::read_to_string(&grid).unwrap().lines().count() > 10);
}

#[test]
fn walkers_emit_one_row_per_radius() {
    let o = run(&["walkers", "--packs", "1,1", "--radii", "4,8,16", "--population", "500", "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("packs,radius,estimate,log_ci,population,seed"));
    assert_eq!(text.lines().filter(|l| l.starts_with("\"1,1\"")).count(), 3);
    assert!(stderr(&o).contains("10/3"));
}
