use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jointsa"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn simulate(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let path = dir.join("ishigami.csv");
    let o = run(&["simulate", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

fn fit_gam(csv: &Path, out: &Path) -> Output {
    run(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--response",
        "y",
        "--engine",
        "gam",
        "--mean-terms",
        "1 + x1 + s(x1) + s(x2)",
        "--disp-terms",
        "1 + s(x1)",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ])
}

const DISTS: &str = "x1=U(-pi,pi); x2=U(-pi,pi)";

#[test]
fn fit_reports_both_components_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), 400, 11);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = fit_gam(&csv, &a);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("fit/mean/D_expl"));
    assert!(text.contains("fit/dispersion/D_expl"));
    assert!(text.contains("lambda[s(x1)]"));
    assert!(fit_gam(&csv, &b).status.success());
    let ma = std::fs::read(a.join("model.jsa")).unwrap();
    let mb = std::fs::read(b.join("model.jsa")).unwrap();
    assert_eq!(ma, mb);
    assert!(String::from_utf8_lossy(&ma).starts_with("jointsa-model 1\n"));
    assert!(a.join("fit_summary.csv").exists() && a.join("fit_summary.json").exists());
}

#[test]
fn bad_term_string_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), 50, 1);
    let o = run(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--engine",
        "glm",
        "--mean-terms",
        "s(",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("position"), "{}", stderr(&o));
}

#[test]
fn missing_settings_and_unknown_bench_exit_2() {
    let o = run(&["fit", "--engine", "glm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("input"));
    let o = run(&["bench", "table9"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("table1") && e.contains("convergence"), "{e}");
    let o = run(&["fit", "--input", "/nonexistent.csv", "--engine", "glm", "--mean-terms", "1 + x1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sobol_table_rows_and_seed_stability() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), 400, 12);
    let m = dir.path().join("m");
    assert!(fit_gam(&csv, &m).status.success());
    let model = m.join("model.jsa");
    let sobol = |seed: &str, out: &Path| {
        run(&[
            "sobol",
            "--model",
            model.to_str().unwrap(),
            "--dists",
            DISTS,
            "--n",
            "2000",
            "--reps",
            "10",
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ])
    };
    let (o1, o2) = (dir.path().join("s1"), dir.path().join("s2"));
    let r1 = sobol("1", &o1);
    assert!(r1.status.success(), "{}", stderr(&r1));
    let text = stdout(&r1);
    for key in ["sobol/gam/S1 ", "sobol/gam/S2 ", "sobol/gam/S12 ", "sobol/gam/ST_eps ", "S_Yd(X1)", "sobol/gam/ST1 "] {
        assert!(text.contains(key), "missing {key} in\n{text}");
    }
    assert!(sobol("2", &o2).status.success());
    let read = |dir: &Path| -> Vec<(String, f64, f64)> {
        let mut rd = csv::Reader::from_path(dir.join("sobol.csv")).unwrap();
        rd.records()
            .map(|r| r.unwrap())
            .filter(|r| &r[7] == "MC")
            .map(|r| (r[3].to_string(), r[5].parse().unwrap(), r[6].parse().unwrap()))
            .collect()
    };
    let (a, b) = (read(&o1), read(&o2));
    assert_eq!(a.len(), 3);
    for ((la, va, sa), (lb, vb, sb)) in a.iter().zip(&b) {
        assert_eq!(la, lb);
        assert!((va - vb).abs() < 5.0 * sa.max(*sb), "{la}: {va} vs {vb}");
    }
}

#[test]
fn sobol_schema_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), 200, 13);
    let m = dir.path().join("m");
    assert!(fit_gam(&csv, &m).status.success());
    let o = run(&["sobol", "--model", m.join("model.jsa").to_str().unwrap(), "--dists", "x1=U(-pi,pi)", "--n", "500"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("x2"));
}

#[test]
fn deterministic_code_gives_zero_uncontrollable_index() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("det.csv");
    let mut text = String::from("x1,x2,y\n");
    for i in 0..200 {
        let x1 = (i as f64 * 0.618_034).fract() * 2.0 - 1.0;
        let x2 = (i as f64 * 0.414_214).fract() * 2.0 - 1.0;
        text.push_str(&format!("{x1},{x2},{}\n", 1.0 + 2.0 * x1 - x2));
    }
    std::fs::write(&csv, text).unwrap();
    let m = dir.path().join("m");
    let o = run(&[
        "fit", "--input", csv.to_str().unwrap(), "--engine", "glm", "--mean-terms", "1 + x1 + x2", "--disp-terms", "1",
        "--out", m.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&[
        "sobol", "--model", m.join("model.jsa").to_str().unwrap(), "--dists", "x1=U(-1,1);x2=U(-1,1)", "--n", "1000",
        "--reps", "3", "--indices", "S1,S2,ST_eps", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rd = csv::Reader::from_path(dir.path().join("sobol.csv")).unwrap();
    let st: f64 = rd
        .records()
        .map(|r| r.unwrap())
        .find(|r| &r[3] == "ST_eps")
        .map(|r| r[5].parse().unwrap())
        .unwrap();
    assert!(st.abs() < 1e-6, "{st}");
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), 300, 14);
    let out = dir.path().join("cfg_out");
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "[fit]\ninput = \"{}\"\nengine = \"glm\"\nmean_terms = \"1 + x1 + x2^2 + x1^3 + x2^4\"\nout = \"{}\"\n",
            csv.display(),
            dir.path().join("unused").display()
        ),
    )
    .unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "fit", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("model.jsa").exists());
    assert!(!dir.path().join("unused").exists());
    std::fs::write(&cfg, "[fit]\nunknown_key = 1\n").unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "fit"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_convergence_has_35_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["bench", "convergence", "--reps", "1", "--seed", "5", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rd = csv::Reader::from_path(dir.path().join("convergence.csv")).unwrap();
    let mut sizes: Vec<usize> = rd
        .records()
        .map(|r| r.unwrap())
        .filter(|r| &r[3] == "Q2_mean")
        .map(|r| r[4].parse().unwrap())
        .collect();
    sizes.dedup();
    assert_eq!(sizes.len(), 35);
    assert_eq!((sizes[0], sizes[34]), (30, 200));
}
