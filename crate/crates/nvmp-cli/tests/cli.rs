use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nvmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvmp"))
        .args(args)
        .output()
        .expect("spawn nvmp")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, n: &str, d: &str, seed: &str) {
    let o = nvmp(&[
        "simulate",
        "--family",
        "heteroscedastic",
        "--n",
        n,
        "--d",
        d,
        "--seed",
        seed,
        "--out",
        p(dir),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn simulate_writes_a_reproducible_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&a, "500", "10", "1");
    simulate(&b, "500", "10", "1");
    for f in ["y.csv", "X.csv", "Z_1.csv", "meta", "truth.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(
        fs::read_to_string(a.join("y.csv")).unwrap().lines().count(),
        501
    );

    let o = nvmp(&[
        "simulate",
        "--n",
        "5",
        "--d",
        "10",
        "--out",
        p(&tmp.path().join("c")),
    ]);
    assert_eq!(code(&o), 1);
    let o = nvmp(&[
        "simulate",
        "--family",
        "poisson",
        "--out",
        p(&tmp.path().join("c")),
    ]);
    assert_eq!(code(&o), 1);

    let o = nvmp(&[
        "simulate",
        "--n",
        "40",
        "--d",
        "4",
        "--with-truth",
        "--out",
        p(&tmp.path().join("t")),
    ]);
    let out = stdout(&o);
    assert!(
        out.starts_with("name,index,value\n") && out.contains("\nbeta,1,"),
        "{out}"
    );
}

#[test]
fn fit_reports_convergence_through_the_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, "300", "5", "3");
    let out = tmp.path().join("fit");
    let o = nvmp(&[
        "fit",
        "--data",
        p(&data),
        "--loss",
        "quantile",
        "--tau",
        "0.9",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["engine"], "vmp");
    assert_eq!(r["converged"], true);
    assert_eq!(r["coefficients"].as_array().unwrap().len(), 2 + 5);
    assert_eq!(r["coefficients"][2]["name"], "u_1_1");
    assert_eq!(r["variances"].as_array().unwrap().len(), 2);
    let trace = fs::read_to_string(out.join("elbo_trace.csv")).unwrap();
    let rows = csv_rows(&trace);
    assert_eq!(rows[0], ["iteration", "elbo"]);
    assert_eq!(rows.len() - 1, r["iterations"].as_u64().unwrap() as usize);
    let last: f64 = rows.last().unwrap()[1].parse().unwrap();
    assert_eq!(last, r["final_elbo"].as_f64().unwrap());

    let o = nvmp(&[
        "fit",
        "--data",
        p(&data),
        "--max-iter",
        "1",
        "--out",
        p(&tmp.path().join("one")),
    ]);
    assert_eq!(code(&o), 2);
    assert_eq!(report(&tmp.path().join("one"))["converged"], false);
}

#[test]
fn fit_errors_exit_one_with_a_single_line() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, "50", "2", "1");
    let x = data.join("X.csv");
    let text = fs::read_to_string(&x).unwrap();
    fs::write(&x, text.replacen('\n', "\nnot,a,number\n", 1)).unwrap();
    let o = nvmp(&["fit", "--data", p(&data), "--out", p(tmp.path())]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("X.csv"), "{err}");
    assert!(!tmp.path().join("report.json").exists());

    assert_eq!(
        code(&nvmp(&["fit", "--data", p(&tmp.path().join("missing"))])),
        1
    );
    assert_eq!(code(&nvmp(&["fit"])), 1);
    assert_eq!(
        code(&nvmp(&["fit", "--data", p(&data), "--max-iterations", "3"])),
        1
    );
}

#[test]
fn fits_are_reproducible_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, "200", "4", "5");
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        let args = [
            "fit",
            "--data",
            p(&data),
            "--stochastic",
            "--minibatch",
            "40",
            "--iters",
            "300",
            "--elbo-every",
            "50",
        ];
        let o = nvmp(&[&args[..], &["--seed", seed, "--out", p(&out)]].concat());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let mut r = report(&out);
        r.as_object_mut().unwrap().remove("wall_time_seconds");
        (r, fs::read(out.join("elbo_trace.csv")).unwrap())
    };
    let (a, ta) = run("a", "7");
    let (b, tb) = run("b", "7");
    let (c, _) = run("c", "8");
    assert_eq!(a["engine"], "svmp");
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    assert_eq!(csv_rows(&String::from_utf8(ta).unwrap()).len(), 1 + 6);
    assert_ne!(a["coefficients"], c["coefficients"]);
}

#[test]
fn config_files_are_validated_and_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, "150", "3", "2");
    let cfg = tmp.path().join("run.json");
    let out = tmp.path().join("out");
    fs::write(
        &cfg,
        format!(
            r#"{{"data": "{}", "tau": 0.25, "max_iter": 1, "out": "{}"}}"#,
            p(&data),
            p(&out)
        ),
    )
    .unwrap();
    assert_eq!(code(&nvmp(&["fit", "--config", p(&cfg)])), 2);
    assert_eq!(report(&out)["loss"]["tau"], 0.25);
    let o = nvmp(&[
        "fit",
        "--config",
        p(&cfg),
        "--max-iter",
        "500",
        "--tau",
        "0.75",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(report(&out)["loss"]["tau"], 0.75);

    fs::write(&cfg, r#"{"tau": 0.5, "draws": 100}"#).unwrap();
    let o = nvmp(&["fit", "--config", p(&cfg), "--data", p(&data)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("draws"));
    fs::write(&cfg, r#"{"taux": 0.5}"#).unwrap();
    assert_eq!(code(&nvmp(&["psi", "--config", p(&cfg)])), 1);
}

#[test]
fn psi_table_matches_its_oracle_columns() {
    let o = nvmp(&[
        "psi", "--loss", "quantile", "--tau", "0.5", "--y", "0", "--m", "0", "--nu", "1",
    ]);
    assert_eq!(code(&o), 0);
    let rows = csv_rows(&stdout(&o));
    assert_eq!(
        rows[0].join(","),
        "y,m,nu,psi0,psi1,psi2,psi0_quad,psi1_quad,psi2_fd"
    );
    let v: Vec<f64> = rows[1].iter().map(|s| s.parse().unwrap()).collect();
    let expected = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    assert!((v[3] - expected).abs() < 1e-12 && (v[6] - expected).abs() < 1e-12);
    assert!((v[5] - expected).abs() < 1e-12 && (v[8] - expected).abs() < 1e-5);

    let o = nvmp(&[
        "psi",
        "--loss",
        "svc",
        "--y",
        "1,-1",
        "--m",
        "-3,0.25,4",
        "--nu",
        "0.01",
        "--quad-order",
        "41",
    ]);
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 1 + 6);
    for r in &rows[1..] {
        let v: Vec<f64> = r.iter().map(|s| s.parse().unwrap()).collect();
        let pointwise = 2.0 * (1.0 - v[0] * v[1]).max(0.0);
        assert!((v[3] - pointwise).abs() < 1e-6, "{r:?}");
        assert!((v[3] - v[6]).abs() <= 1e-9 * v[3].max(1.0));
    }

    for bad in [
        &["psi", "--loss", "quantile", "--tau", "1.5"][..],
        &["psi", "--loss", "huber_regression", "--eps", "-1"],
        &["psi", "--loss", "svc", "--y", "0.5"],
        &["psi", "--loss", "probit"],
    ] {
        assert_eq!(code(&nvmp(bad)), 1, "{bad:?}");
    }
}

#[test]
fn compare_scores_methods_against_the_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, "120", "3", "4");
    let out = tmp.path().join("cmp");
    let common = [
        "compare",
        "--data",
        p(&data),
        "--tau",
        "0.9",
        "--sigma2-beta",
        "1e4",
        "--out",
        p(&out),
    ];
    let o = nvmp(
        &[
            &common[..],
            &["--methods", "vmp,rwm", "--draws", "3000", "--burn", "500"],
        ]
        .concat(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&fs::read_to_string(out.join("compare.csv")).unwrap());
    assert_eq!(
        &rows[0][..6],
        [
            "method",
            "iterations",
            "converged",
            "wall_time",
            "elbo",
            "mean_accuracy"
        ]
    );
    assert_eq!(rows[0].len(), 6 + 2 + 3 + 2);
    assert_eq!(rows.len(), 3);
    let vmp = rows.iter().find(|r| r[0] == "vmp").unwrap();
    let acc: f64 = vmp[5].parse().unwrap();
    assert!(acc > 50.0 && acc <= 100.0, "{acc}");
    assert!(rows.iter().find(|r| r[0] == "rwm").unwrap()[5].is_empty());

    let o = nvmp(&[&common[..], &["--methods", "vmp,mfvb"]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&fs::read_to_string(out.join("compare.csv")).unwrap());
    let elbo = |m: &str| {
        rows.iter().find(|r| r[0] == m).unwrap()[4]
            .parse::<f64>()
            .unwrap()
    };
    let (v, m) = (elbo("vmp"), elbo("mfvb_quantile"));
    assert!(v >= m - 1e-6 * v.abs(), "{v} vs {m}");

    let o = nvmp(&[&common[..], &["--methods", "vmp,gibbs"]].concat());
    assert_eq!(code(&o), 1);
    let o = nvmp(&[
        "compare",
        "--data",
        p(&data),
        "--loss",
        "expectile",
        "--methods",
        "vmp,mfvb",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("quantile"));
}

#[test]
fn version_and_usage() {
    let o = nvmp(&["version"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with(&format!("nvmp {}", env!("CARGO_PKG_VERSION"))));
    assert_eq!(code(&nvmp(&["--help"])), 0);
    assert_eq!(code(&nvmp(&["frobnicate"])), 1);
    assert_eq!(code(&nvmp(&[])), 1);
}
