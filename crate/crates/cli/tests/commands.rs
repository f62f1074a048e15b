use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ctrp_core::jl::{bound_curve, linear_grid};
use serde_json::{json, Value};

fn ctrp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctrp"))
        .args(args)
        .env("CTRP_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = ctrp(args);
    assert!(
        out.status.success(),
        "ctrp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Exit code and parsed stderr error of a failing run.
fn fails(args: &[&str]) -> (i32, Value) {
    let out = ctrp(args);
    assert!(
        !out.status.success(),
        "ctrp {args:?} unexpectedly succeeded"
    );
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    (out.status.code().unwrap(), err)
}

fn write_json(path: &Path, v: &Value) -> PathBuf {
    std::fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path.to_path_buf()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn without_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timing");
    v
}

fn scenario() -> Value {
    json!({
        "coefficient": "CR",
        "shape": [8, 8],
        "n_train": 80,
        "n_test": 12,
        "r": 0.25,
        "projection": "MW",
        "members": 2,
        "prior": {"gaussian": {}},
        "mcmc": {"iterations": 60, "burn_in": 20},
        "seed": 3
    })
}

#[test]
fn bounds_csv_matches_the_library_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(
        &dir.path().join("b.json"),
        &json!({"eps_grid": "0.05:0.95:19", "beta": 0.2, "n": 10000.0, "order": 3}),
    );
    let out = dir.path().join("out");
    ok(&["bounds", "--config", s(&cfg), "--out", s(&out)]);
    let text = std::fs::read_to_string(out.join("bounds.csv")).unwrap();
    let rows = bound_curve(&linear_grid(0.05, 0.95, 19), 0.2, 1e4, 3).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("epsilon,tensorwise,modewise"));
    for (line, row) in lines.zip(&rows) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v, [row.epsilon, row.tensorwise, row.modewise]);
    }
    assert_eq!(text.lines().count(), 20);

    // Flags override the file.
    let out2 = dir.path().join("out2");
    ok(&[
        "bounds",
        "--config",
        s(&cfg),
        "--out",
        s(&out2),
        "--eps-grid",
        "0.5",
        "--variant",
        "tt",
        "--rank",
        "2",
    ]);
    let text = std::fs::read_to_string(out2.join("bounds.csv")).unwrap();
    assert!(text.starts_with("epsilon,tt\n0.5,"), "{text}");
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(
        &dir.path().join("b.json"),
        &json!({"beta": 0.2, "betta": 1.0}),
    );
    let (code, err) = fails(&[
        "bounds",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(code, 2);
    assert_eq!(err["error"]["category"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("betta"));

    let mut sc = scenario();
    sc["mcmc"]["iters"] = json!(5);
    let cfg = write_json(&dir.path().join("s.json"), &sc);
    let (code, _) = fails(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn error_categories_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // I/O
    let (code, err) = fails(&[
        "bench",
        "--config",
        s(&dir.path().join("nope.json")),
        "--out",
        "x",
    ]);
    assert_eq!((code, err["error"]["category"].as_str()), (3, Some("io")));
    // Numerical domain
    let (code, err) = fails(&[
        "bounds",
        "--out",
        s(&dir.path().join("b")),
        "--eps-grid",
        "1.5",
    ]);
    assert_eq!(
        (code, err["error"]["category"].as_str()),
        (4, Some("numerical"))
    );
    // Bad flag
    let (code, _) = fails(&["bounds", "--nonsense"]);
    assert_eq!(code, 2);

    // Ingestion: a missing value; shape: wrong column count.
    std::fs::write(dir.path().join("bad.csv"), "y,x_1,x_2,x_3,x_4\n1,2,,4,5\n").unwrap();
    std::fs::write(dir.path().join("narrow.csv"), "y,x_1,x_2\n1,2,3\n").unwrap();
    for (file, want) in [("bad.csv", 5), ("narrow.csv", 6)] {
        let cfg = write_json(
            &dir.path().join("fit.json"),
            &json!({
                "projection": {"type": "MW", "q": [1, 1], "members": 1},
                "data": {"tensor": {"shape": [2, 2], "train": file}},
                "mcmc": {"iterations": 10, "burn_in": 5}
            }),
        );
        let (code, _) = fails(&[
            "fit",
            "--config",
            s(&cfg),
            "--out",
            s(&dir.path().join("f")),
        ]);
        assert_eq!(code, want, "{file}");
    }
}

#[test]
fn simulate_fit_predict_pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sc = write_json(&d.join("scenario.json"), &scenario());
    let sim = d.join("sim");
    ok(&[
        "simulate",
        "--config",
        s(&sc),
        "--out",
        s(&sim),
        "--emit-data",
    ]);
    let manifest = read_json(&sim.join("manifest.json"));
    assert!(manifest["results"]["mean_rmse"]
        .as_f64()
        .unwrap()
        .is_finite());
    let points = std::fs::read_to_string(sim.join("points.csv")).unwrap();
    assert_eq!(points.lines().count(), 13);
    for f in [
        "train.csv",
        "test.csv",
        "coefficient.csv",
        "member_predictions.csv",
    ] {
        assert!(manifest["outputs"][f].is_string(), "{f} not hashed");
    }

    let fit_cfg = write_json(
        &d.join("fit.json"),
        &json!({
            "model": {"parafac": {"rank": 2}},
            "projection": {"type": "MW", "r": 0.25, "members": 2, "seed": 11},
            "data": {"tensor": {"shape": [8, 8], "train": "sim/train.csv", "test": "sim/test.csv"}},
            "mcmc": {"iterations": 60, "burn_in": 20},
            "outputs": {"dir": "fit_a", "quantiles": [0.1, 0.9]}
        }),
    );
    ok(&["fit", "--config", s(&fit_cfg)]);
    let fit_b = d.join("fit_b");
    ok(&["fit", "--config", s(&fit_cfg), "--out", s(&fit_b)]);
    let a = read_json(&d.join("fit_a/manifest.json"));
    let b = read_json(&fit_b.join("manifest.json"));
    assert_eq!(without_timing(a.clone()), without_timing(b));
    for f in ["chain_0.csv", "chain_1.csv", "weights.csv", "model.json"] {
        assert_eq!(
            std::fs::read(d.join("fit_a").join(f)).unwrap(),
            std::fs::read(fit_b.join(f)).unwrap(),
            "{f}"
        );
    }
    let w: f64 = a["results"]["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!((w - 1.0).abs() < 1e-12);

    // A different seed changes the projections.
    let fit_c = d.join("fit_c");
    ok(&[
        "fit",
        "--config",
        s(&fit_cfg),
        "--out",
        s(&fit_c),
        "--seed-override",
        "12",
    ]);
    assert_ne!(
        std::fs::read(fit_b.join("model.json")).unwrap(),
        std::fs::read(fit_c.join("model.json")).unwrap()
    );

    let pred = d.join("pred");
    ok(&[
        "predict",
        "--config",
        s(&fit_cfg),
        "--model",
        s(&fit_b),
        "--out",
        s(&pred),
    ]);
    let text = std::fs::read_to_string(pred.join("predictions.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("index,y,mean,member_0,member_1,q_0.1,q_0.9")
    );
    for line in lines.by_ref().take(12) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[5] <= v[6]);
    }
    assert_eq!(text.lines().count(), 13);
    let pm = read_json(&pred.join("manifest.json"));
    assert!(pm["results"]["rmse"].as_f64().unwrap().is_finite());

    let pred2 = d.join("pred2");
    ok(&[
        "predict",
        "--config",
        s(&fit_cfg),
        "--model",
        s(&fit_b),
        "--out",
        s(&pred2),
    ]);
    assert_eq!(
        text,
        std::fs::read_to_string(pred2.join("predictions.csv")).unwrap()
    );

    // A modified chain is refused.
    let chain = fit_b.join("chain_1.csv");
    let mut body = std::fs::read_to_string(&chain).unwrap();
    let extra = body.lines().nth(1).unwrap().to_owned();
    body.push_str(&extra);
    body.push('\n');
    std::fs::write(&chain, body).unwrap();
    let (code, err) = fails(&[
        "predict",
        "--config",
        s(&fit_cfg),
        "--model",
        s(&fit_b),
        "--out",
        s(&pred2),
    ]);
    assert_eq!(code, 5, "{err}");
}

#[test]
fn project_writes_specs_and_compressed_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut daily = String::from("date,BD,TB,VI,IR,ER,BV,GV\n");
    for m in 1..=6u32 {
        for day in 1..=21u32 {
            daily += &format!("2022-{m:02}-{day:02}");
            for k in 0..7 {
                daily += &format!(",{}", (m * day + k) as f64 / 10.0);
            }
            daily += "\n";
        }
    }
    std::fs::write(d.join("daily.csv"), daily).unwrap();
    std::fs::write(
        d.join("monthly.csv"),
        "date,value\n2022-05-31,0.5\n2022-06-30,0.7\n2022-07-29,0.4\n",
    )
    .unwrap();
    let cfg = write_json(
        &d.join("p.json"),
        &json!({
            "projection": {"type": "MW(1,2)", "q": [4, 7, 5], "members": 3, "seed": 1},
            "data": {"mixed_frequency": {"monthly": "monthly.csv", "daily": "daily.csv", "train": [0, 2], "test": [2, 3]}}
        }),
    );
    let out = d.join("proj");
    ok(&["project", "--config", s(&cfg), "--out", s(&out)]);
    let specs = read_json(&out.join("projections.json"));
    assert_eq!(specs.as_array().unwrap().len(), 3);
    assert_eq!(specs[0]["output_shape"], json!([4, 7, 5]));
    assert_eq!(specs[2]["preserve_modes"], json!([0, 1]));
    let train = std::fs::read_to_string(out.join("train_projected_0.csv")).unwrap();
    assert_eq!(train.lines().count(), 3);
    assert_eq!(train.lines().next().unwrap().split(',').count(), 1 + 140);

    // Month 2022-04 has no predecessor 4 months back in the daily file.
    let bad = write_json(
        &d.join("bad.json"),
        &json!({
            "projection": {"type": "MW", "r": 0.5, "members": 1},
            "data": {"mixed_frequency": {"monthly": "monthly.csv", "daily": "daily.csv", "train": [0, 1], "test": [0, 1]}},
        }),
    );
    std::fs::write(d.join("monthly.csv"), "date,value\n2022-04-29,0.5\n").unwrap();
    let (code, err) = fails(&["project", "--config", s(&bad), "--out", s(&d.join("x"))]);
    assert_eq!(code, 5);
    assert!(
        err["error"]["message"]
            .as_str()
            .unwrap()
            .contains("2021-12"),
        "{err}"
    );
}

#[test]
fn bench_reports_both_models() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = scenario();
    sc["members"] = json!(1);
    let cfg = write_json(&dir.path().join("s.json"), &sc);
    let out = dir.path().join("bench");
    ok(&["bench", "--config", s(&cfg), "--out", s(&out)]);
    let text = std::fs::read_to_string(out.join("bench.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "model,r,output_shape,cpu_hours,rmse,efficiency_score"
    );
    assert!(lines[1].starts_with("CBTR,0.25,4x4,"), "{}", lines[1]);
    assert!(lines[2].starts_with("BTR,1,8x8,"), "{}", lines[2]);
}
