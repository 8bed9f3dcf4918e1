mod common;

use std::path::Path;

use common::*;
use fegap_core::data::{compute_gaps, parse_raw, EpaRating};
use serde_json::{json, Value};

fn check_snapshot(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/snapshots")
        .join(format!("{name}.txt"));
    if std::env::var_os("UPDATE_SNAPSHOTS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_default();
    assert_eq!(
        actual, expected,
        "help for `{name}` changed; rerun with UPDATE_SNAPSHOTS=1 to accept"
    );
}

#[test]
fn help_snapshots() {
    let o = fegap(["--help"]);
    assert_eq!(code(&o), 0);
    check_snapshot("fegap", &String::from_utf8(o.stdout).unwrap());
    for cmd in ["prepare", "fit", "compare", "effects", "simulate"] {
        let o = fegap([cmd, "--help"]);
        assert_eq!(code(&o), 0);
        check_snapshot(cmd, &String::from_utf8(o.stdout).unwrap());
    }
}

#[test]
fn help_shows_every_default() {
    let o = fegap(["fit", "--help"]);
    let help = String::from_utf8(o.stdout).unwrap();
    for d in [
        "[default: 400]",
        "[default: 50]",
        "[default: sure]",
        "[default: test-cycle]",
        "[default: 500]",
        "[default: 0.00001]",
        "[default: 0.000000001]",
        "[default: 0.0001]",
    ] {
        assert!(help.contains(d), "missing {d}");
    }
    let help = String::from_utf8(fegap(["prepare", "--help"]).stdout).unwrap();
    assert!(help.contains("--trim-sd <TRIM_SD>") && help.contains("[default: 3]"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&fegap(Vec::<&str>::new())), 2);
    assert_eq!(code(&fegap(["bogus"])), 2);
    assert_eq!(code(&fegap(["fit", "--estimator", "probit"])), 2);
}

#[test]
fn prepare_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw.csv");
    let gaps: Vec<_> = (0..50)
        .map(|i| (0.8 + 0.004 * i as f64, 0.9 - 0.002 * i as f64))
        .collect();
    std::fs::write(&input, garage_csv(&gaps)).unwrap();
    let out = dir.path().join("prep");
    let o = fegap(["prepare", "--input", s(&input), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "gaps.csv",
        "trimmed.csv",
        "trim_report.json",
        "group_summary.csv",
        "summary.json",
        "manifest.json",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let groups = std::fs::read_to_string(out.join("group_summary.csv")).unwrap();
    assert!(
        groups.starts_with("model_year_1,us_division,n,mean_gap_1,mean_gap_2\n1989-1993,Mountain,")
    );
    let trimmed = std::fs::read_to_string(out.join("trimmed.csv")).unwrap();
    assert_eq!(trimmed, garage_csv(&gaps));
}

#[test]
fn trim_sd_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw.csv");
    std::fs::write(&input, garage_csv(&[(0.8, 0.9); 5])).unwrap();
    for bad in ["0", "-1", "nan"] {
        let o = fegap([
            "prepare",
            "--input",
            s(&input),
            "--out",
            s(dir.path()),
            "--trim-sd",
            bad,
        ]);
        assert_eq!(code(&o), 2, "{bad}");
    }
}

#[test]
fn single_planted_outlier_is_removed() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw.csv");
    let mut gaps: Vec<_> = (0..199)
        .map(|i| (0.85 + 0.05 * ((i as f64) * 0.37).sin(), 0.86))
        .collect();
    gaps.push((2.5, 0.86));
    std::fs::write(&input, garage_csv(&gaps)).unwrap();
    let out = dir.path().join("prep");
    assert_eq!(
        code(&fegap(["prepare", "--input", s(&input), "--out", s(&out)])),
        0
    );
    let report = read_json(&out.join("trim_report.json"));
    assert_eq!(report["n_removed"], 1);
    assert_eq!(report["removed_ids"], json!(["G00199"]));
}

#[test]
fn prepare_input_and_output_failures() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let o = fegap(["prepare", "--input", s(&missing), "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);

    let input = dir.path().join("raw.csv");
    std::fs::write(&input, garage_csv(&[(0.8, 0.9); 5])).unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = fegap([
        "prepare",
        "--input",
        s(&input),
        "--out",
        s(&blocker.join("sub")),
    ]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));

    let bad = dir.path().join("bad.csv");
    let mut text = garage_csv(&[(0.8, 0.9); 5]);
    text = text.replacen("25.6,32", "-3,32", 1);
    std::fs::write(&bad, text).unwrap();
    let o = fegap([
        "prepare",
        "--input",
        s(&bad),
        "--out",
        s(&dir.path().join("p")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(
        stderr(&o).contains("row 1") && stderr(&o).contains("nonpositive mpg"),
        "{}",
        stderr(&o)
    );
}

fn without_duration(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("duration_secs");
    v
}

#[test]
fn prepare_is_pure() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw.csv");
    let gaps: Vec<_> = (0..40)
        .map(|i| (0.7 + 0.01 * i as f64, 0.95 - 0.005 * i as f64))
        .collect();
    std::fs::write(&input, garage_csv(&gaps)).unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        assert_eq!(
            code(&fegap(["prepare", "--input", s(&input), "--out", s(&out)])),
            0
        );
        let mut m = without_duration(read_json(&out.join("manifest.json")));
        m["options"]["out"] = Value::Null;
        let hashes: Vec<Value> = m["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| f["sha256"].clone())
            .collect();
        m["outputs"] = Value::Array(hashes);
        m
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn ols_interpolates_two_points() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("two.csv");
    std::fs::write(
        &data,
        "garage_id,my_mpg_1,epa_mpg_1,my_mpg_2,epa_mpg_2,model_year_1,model_year_2,us_division,x_1,x_2\n\
         a,20,20,30,30,2000,2001,Pacific,0,0\n\
         b,40,20,60,30,2000,2001,Pacific,1,1\n",
    )
    .unwrap();
    let spec = dir.path().join("spec.json");
    write_json(
        &spec,
        &json!({"equations": [
            {"name": "vehicle_1", "terms": [{"column": "x_1"}]},
            {"name": "vehicle_2", "terms": [{"column": "x_2"}]}
        ]}),
    );
    let out = dir.path().join("fit");
    let o = fegap([
        "fit",
        "--data",
        s(&data),
        "--spec",
        s(&spec),
        "--estimator",
        "ols",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fit = read_json(&out.join("fit.json"));
    for (e, x) in [(0, "x_1"), (1, "x_2")] {
        let coef = &fit["equations"][e]["coef"];
        assert!((coef["constant"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!((coef[x].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn unknown_spec_variable_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let truth = fixture("oracle_truth.json");
    let data = simulate(dir.path(), &truth, "sim");
    let spec = dir.path().join("spec.json");
    write_json(
        &spec,
        &json!({"equations": [
            {"name": "vehicle_1", "terms": [{"column": "horsepower_1"}]},
            {"name": "vehicle_2", "terms": []}
        ]}),
    );
    let o = fegap([
        "fit",
        "--data",
        s(&data),
        "--spec",
        s(&spec),
        "--out",
        s(&dir.path().join("f")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("horsepower_1"), "{}", stderr(&o));
}

fn fit(
    dir: &Path,
    data: &Path,
    spec: &Path,
    estimator: &str,
    out: &str,
    extra: &[&str],
) -> (i32, Value) {
    let out = dir.join(out);
    let mut args = vec![
        "fit",
        "--data",
        s(data),
        "--spec",
        s(spec),
        "--estimator",
        estimator,
        "--out",
        s(&out),
    ];
    args.extend_from_slice(extra);
    let o = fegap(&args);
    let json = if out.join("fit.json").is_file() {
        read_json(&out.join("fit.json"))
    } else {
        Value::Null
    };
    (code(&o), json)
}

/// Two-step FGLS and joint ML differ by O(1/N); at N = 300 the gap is 2e-4.
#[test]
fn rp_without_random_terms_matches_sure() {
    let dir = tempfile::tempdir().unwrap();
    let truth = truth_file(dir.path(), "truth.json", "recovery_truth.json", |t| {
        for eq in t["spec"]["equations"].as_array_mut().unwrap() {
            for term in eq["terms"].as_array_mut().unwrap() {
                term.as_object_mut().unwrap().remove("kind");
            }
        }
        t["random_sd"] = json!([{}, {}]);
    });
    let data = simulate(dir.path(), &truth, "sim");
    let spec = spec_of(&truth, dir.path(), "spec.json");
    let (c1, sure) = fit(dir.path(), &data, &spec, "sure", "sure", &[]);
    let (c2, rp) = fit(dir.path(), &data, &spec, "rp-sure", "rp", &[]);
    assert_eq!((c1, c2), (0, 0));
    for e in 0..2 {
        let a = sure["equations"][e]["coef"].as_object().unwrap();
        let b = rp["equations"][e]["coef"].as_object().unwrap();
        assert_eq!(a.len(), b.len());
        for (name, v) in a {
            assert!(
                (v.as_f64().unwrap() - b[name].as_f64().unwrap()).abs() <= 1e-4,
                "{name}"
            );
        }
    }
}

#[test]
fn rp_fit_reports_and_caps() {
    let dir = tempfile::tempdir().unwrap();
    let truth = fixture("oracle_truth.json");
    let data = simulate(dir.path(), &truth, "sim");
    let spec = spec_of(&truth, dir.path(), "spec.json");

    let (c, rp) = fit(
        dir.path(),
        &data,
        &spec,
        "rp-sure",
        "rp",
        &["--draws", "100"],
    );
    assert_eq!(c, 0);
    assert_eq!(rp["convergence"]["status"], "converged");
    assert_eq!(rp["draws"], json!({"R": 100, "burn": 50, "bases": [2, 3]}));
    assert_eq!(rp["random"].as_array().unwrap().len(), 2);
    for key in ["name", "mu", "mu_se", "sigma", "sigma_se"] {
        assert!(rp["random"][0].get(key).is_some(), "{key}");
    }

    let (c, capped) = fit(
        dir.path(),
        &data,
        &spec,
        "rp-sure",
        "capped",
        &["--draws", "100", "--max-iter", "1"],
    );
    assert_eq!(c, 3);
    assert_eq!(capped["convergence"]["status"], "not converged");

    let (c, _) = fit(dir.path(), &data, &spec, "rp-sure", "b1", &["--bases", "2"]);
    assert_eq!(c, 2);
    let (c, _) = fit(
        dir.path(),
        &data,
        &spec,
        "rp-sure",
        "b2",
        &["--bases", "2,4"],
    );
    assert_eq!(c, 2);
    let (c, _) = fit(dir.path(), &data, &spec, "rp-sure", "b3", &["--draws", "0"]);
    assert_eq!(c, 2);
}

fn sure_fit_file(dir: &Path) -> std::path::PathBuf {
    let truth = fixture("oracle_truth.json");
    let data = simulate(dir, &truth, "sim");
    let spec = spec_of(&truth, dir, "spec.json");
    let (c, _) = fit(dir, &data, &spec, "sure", "sure", &[]);
    assert_eq!(c, 0);
    dir.join("sure/fit.json")
}

#[test]
fn compare_marks_the_higher_loglik() {
    let dir = tempfile::tempdir().unwrap();
    let base = sure_fit_file(dir.path());
    let mut v = read_json(&base);
    let ll = v["loglik"].as_f64().unwrap();
    v["loglik"] = json!(ll + 10.0);
    let better = dir.path().join("better.json");
    write_json(&better, &v);
    let out = dir.path().join("cmp");
    let o = fegap([
        "compare",
        s(&base),
        s(&better),
        "--labels",
        "base,better",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("criteria.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "label,n,k,loglik,AIC,CAIC,SBIC,ICOMP,best");
    assert!(
        rows[1].starts_with("better,") && rows[1].ends_with(",AIC;CAIC;SBIC;ICOMP"),
        "{}",
        rows[1]
    );
    assert!(rows[2].ends_with(','));
    assert!(String::from_utf8(o.stdout).unwrap().contains('*'));
}

#[test]
fn compare_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let base = sure_fit_file(dir.path());
    let out = dir.path().join("cmp");
    assert_eq!(code(&fegap(["compare", s(&base), "--out", s(&out)])), 2);
    let junk = dir.path().join("junk.json");
    std::fs::write(&junk, "{not json").unwrap();
    assert_eq!(
        code(&fegap(["compare", s(&base), s(&junk), "--out", s(&out)])),
        2
    );
    assert_eq!(
        code(&fegap([
            "compare",
            s(&base),
            s(&base),
            "--labels",
            "one",
            "--out",
            s(&out)
        ])),
        2
    );
}

#[test]
fn effects_rows() {
    let dir = tempfile::tempdir().unwrap();
    let base = sure_fit_file(dir.path());
    let mut v = read_json(&base);
    v["random"] = json!([
        {"name": "Gasoline", "equation": "vehicle_1", "mu": 0.01294, "mu_se": null,
         "sigma": 0.0521, "sigma_se": null, "verdict": "retain-random"},
        {"name": "Flat", "equation": "vehicle_2", "mu": 0.0, "mu_se": null,
         "sigma": 0.2, "sigma_se": null, "verdict": "indeterminate"}
    ]);
    let rp = dir.path().join("rp.json");
    write_json(&rp, &v);
    let out = dir.path().join("eff");
    let o = fegap(["effects", "--fit", s(&rp), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("effects.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "name,mu,sigma,lower,upper,pct_above,pct_below");
    assert!(
        rows[1].starts_with("vehicle_1:Gasoline,") && rows[1].ends_with(",59.81,40.19"),
        "{}",
        rows[1]
    );
    assert_eq!(rows[2], "vehicle_2:Flat,0,0.2,-0.4000,0.4000,50.00,50.00");

    let o = fegap([
        "effects",
        "--fit",
        s(&base),
        "--out",
        s(&dir.path().join("e2")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no random coefficients"));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let truth = fixture("oracle_truth.json");
    let run = |out: &str| {
        let o = fegap([
            "simulate",
            "--truth",
            s(&truth),
            "--n",
            "10",
            "--seed",
            "7",
            "--out",
            s(&dir.path().join(out)),
        ]);
        assert_eq!(code(&o), 0);
        std::fs::read(dir.path().join(out).join("data.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 11);
    let o = fegap([
        "simulate",
        "--truth",
        s(&truth),
        "--n",
        "0",
        "--out",
        s(&dir.path().join("z")),
    ]);
    assert_eq!(code(&o), 2);
    let bad = truth_file(dir.path(), "bad.json", "oracle_truth.json", |t| {
        t["error"]["rho"] = json!(1.5)
    });
    let o = fegap([
        "simulate",
        "--truth",
        s(&bad),
        "--out",
        s(&dir.path().join("y")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn noiseless_truth_writes_x_beta() {
    let dir = tempfile::tempdir().unwrap();
    let truth = truth_file(dir.path(), "truth.json", "oracle_truth.json", |t| {
        t["random_sd"] = json!([{"x1": 0.0}, {"x2": 0.0}]);
        t["error"] = json!({"sigma1": 0.0, "sigma2": 0.0, "rho": 0.0});
        t["n"] = json!(25);
    });
    let out = dir.path().join("sim");
    let o = fegap([
        "simulate",
        "--truth",
        s(&truth),
        "--out",
        s(&out),
        "--dump-draws",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("draws.csv").is_file());
    let t = read_json(&truth);
    let table = parse_raw(std::fs::File::open(out.join("data.csv")).unwrap()).unwrap();
    let obs = compute_gaps(&table, EpaRating::TestCycle).unwrap();
    for o in &obs {
        for (e, (d, x)) in [("d1", "x1"), ("d2", "x2")].iter().enumerate() {
            let c = &t["coefficients"][e];
            let field = |k: &str| o.fields[k].parse::<f64>().unwrap();
            let want = c["constant"].as_f64().unwrap()
                + c[*d].as_f64().unwrap() * field(d)
                + c[*x].as_f64().unwrap() * field(x);
            assert!((o.gap[e] - want).abs() <= 1e-14, "{} {e}", o.garage_id);
        }
    }
}
