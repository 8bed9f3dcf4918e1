#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn fegap<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_fegap"))
        .args(args)
        .output()
        .expect("spawn fegap")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

pub fn write_json(p: &Path, v: &Value) {
    std::fs::write(p, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

/// Truth fixture with optional overrides, written to `dir/name`.
pub fn truth_file(dir: &Path, name: &str, base: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut t = read_json(&fixture(base));
    edit(&mut t);
    let p = dir.join(name);
    write_json(&p, &t);
    p
}

/// The model spec embedded in a truth file.
pub fn spec_of(truth: &Path, dir: &Path, name: &str) -> PathBuf {
    let t = read_json(truth);
    let p = dir.join(name);
    write_json(&p, &t["spec"]);
    p
}

pub fn simulate(dir: &Path, truth: &Path, out: &str) -> PathBuf {
    let o = fegap(["simulate", "--truth", s(truth), "--out", s(&dir.join(out))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join(out).join("data.csv")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Raw garage CSV with the required columns and the given gap ratios.
pub fn garage_csv(gaps: &[(f64, f64)]) -> String {
    let mut csv = String::from(
        "garage_id,my_mpg_1,epa_mpg_1,my_mpg_2,epa_mpg_2,model_year_1,model_year_2,us_division\n",
    );
    let divisions = ["Pacific", "Mountain"];
    for (i, (g1, g2)) in gaps.iter().enumerate() {
        csv.push_str(&format!(
            "G{i:05},{},32,{},32,{},{},{}\n",
            g1 * 32.0,
            g2 * 32.0,
            1990 + i % 10,
            2000 + i % 10,
            divisions[i % 2]
        ));
    }
    csv
}
