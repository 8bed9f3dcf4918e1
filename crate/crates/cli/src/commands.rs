use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use fegap_core::data::{
    compute_gaps, gap_correlation, group_summary, mean, parse_raw, sample_sd, trim_outliers,
    GroupKey, PairedGapObservation, RawTable, SystemData, YearBins,
};
use fegap_core::halton::{build_draw_store, first_primes, DrawStore, HaltonConfig};
use fegap_core::optim::BfgsOptions;
use fegap_core::report::FitReport;
use fegap_core::rp::{fit_rp_sure, RpOptions};
use fegap_core::selection::{rank_models, write_effects_csv};
use fegap_core::spec::ModelSpec;
use fegap_core::sure::{fgls_fit, ols_system_fit, FglsOptions};
use fegap_core::synthetic::{simulate_dataset, TruthSpec};
use serde::Serialize;

use crate::args::{CompareArgs, EffectsArgs, EstimatorArg, FitArgs, PrepareArgs, SimulateArgs};
use crate::manifest::Recorder;
use crate::Failure;

fn read_table(path: &Path) -> Result<RawTable, Failure> {
    let file = File::open(path).map_err(|e| Failure::io(path, e))?;
    parse_raw(file).map_err(|e| match Failure::from(e) {
        Failure::Usage(m) => Failure::Usage(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> fegap_core::Result<()>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::Usage(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn write_gaps(obs: &[PairedGapObservation]) -> Result<Vec<u8>, Failure> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["garage_id", "row", "gap_1", "gap_2", "diff_1", "diff_2"])?;
        for o in obs {
            w.write_record([
                o.garage_id.clone(),
                o.row.to_string(),
                o.gap[0].to_string(),
                o.gap[1].to_string(),
                o.diff[0].to_string(),
                o.diff[1].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

#[derive(Serialize)]
struct PrepareSummary {
    n_input: usize,
    n_kept: usize,
    n_relabelled: usize,
    correlation_input: Option<f64>,
    correlation_kept: Option<f64>,
    mean_gap_kept: [f64; 2],
    sd_gap_kept: [f64; 2],
    /// Mean of `my_mpg - epa_mpg`, in miles per gallon.
    mean_diff_kept: [f64; 2],
}

pub fn prepare(a: &PrepareArgs) -> Result<(), Failure> {
    let bins: YearBins = a.year_bins.parse()?;
    let mut rec = Recorder::start(&a.out)?;
    let table = read_table(&a.input)?;
    let obs = compute_gaps(&table, a.epa.into())?;
    let trimmed = trim_outliers(&obs, a.trim_sd)?;

    rec.write("gaps.csv", &write_gaps(&obs)?)?;
    let by_row: BTreeMap<usize, _> = table.records.iter().map(|r| (r.row, r)).collect();
    let kept: Vec<_> = trimmed.kept.iter().map(|o| by_row[&o.row]).collect();
    rec.write(
        "trimmed.csv",
        &csv_bytes(|buf| table.write_csv(buf, &kept))?,
    )?;
    rec.write("trim_report.json", &json_bytes(&trimmed.report)?)?;

    let keys: Vec<GroupKey> = a
        .group_by
        .iter()
        .map(|c| {
            if c.starts_with("model_year") {
                GroupKey::YearBinned {
                    column: c.clone(),
                    bins: bins.clone(),
                }
            } else {
                GroupKey::Column(c.clone())
            }
        })
        .collect();
    if let Some(k) = keys
        .iter()
        .find(|k| table.column_index(k.column()).is_none())
    {
        return Err(Failure::Usage(format!(
            "unknown group-by column `{}`",
            k.column()
        )));
    }
    let groups = group_summary(&trimmed.kept, &keys);
    rec.write(
        "group_summary.csv",
        &csv_bytes(|buf| {
            let mut w = csv::Writer::from_writer(buf);
            let mut header = a.group_by.clone();
            header.extend(["n", "mean_gap_1", "mean_gap_2"].map(String::from));
            w.write_record(&header)?;
            for g in &groups {
                let mut row = g.key.clone();
                row.extend([
                    g.n.to_string(),
                    g.mean_gap[0].to_string(),
                    g.mean_gap[1].to_string(),
                ]);
                w.write_record(&row)?;
            }
            w.flush()?;
            Ok(())
        })?,
    )?;

    let gaps = |v: usize| trimmed.kept.iter().map(|o| o.gap[v]).collect::<Vec<_>>();
    let (g1, g2) = (gaps(0), gaps(1));
    let summary = PrepareSummary {
        n_input: obs.len(),
        n_kept: trimmed.kept.len(),
        n_relabelled: table.records.iter().filter(|r| r.relabelled).count(),
        correlation_input: gap_correlation(&obs).ok(),
        correlation_kept: gap_correlation(&trimmed.kept).ok(),
        mean_gap_kept: [mean(&g1), mean(&g2)],
        sd_gap_kept: [sample_sd(&g1), sample_sd(&g2)],
        mean_diff_kept: [0, 1]
            .map(|v| mean(&trimmed.kept.iter().map(|o| o.diff[v]).collect::<Vec<_>>())),
    };
    rec.write("summary.json", &json_bytes(&summary)?)?;
    rec.finish("prepare", a, &[&a.input])?;
    eprintln!(
        "prepare: {} garages, {} removed, {} kept",
        trimmed.report.n_input, trimmed.report.n_removed, trimmed.report.n_kept
    );
    Ok(())
}

pub fn fit(a: &FitArgs) -> Result<(), Failure> {
    let spec = ModelSpec::from_path(&a.spec)?;
    let mut rec = Recorder::start(&a.out)?;
    let table = read_table(&a.data)?;
    let obs = compute_gaps(&table, a.epa.into())?;
    let data = SystemData::from_observations(&obs, &spec)?;

    let (report, converged) = match a.estimator {
        EstimatorArg::Ols => (FitReport::from(&ols_system_fit(&data)?), true),
        EstimatorArg::Sure => {
            let opts = FglsOptions {
                dof_adjusted: a.dof_adjust,
            };
            (FitReport::from(&fgls_fit(&data, opts)?), true)
        }
        EstimatorArg::RpSure => {
            let dims = data.design.n_random();
            let bases = a.bases.clone().unwrap_or_else(|| first_primes(dims));
            if bases.len() != dims {
                return Err(Failure::Usage(format!(
                    "--bases lists {} primes but the spec has {dims} random coefficients",
                    bases.len()
                )));
            }
            let config = HaltonConfig {
                bases,
                burn: a.burn,
                draws: a.draws,
            };
            let draws = if dims == 0 {
                DrawStore::empty(data.n())
            } else {
                build_draw_store(data.n(), &config)?
            };
            let opts = RpOptions {
                bfgs: BfgsOptions {
                    max_iter: a.max_iter,
                    grad_tol: a.grad_tol,
                    rel_tol: a.rel_tol,
                    ..BfgsOptions::default()
                },
                hessian_step: a.hessian_step,
                threads: a.threads,
                ..RpOptions::default()
            };
            let fit = fit_rp_sure(&data, &draws, &opts)?;
            (FitReport::from(&fit), fit.converged())
        }
    };
    rec.write("fit.json", &json_bytes(&report)?)?;
    rec.finish("fit", a, &[&a.data, &a.spec])?;
    let loglik = report
        .loglik
        .map_or("NA".to_string(), |l| format!("{l:.4}"));
    eprintln!("fit: n = {}, k = {}, loglik = {loglik}", report.n, report.k);
    if !converged {
        let c = report
            .convergence
            .as_ref()
            .expect("rp-sure reports convergence");
        return Err(Failure::NotConverged(format!(
            "not converged after {} iterations (gradient norm {:.3e}); fit written",
            c.iters, c.grad_norm
        )));
    }
    Ok(())
}

pub fn compare(a: &CompareArgs) -> Result<(), Failure> {
    let labels: Vec<String> = match &a.labels {
        Some(l) if l.len() != a.fits.len() => {
            return Err(Failure::Usage(format!(
                "{} labels for {} fits",
                l.len(),
                a.fits.len()
            )))
        }
        Some(l) => l.clone(),
        None => a.fits.iter().map(|p| p.display().to_string()).collect(),
    };
    let mut inputs = Vec::with_capacity(a.fits.len());
    for (label, path) in labels.iter().zip(&a.fits) {
        let report = FitReport::from_path(path)
            .map_err(|e| Failure::Usage(format!("{}: not a fit file: {e}", path.display())))?;
        inputs.push((label.clone(), report.criteria_input()?));
    }
    if inputs.iter().any(|(_, c)| c.n != inputs[0].1.n) {
        eprintln!("compare: warning: fits use different sample sizes");
    }
    let ranking = rank_models(&inputs)?;
    let mut rec = Recorder::start(&a.out)?;
    rec.write("criteria.csv", &csv_bytes(|buf| ranking.write_csv(buf))?)?;
    let text = ranking.to_text();
    rec.write("criteria.txt", text.as_bytes())?;
    let paths: Vec<&Path> = a.fits.iter().map(|p| p.as_path()).collect();
    rec.finish("compare", a, &paths)?;
    print!("{text}");
    Ok(())
}

pub fn effects(a: &EffectsArgs) -> Result<(), Failure> {
    let report = FitReport::from_path(&a.fit)?;
    let effects = report.effects()?;
    let mut rec = Recorder::start(&a.out)?;
    let bytes = csv_bytes(|buf| write_effects_csv(&effects, buf))?;
    rec.write("effects.csv", &bytes)?;
    rec.finish("effects", a, &[&a.fit])?;
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let mut truth = TruthSpec::from_path(&a.truth)?;
    if let Some(n) = a.n {
        truth.n = n;
    }
    if let Some(seed) = a.seed {
        truth.seed = seed;
    }
    let sim = simulate_dataset(&truth)?;
    let mut rec = Recorder::start(&a.out)?;
    rec.write("data.csv", &csv_bytes(|buf| sim.write_csv(buf))?)?;
    if a.dump_draws {
        rec.write("draws.csv", &csv_bytes(|buf| sim.write_draws_csv(buf))?)?;
    }
    rec.finish("simulate", a, &[&a.truth])?;
    eprintln!("simulate: {} garages, seed {}", truth.n, truth.seed);
    Ok(())
}
