//! CSV and JSON artifacts written by the experiment commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::metrics::Direction;
use crate::ml::{sidecar_path, Model};
use crate::Result;

use super::config::ExperimentConfig;
use super::data::DatasetBundle;
use super::simulate::{BenchReport, SimulationReport};

/// 17 significant digits, enough to round-trip every `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn policy_csv(report: &SimulationReport, index: usize) -> String {
    let mut out = String::from("trial,ue,rate_bps,ipd_wm2,sar_wkg\n");
    for r in &report.policies[index].records {
        let Ok(e) = &r.outcome else { continue };
        for (k, rate) in e.rates.iter().enumerate() {
            let ipd = e.ipd.as_ref().map(|v| v[k]);
            let sar = e.sar.as_ref().map(|v| v[k]);
            writeln!(out, "{},{k},{},{},{}", r.trial, fmt_f64(*rate), opt(ipd), opt(sar)).expect("string write");
        }
    }
    out
}

pub fn summary_json(cfg: &ExperimentConfig, report: &SimulationReport) -> serde_json::Value {
    let e = &cfg.experiment;
    let direction = match report.direction {
        Direction::Dl => "dl",
        Direction::Ul => "ul",
    };
    let policies: Vec<_> = report.policies.iter().map(|p| p.summary()).collect();
    json!({
        "direction": direction,
        "beamformer": e.beamformer,
        "evaluation": e.evaluation,
        "trials": e.trials,
        "seed": e.seed,
        "system_sha256": cfg.system_sha256(),
        "solver_sha256": cfg.solver_sha256(),
        "total_violations": policies.iter().map(|p| p.violations).sum::<usize>(),
        "total_failures": policies.iter().map(|p| p.failures).sum::<usize>(),
        "policies": policies,
    })
}

/// Writes `<policy>.csv` per policy and `summary.json`; returns the paths.
pub fn write_simulation(cfg: &ExperimentConfig, report: &SimulationReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (i, p) in report.policies.iter().enumerate() {
        let path = dir.join(format!("{}.csv", p.policy.slug()));
        fs::write(&path, policy_csv(report, i))?;
        paths.push(path);
    }
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary_json(cfg, report))? + "\n")?;
    paths.push(path);
    Ok(paths)
}

fn remove_quietly(path: &Path) {
    let _ = fs::remove_file(path);
    let _ = fs::remove_file(sidecar_path(path));
}

/// Writes `dataset-<dir>.cfd` (and the smoothed-SCO variants) with sidecars.
/// Files from a failed write are removed.
pub fn write_dataset_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let tag = bundle.main.provenance.direction.clone();
    let mut items = vec![(dir.join(format!("dataset-{tag}.cfd")), &bundle.main)];
    if let Some(d) = &bundle.lse {
        items.push((dir.join(format!("dataset-{tag}-lse.cfd")), d));
    }
    if let Some(d) = &bundle.trace {
        items.push((dir.join(format!("dataset-{tag}-lse-trace.cfd")), d));
    }
    let mut written = Vec::new();
    for (path, ds) in items {
        if let Err(e) = ds.write(&path) {
            remove_quietly(&path);
            written.iter().for_each(|p: &PathBuf| remove_quietly(p));
            return Err(e);
        }
        written.push(path);
    }
    Ok(written)
}

pub fn curves_csv(model: &Model) -> String {
    let mut out = String::from("stage,epoch,learning_rate,train_mae,val_mae\n");
    for (s, curve) in model.curves.iter().enumerate() {
        for e in &curve.epochs {
            writeln!(
                out,
                "{},{},{},{},{}",
                s + 1,
                e.epoch,
                fmt_f64(e.learning_rate),
                fmt_f64(e.train_mae),
                opt(e.val_mae)
            )
            .expect("string write");
        }
    }
    out
}

pub fn bench_csv(report: &BenchReport) -> String {
    let mut out = String::from("policy,trials,mean_s,std_s\n");
    for r in &report.rows {
        writeln!(out, "{},{},{},{}", r.policy, r.trials, fmt_f64(r.mean_s), fmt_f64(r.std_s)).expect("string write");
    }
    out
}

pub fn bench_json(report: &BenchReport) -> serde_json::Value {
    let (ordered, ratio) = report.ordering();
    json!({
        "rows": report.rows,
        "failures": report.failures,
        "dnn_lt_lse_lt_maximin": ordered,
        "maximin_over_lse": ratio,
        "maximin_faster_than_lse": ratio.map(|r| r < 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
        let x = 123456.789e-7;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }
}
