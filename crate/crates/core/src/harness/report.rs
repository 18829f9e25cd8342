//! CSV outputs. All files have a header row, `.` decimals and `\n` line
//! endings; numbers use the shortest round-trip formatting.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::evaluate::EvalReport;
use crate::error::{Error, Result};

/// One row of `metrics.csv`. Learner columns are empty before the first
/// update and evaluation columns are empty between evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub seed: u64,
    pub step: u64,
    pub critic_loss: Option<f64>,
    pub actor_cvar: Option<f64>,
    pub eval_means: Option<Vec<f64>>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn scale_label(scale: f64) -> String {
    scale.to_string()
}

pub fn metrics_csv(rows: &[MetricRow], noise_scales: &[f64]) -> String {
    let mut out = String::from("seed,step,critic_loss,actor_cvar");
    for s in noise_scales {
        let _ = write!(out, ",eval_mean_{}", scale_label(*s));
    }
    out.push('\n');
    for row in rows {
        let _ = write!(
            out,
            "{},{},{},{}",
            row.seed,
            row.step,
            opt(row.critic_loss),
            opt(row.actor_cvar)
        );
        match &row.eval_means {
            Some(means) => means.iter().for_each(|m| {
                let _ = write!(out, ",{m}");
            }),
            None => noise_scales.iter().for_each(|_| out.push(',')),
        }
        out.push('\n');
    }
    out
}

pub fn summary_csv(reports: &[(u64, EvalReport)]) -> String {
    let mut out = String::from("seed,scale,mean,std,min,max\n");
    for (seed, report) in reports {
        for s in &report.scales {
            let _ = writeln!(
                out,
                "{seed},{},{},{},{},{}",
                s.scale, s.mean, s.std, s.min, s.max
            );
        }
    }
    out
}

pub fn cdf_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("value,prob\n");
    for (v, p) in points {
        let _ = writeln!(out, "{v},{p}");
    }
    out
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `metrics.csv`, `summary.csv` and one `cdf_<scale>.csv` per scale
/// (returns pooled over all seeds). Existing files are overwritten.
pub fn write_reports(
    dir: impl AsRef<Path>,
    reports: &[(u64, EvalReport)],
    metrics: &[MetricRow],
    noise_scales: &[f64],
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![
        write_file(dir.join("metrics.csv"), &metrics_csv(metrics, noise_scales))?,
        write_file(dir.join("summary.csv"), &summary_csv(reports))?,
    ];
    for (k, &scale) in noise_scales.iter().enumerate() {
        let pooled: Vec<f64> = reports
            .iter()
            .filter_map(|(_, r)| r.scales.get(k))
            .flat_map(|s| s.returns.iter().copied())
            .collect();
        if pooled.is_empty() {
            continue;
        }
        let cdf = super::evaluate::empirical_cdf(&pooled)?;
        let name = format!("cdf_{}.csv", scale_label(scale));
        written.push(write_file(dir.join(name), &cdf_csv(&cdf))?);
    }
    Ok(written)
}
