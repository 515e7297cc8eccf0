//! Parameter sweeps over one config axis, optionally across policies.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::config::{parse_value, set_path, ScenarioConfig};
use crate::harness::metrics::RunMetrics;
use crate::harness::output::{fmt_f64, line_chart, metric_header, metric_values};
use crate::harness::sim::run_scenario;
use crate::policies::PolicyKind;

/// z-value for two-sided 95% normal intervals.
pub const Z95: f64 = 1.96;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub axis: String,
    pub values: Vec<String>,
    pub seeds: u64,
    /// Compare these policies on every cell; `None` keeps the config's policy.
    pub policies: Option<Vec<PolicyKind>>,
}

#[derive(Clone, Debug)]
pub struct SweepCell {
    pub group: String,
    pub value: String,
    pub seed: u64,
    pub result: std::result::Result<RunMetrics, String>,
}

/// Runs every (policy, value, seed) cell in parallel. Cell order in the
/// result is fixed; failed cells carry their error and do not stop the sweep.
pub fn run_sweep(template: &ScenarioConfig, spec: &SweepSpec) -> Result<Vec<SweepCell>> {
    let groups: Vec<Option<PolicyKind>> = match &spec.policies {
        Some(p) => p.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let mut jobs = Vec::new();
    for g in &groups {
        for v in &spec.values {
            for seed in 0..spec.seeds {
                jobs.push((*g, v.clone(), seed));
            }
        }
    }
    // Axis errors that concern the config itself surface before any run.
    if let Some(v) = spec.values.first() {
        set_path(template, &spec.axis, parse_value(v))?;
    }
    Ok(jobs
        .into_par_iter()
        .map(|(group, value, seed)| {
            let cell = |cfg: Result<ScenarioConfig>| -> std::result::Result<RunMetrics, String> {
                let mut cfg = cfg.map_err(|e| e.to_string())?;
                if let Some(k) = group {
                    cfg.policy.kind = k;
                }
                cfg.run.seed = seed;
                run_scenario(&cfg).map(|o| o.metrics).map_err(|e| e.to_string())
            };
            let result = cell(set_path(template, &spec.axis, parse_value(&value)));
            SweepCell {
                group: group.unwrap_or(template.policy.kind).as_str().to_string(),
                value,
                seed,
                result,
            }
        })
        .collect())
}

/// Mean and 95% half-width; the half-width is 0 below two samples.
pub fn mean_ci(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return Some((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, Z95 * (var / n).sqrt()))
}

pub const SUMMARY_METRICS: [&str; 7] = [
    "latency",
    "latency_streaming",
    "latency_bursty",
    "delivery_ratio",
    "delivery_streaming",
    "delivery_bursty",
    "goodput",
];

fn metric(m: &RunMetrics, name: &str) -> Option<f64> {
    match name {
        "latency" => m.latency,
        "latency_streaming" => m.latency_streaming,
        "latency_bursty" => m.latency_bursty,
        "delivery_ratio" => m.delivery_ratio,
        "delivery_streaming" => m.delivery_streaming,
        "delivery_bursty" => m.delivery_bursty,
        "goodput" => Some(m.goodput),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub group: String,
    pub value: String,
    pub runs: usize,
    pub failed: usize,
    /// `(mean, half-width)` per entry of [`SUMMARY_METRICS`].
    pub stats: Vec<Option<(f64, f64)>>,
}

impl SummaryRow {
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        SUMMARY_METRICS.iter().position(|&m| m == name).and_then(|k| self.stats[k])
    }
}

/// Aggregates cells by (group, value) in first-seen order.
pub fn summarize(cells: &[SweepCell]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for c in cells {
        let k = (c.group.clone(), c.value.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(group, value)| {
            let mine: Vec<&SweepCell> = cells.iter().filter(|c| c.group == group && c.value == value).collect();
            let ok: Vec<&RunMetrics> = mine.iter().filter_map(|c| c.result.as_ref().ok()).collect();
            let stats = SUMMARY_METRICS
                .iter()
                .map(|name| mean_ci(&ok.iter().filter_map(|m| metric(m, name)).collect::<Vec<_>>()))
                .collect();
            SummaryRow {
                runs: ok.len(),
                failed: mine.len() - ok.len(),
                group,
                value,
                stats,
            }
        })
        .collect()
}

fn csv_bytes(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn render_cells(axis: &str, cells: &[SweepCell]) -> Result<Vec<u8>> {
    let mut header: Vec<String> = vec!["group".into(), axis.into(), "seed".into(), "error".into()];
    header.extend(metric_header().into_iter().map(String::from));
    let width = header.len();
    let rows = cells
        .iter()
        .map(|c| {
            let mut row = vec![c.group.clone(), c.value.clone(), c.seed.to_string()];
            match &c.result {
                Ok(m) => {
                    row.push(String::new());
                    row.extend(metric_values(m));
                }
                Err(e) => {
                    row.push(e.clone());
                    row.resize(width, String::new());
                }
            }
            row
        })
        .collect();
    csv_bytes(header, rows)
}

pub fn render_summary(axis: &str, rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut header: Vec<String> = vec!["group".into(), axis.into(), "runs".into(), "failed".into()];
    for m in SUMMARY_METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_ci"));
    }
    let body = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.group.clone(), r.value.clone(), r.runs.to_string(), r.failed.to_string()];
            for s in &r.stats {
                match s {
                    Some((m, h)) => row.extend([fmt_f64(*m), fmt_f64(*h)]),
                    None => row.extend([String::new(), String::new()]),
                }
            }
            row
        })
        .collect();
    csv_bytes(header, body)
}

/// Writes `sweep.csv` (one row per cell) and `summary.csv` into `dir`.
pub fn write_sweep(dir: &Path, axis: &str, cells: &[SweepCell]) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let cells_path = dir.join("sweep.csv");
    let summary_path = dir.join("summary.csv");
    std::fs::write(&cells_path, render_cells(axis, cells)?)?;
    std::fs::write(&summary_path, render_summary(axis, &summarize(cells))?)?;
    Ok((cells_path, summary_path))
}

/// Draws one SVG per summary metric from a sweep's per-cell CSV.
pub fn plot_sweep(sweep_csv: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut reader = csv::Reader::from_path(sweep_csv)?;
    let headers = reader.headers()?.clone();
    let axis = headers.get(1).unwrap_or("value").to_string();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (group_col, error_col) = (col("group"), col("error"));
    let (Some(group_col), Some(error_col)) = (group_col, error_col) else {
        return Err(Error::Format { path: sweep_csv.to_path_buf(), line: 1, message: "missing group/error columns".into() });
    };
    let mut cells = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |message: &str| Error::Format { path: sweep_csv.to_path_buf(), line: k + 2, message: message.into() };
        let value = rec.get(1).ok_or_else(|| bad("missing axis value"))?.to_string();
        let seed: u64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad seed"))?;
        let error = rec.get(error_col).unwrap_or("");
        let result = if error.is_empty() {
            let num = |name: &str| col(name).and_then(|c| rec.get(c)).and_then(|s| s.parse::<f64>().ok());
            Ok(RunMetrics {
                latency: num("latency"),
                latency_streaming: num("latency_streaming"),
                latency_bursty: num("latency_bursty"),
                delivery_ratio: num("delivery_ratio"),
                delivery_streaming: num("delivery_streaming"),
                delivery_bursty: num("delivery_bursty"),
                goodput: num("goodput").unwrap_or(0.0),
                ..Default::default()
            })
        } else {
            Err(error.to_string())
        };
        cells.push(SweepCell { group: rec.get(group_col).unwrap_or("").to_string(), value, seed, result });
    }
    let rows = summarize(&cells);
    let mut groups: Vec<String> = Vec::new();
    for r in &rows {
        if !groups.contains(&r.group) {
            groups.push(r.group.clone());
        }
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for name in ["latency", "delivery_ratio", "goodput", "latency_bursty", "delivery_bursty"] {
        let series: Vec<(String, Vec<(f64, f64)>)> = groups
            .iter()
            .map(|g| {
                let pts = rows
                    .iter()
                    .filter(|r| &r.group == g)
                    .enumerate()
                    .filter_map(|(k, r)| {
                        let x = r.value.parse::<f64>().unwrap_or(k as f64);
                        r.get(name).map(|(m, _)| (x, m))
                    })
                    .collect();
                (g.clone(), pts)
            })
            .collect();
        if series.iter().all(|(_, p)| p.is_empty()) {
            continue;
        }
        let path = out_dir.join(format!("{name}.svg"));
        line_chart(&path, &format!("{name} vs {axis}"), &axis, name, &series)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.topology.nodes = 12;
        cfg.traffic.horizon = 60;
        cfg.policy.virtual_steps = 30;
        cfg
    }

    #[test]
    fn ci_formula() {
        let (m, h) = mean_ci(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((h - 1.96 * sd / 2.0).abs() < 1e-12);
        assert_eq!(mean_ci(&[7.0]), Some((7.0, 0.0)));
        assert_eq!(mean_ci(&[]), None);
    }

    #[test]
    fn single_cell_and_empty_sweeps() {
        let spec = SweepSpec { axis: "traffic.bursty_load".into(), values: vec!["2".into()], seeds: 1, policies: None };
        let cells = run_sweep(&tiny(), &spec).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(summarize(&cells).len(), 1);
        let empty = SweepSpec { values: vec![], ..spec };
        let none = run_sweep(&tiny(), &empty).unwrap();
        assert!(none.is_empty());
        let text = String::from_utf8(render_summary("traffic.bursty_load", &summarize(&none)).unwrap()).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn paired_policies_and_failed_cells() {
        let spec = SweepSpec {
            axis: "topology.nodes".into(),
            values: vec!["12".into(), "1".into()],
            seeds: 2,
            policies: Some(vec![PolicyKind::AntBp, PolicyKind::SpBp]),
        };
        let cells = run_sweep(&tiny(), &spec).unwrap();
        assert_eq!(cells.len(), 8);
        assert!(cells.iter().filter(|c| c.value == "1").all(|c| c.result.is_err()));
        let ok: Vec<_> = cells.iter().filter(|c| c.value == "12").collect();
        assert!(ok.iter().all(|c| c.result.is_ok()));
        // same seed, different policy: same traffic injected
        let inj = |g: &str, s: u64| ok.iter().find(|c| c.group == g && c.seed == s).unwrap().result.as_ref().unwrap().injected;
        assert_eq!(inj("ant-bp", 1), inj("sp-bp", 1));
        let rows = summarize(&cells);
        assert_eq!(rows.iter().filter(|r| r.failed == 2).count(), 2);
    }

    #[test]
    fn plots_from_cell_csv() {
        let spec = SweepSpec {
            axis: "traffic.streaming_load".into(),
            values: vec!["0.5".into(), "1.0".into()],
            seeds: 2,
            policies: Some(vec![PolicyKind::AntBp, PolicyKind::SpBp]),
        };
        let cells = run_sweep(&tiny(), &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (cells_path, _) = write_sweep(dir.path(), &spec.axis, &cells).unwrap();
        let plots = plot_sweep(&cells_path, &dir.path().join("plots")).unwrap();
        assert!(plots.iter().any(|p| p.ends_with("goodput.svg")));
    }
}
