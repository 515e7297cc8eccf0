//! CSV traces, run manifests and SVG plots.
//!
//! Floats are written with fixed precision so equal runs give equal bytes.

use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataplane::Packet;
use crate::error::{Error, Result};
use crate::harness::config::ScenarioConfig;
use crate::harness::metrics::{latency_bins, BinBy, RunMetrics, BIN_WIDTH};
use crate::harness::sim::{RunOutput, SlotRow};
use crate::dynamics::DynamicsEvent;
use crate::traffic::FlowSpec;

pub const PACKETS_CSV: &str = "packets.csv";
pub const SLOTS_CSV: &str = "slots.csv";
pub const EVENTS_CSV: &str = "events.csv";
pub const FLOWS_CSV: &str = "flows.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const BINS_ARRIVAL_CSV: &str = "latency_by_arrival.csv";
pub const BINS_DELIVERY_CSV: &str = "latency_by_delivery.csv";
pub const MANIFEST: &str = "manifest.toml";

/// Files compared byte for byte by a re-run check.
pub const TRACE_FILES: [&str; 5] = [PACKETS_CSV, SLOTS_CSV, EVENTS_CSV, FLOWS_CSV, METRICS_CSV];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.6}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn render(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn render_packets(packets: &[Packet]) -> Result<Vec<u8>> {
    render(
        &["id", "src", "dst", "kind", "injected_at", "delivered_at", "hops"],
        packets.iter().map(|p| {
            vec![
                p.id.to_string(),
                p.src.to_string(),
                p.commodity.to_string(),
                p.kind.as_str().to_string(),
                p.injected_at.to_string(),
                p.delivered_at.map(|d| d.to_string()).unwrap_or_default(),
                p.hops.to_string(),
            ]
        }),
    )
}

pub fn render_slots(slots: &[SlotRow]) -> Result<Vec<u8>> {
    render(
        &["t", "arrivals", "deliveries", "backlog", "cost", "scheduled", "failed"],
        slots.iter().map(|s| {
            vec![
                s.t.to_string(),
                s.arrivals.to_string(),
                s.deliveries.to_string(),
                s.backlog.to_string(),
                fmt_f64(s.cost),
                s.scheduled.to_string(),
                s.failed.to_string(),
            ]
        }),
    )
}

pub fn render_events(events: &[DynamicsEvent]) -> Result<Vec<u8>> {
    render(
        &["t", "kind", "subject", "detail"],
        events.iter().map(|e| vec![e.t.to_string(), e.kind.to_string(), e.subject.clone(), e.detail.clone()]),
    )
}

pub fn render_flows(flows: &[FlowSpec]) -> Result<Vec<u8>> {
    render(
        &["flow", "src", "dst", "kind", "base_rate", "load", "burst_start", "burst_len"],
        flows.iter().enumerate().map(|(k, f)| {
            vec![
                k.to_string(),
                f.src.to_string(),
                f.dst.to_string(),
                f.kind.as_str().to_string(),
                fmt_f64(f.base_rate),
                fmt_f64(f.load),
                f.burst_start.to_string(),
                f.burst_len.to_string(),
            ]
        }),
    )
}

pub const METRIC_COLUMNS: [&str; 16] = [
    "injected",
    "delivered",
    "delivery_ratio",
    "delivery_streaming",
    "delivery_bursty",
    "latency",
    "latency_streaming",
    "latency_bursty",
    "goodput",
    "mean_backlog",
    "final_backlog",
    "mean_cost",
    "flow_residual",
    "stable",
    "virtual_exchanges",
    "ants_emitted",
];

pub fn metric_values(m: &RunMetrics) -> Vec<String> {
    vec![
        m.injected.to_string(),
        m.delivered.to_string(),
        fmt_opt(m.delivery_ratio),
        fmt_opt(m.delivery_streaming),
        fmt_opt(m.delivery_bursty),
        fmt_opt(m.latency),
        fmt_opt(m.latency_streaming),
        fmt_opt(m.latency_bursty),
        fmt_f64(m.goodput),
        fmt_f64(m.mean_backlog),
        m.final_backlog.to_string(),
        fmt_f64(m.mean_cost),
        fmt_opt(m.flow_residual),
        m.stable.to_string(),
        m.virtual_exchanges.to_string(),
        m.ants_emitted.to_string(),
    ]
}

pub fn metric_header() -> Vec<&'static str> {
    METRIC_COLUMNS.to_vec()
}

pub fn render_metrics(m: &RunMetrics) -> Result<Vec<u8>> {
    render(&metric_header(), std::iter::once(metric_values(m)))
}

fn render_bins(packets: &[Packet], by: BinBy) -> Result<Vec<u8>> {
    render(
        &["bin_mid", "count", "mean_latency"],
        latency_bins(packets, BIN_WIDTH, by)
            .into_iter()
            .map(|b| vec![fmt_f64(b.mid), b.count.to_string(), fmt_f64(b.mean_latency)]),
    )
}

/// All per-run files as `(name, bytes)`.
pub fn render_run(out: &RunOutput) -> Result<Vec<(&'static str, Vec<u8>)>> {
    Ok(vec![
        (PACKETS_CSV, render_packets(&out.packets)?),
        (SLOTS_CSV, render_slots(&out.slots)?),
        (EVENTS_CSV, render_events(&out.events)?),
        (FLOWS_CSV, render_flows(&out.flows)?),
        (METRICS_CSV, render_metrics(&out.metrics)?),
        (BINS_ARRIVAL_CSV, render_bins(&out.packets, BinBy::Arrival)?),
        (BINS_DELIVERY_CSV, render_bins(&out.packets, BinBy::Delivery)?),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: ScenarioConfig,
}

impl Manifest {
    pub fn new(config: &ScenarioConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
        }
    }
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::ConfigParse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let m: Manifest = toml::from_str(&text).map_err(|e| Error::ConfigParse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    m.config.validate()?;
    Ok(m)
}

/// Writes the manifest and every trace of a run into `dir`.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = toml::to_string(&Manifest::new(&out.config)).map_err(|e| Error::invalid(e.to_string()))?;
    std::fs::write(dir.join(MANIFEST), manifest)?;
    for (name, bytes) in render_run(out)? {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

/// One SVG line chart: a series per group over a numeric x axis.
pub fn line_chart(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> Result<()> {
    let plot_err = |e: &dyn std::fmt::Display| Error::Plot(e.to_string());
    let points = series.iter().flat_map(|(_, s)| s.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-6);
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, (y0 - pad)..(y1 + pad))
        .map_err(|e| plot_err(&e))?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(|e| plot_err(&e))?;
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(|e| plot_err(&e))?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}

/// Plots latency against arrival-time bins for one run directory.
pub fn plot_run_bins(out: &RunOutput, dir: &Path) -> Result<PathBuf> {
    let pts: Vec<(f64, f64)> = latency_bins(&out.packets, BIN_WIDTH, BinBy::Arrival)
        .into_iter()
        .map(|b| (b.mid, b.mean_latency))
        .collect();
    let path = dir.join("latency_by_arrival.svg");
    line_chart(&path, "Latency by arrival time", "arrival slot (bin mid)", "mean latency", &[(out.config.policy.kind.as_str().to_string(), pts)])?;
    Ok(path)
}
