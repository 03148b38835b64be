use super::config::ExperimentConfig;
use super::metrics::mean_std;
use crate::error::{Error, ParseError, Result};
use crate::ndtensor::Grid;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const CSV_HEADER: &str = "setup,method,metric,seed,value";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub setup: String,
    pub method: String,
    pub metric: String,
    pub seed: u64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub method: String,
    pub seed: u64,
    pub epoch: usize,
    pub metric: String,
    pub value: f64,
}

/// Wall-clock measurements. They go to the markdown report only, never the
/// CSV, so reruns stay byte-identical.
#[derive(Clone, Debug, PartialEq)]
pub struct Timing {
    pub method: String,
    pub seed: u64,
    pub label: String,
    pub seconds: f64,
}

/// Tiles of `h × w` images shown per method in the sample sheet.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSheet {
    pub blocks: Vec<(String, Vec<Grid>)>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub rows: Vec<MetricRow>,
    pub traces: Vec<TraceRow>,
    pub timings: Vec<Timing>,
    pub notes: Vec<String>,
    pub samples: SampleSheet,
    /// Extra files such as checkpoints, written beside the report.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl RunReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            config: config.clone(),
            rows: Vec::new(),
            traces: Vec::new(),
            timings: Vec::new(),
            notes: Vec::new(),
            samples: SampleSheet::default(),
            artifacts: Vec::new(),
        }
    }

    pub fn push(&mut self, method: &str, metric: &str, seed: u64, value: f64) {
        self.rows.push(MetricRow {
            setup: self.config.setup.to_string(),
            method: method.into(),
            metric: metric.into(),
            seed,
            value,
        });
    }

    pub fn push_trace(&mut self, method: &str, metric: &str, seed: u64, values: &[f64]) {
        for (i, &value) in values.iter().enumerate() {
            self.traces.push(TraceRow {
                method: method.into(),
                seed,
                epoch: i + 1,
                metric: metric.into(),
                value,
            });
        }
    }

    pub fn push_timing(&mut self, method: &str, label: &str, seed: u64, seconds: f64) {
        self.timings.push(Timing {
            method: method.into(),
            seed,
            label: label.into(),
            seconds,
        });
    }

    /// Per-seed values of one metric, in insertion order.
    pub fn values(&self, method: &str, metric: &str) -> Vec<(u64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.metric == metric)
            .map(|r| (r.seed, r.value))
            .collect()
    }

    pub fn value(&self, method: &str, metric: &str, seed: u64) -> Option<f64> {
        self.values(method, metric)
            .into_iter()
            .find(|&(s, _)| s == seed)
            .map(|(_, v)| v)
    }

    pub fn summary(&self, method: &str, metric: &str) -> (f64, f64) {
        let v: Vec<f64> = self
            .values(method, metric)
            .into_iter()
            .map(|(_, v)| v)
            .collect();
        mean_std(&v)
    }

    /// Mean seconds of one timing label for a method across seeds.
    pub fn mean_timing(&self, method: &str, label: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .timings
            .iter()
            .filter(|t| t.method == method && t.label == label)
            .map(|t| t.seconds)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn methods(&self) -> Vec<String> {
        unique(self.rows.iter().map(|r| r.method.as_str()))
    }

    pub fn metrics(&self) -> Vec<String> {
        unique(self.rows.iter().map(|r| r.metric.as_str()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.setup, r.method, r.metric, r.seed, r.value
            );
        }
        out
    }

    pub fn trace_tsv(&self) -> String {
        let mut out = String::from("setup\tmethod\tseed\tepoch\tmetric\tvalue\n");
        for t in &self.traces {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                self.config.setup, t.method, t.seed, t.epoch, t.metric, t.value
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let cfg = &self.config;
        let mut out = format!("# Setup {}\n\n", cfg.setup);
        let methods = self.methods();
        let metrics = self.metrics();
        if !methods.is_empty() {
            out.push_str("| Method |");
            for m in &metrics {
                let _ = write!(out, " {} |", metric_label(m, cfg));
            }
            out.push_str("\n|---|");
            out.push_str(&"---|".repeat(metrics.len()));
            out.push('\n');
            for method in &methods {
                let _ = write!(out, "| {method} |");
                for metric in &metrics {
                    let v = self.values(method, metric);
                    if v.is_empty() {
                        out.push_str(" – |");
                    } else {
                        let (m, s) = self.summary(method, metric);
                        let _ = write!(out, " {} ± {} |", fmt_sig(m), fmt_sig(s));
                    }
                }
                out.push('\n');
            }
        }

        let labels = unique(self.timings.iter().map(|t| t.label.as_str()));
        for label in labels {
            let rows: Vec<String> = unique(
                self.timings
                    .iter()
                    .filter(|t| t.label == label)
                    .map(|t| t.method.as_str()),
            );
            let base = rows.first().and_then(|m| self.mean_timing(m, &label));
            let _ = write!(
                out,
                "\n### Wall-clock: {label}\n\n| Method | seconds | rel. |\n|---|---|---|\n"
            );
            for m in &rows {
                let t = self.mean_timing(m, &label).unwrap_or(f64::NAN);
                let rel = base.map_or(f64::NAN, |b| t / b);
                let _ = writeln!(out, "| {m} | {} | {:.2} |", fmt_sig(t), rel);
            }
        }

        if !self.notes.is_empty() {
            out.push_str("\n### Notes\n\n");
            for n in &self.notes {
                let _ = writeln!(out, "- {n}");
            }
        }

        let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
        let _ = write!(
            out,
            "\n### Provenance\n\n- config hash: `{}`\n- seeds: {}\n- code version: refinery-core {}\n\n```\n{}```\n",
            cfg.hash(),
            seeds.join(", "),
            env!("CARGO_PKG_VERSION"),
            cfg.canonical_text()
        );
        out
    }

    /// Binary PGM of the sample sheet, or `None` when there are no samples.
    pub fn samples_pgm(&self) -> Option<Vec<u8>> {
        render_sheet(&self.samples)
    }

    /// Writes `report.csv`, `report.md`, `trace.tsv` and, when samples
    /// exist, `samples.pgm`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, bytes)?;
            written.push(p);
            Ok(())
        };
        put("report.csv", self.to_csv().as_bytes())?;
        put("report.md", self.to_markdown().as_bytes())?;
        put("trace.tsv", self.trace_tsv().as_bytes())?;
        if let Some(pgm) = self.samples_pgm() {
            put("samples.pgm", &pgm)?;
        }
        for (name, bytes) in &self.artifacts {
            put(name, bytes)?;
        }
        Ok(written)
    }
}

fn unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

fn metric_label(metric: &str, cfg: &ExperimentConfig) -> String {
    match metric {
        "mse" => "MSE ↓".into(),
        "mse_sigma_train" => format!("MSE @ σ={:.2} ↓", cfg.sigma_train),
        "mse_sigma_shift" => format!("MSE @ σ={:.2} ↓", cfg.sigma_shift),
        "psnr" => "PSNR (dB) ↑".into(),
        "hf_psnr" => "HF-PSNR (dB) ↑".into(),
        "epochs_to_target" => format!("Epochs to {} ↓", cfg.mse_target),
        "dequantized_mse" => "Dequantised MSE ↓".into(),
        "grad_var" => "Grad var ↓".into(),
        other => other.into(),
    }
}

fn fmt_sig(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "–".into()
        } else {
            "∞".into()
        };
    }
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{v:.3e}");
    }
    let decimals = (3 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Parses CSV produced by [`RunReport::to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(CSV_HEADER) => {}
        other => {
            return Err(ParseError::Malformed {
                offset: 0,
                detail: format!("expected header {CSV_HEADER:?}, got {other:?}"),
            }
            .into())
        }
    }
    let mut offset = CSV_HEADER.len() + 1;
    let mut rows = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let bad = |detail: String| Error::from(ParseError::Malformed { offset, detail });
        if f.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", f.len())));
        }
        rows.push(MetricRow {
            setup: f[0].into(),
            method: f[1].into(),
            metric: f[2].into(),
            seed: f[3]
                .parse()
                .map_err(|_| bad(format!("bad seed {:?}", f[3])))?,
            value: f[4]
                .parse()
                .map_err(|_| bad(format!("bad value {:?}", f[4])))?,
        });
        offset += line.len() + 1;
    }
    Ok(rows)
}

const TILE_GAP: usize = 2;
const BLOCK_GAP: usize = 8;

fn render_sheet(sheet: &SampleSheet) -> Option<Vec<u8>> {
    let first = sheet.blocks.iter().flat_map(|(_, t)| t.first()).next()?;
    let (th, tw) = (first.shape()[0], first.shape()[1]);
    let per_row = 8;
    let block_w = per_row * (tw + TILE_GAP) - TILE_GAP;
    let rows_needed = |n: usize| n.div_ceil(per_row).max(1);
    let max_rows = sheet
        .blocks
        .iter()
        .map(|(_, t)| rows_needed(t.len()))
        .max()?;
    let height = max_rows * (th + TILE_GAP) - TILE_GAP;
    let n = sheet.blocks.len();
    let width = n * block_w + (n - 1) * BLOCK_GAP;
    let mut pixels = vec![0u8; width * height];
    for (b, (_, tiles)) in sheet.blocks.iter().enumerate() {
        let x0 = b * (block_w + BLOCK_GAP);
        for (i, tile) in tiles.iter().enumerate() {
            let oy = (i / per_row) * (th + TILE_GAP);
            let ox = x0 + (i % per_row) * (tw + TILE_GAP);
            for y in 0..th.min(tile.shape()[0]) {
                for x in 0..tw.min(tile.shape()[1]) {
                    let v = tile.data()[y * tile.shape()[1] + x].clamp(0.0, 1.0);
                    pixels[(oy + y) * width + ox + x] = (v * 255.0).round() as u8;
                }
            }
        }
    }
    let labels: Vec<&str> = sheet.blocks.iter().map(|(l, _)| l.as_str()).collect();
    let mut out = format!(
        "P5\n# left to right: {}\n{width} {height}\n255\n",
        labels.join(", ")
    )
    .into_bytes();
    out.extend_from_slice(&pixels);
    Some(out)
}
