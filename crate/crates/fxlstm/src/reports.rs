//! Text artifacts: traces, SRAM dumps, exploration grids, validation
//! tables, timing summaries and golden packs.

use std::io::{Read, Write};
use std::path::Path;

use fxlstm_core::dse::{DegradationGrid, ValidationReport};
use fxlstm_core::net::Label;
use fxlstm_core::sim::{SramImage, TimingReport, TraceRecord};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn write_trace<W: Write>(out: W, trace: &[TraceRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cycle", "phase", "sram_addr", "writes", "overflow_count"])?;
    for r in trace {
        w.write_record([
            r.cycle.to_string(),
            r.phase.to_string(),
            r.sram_addr.map(|a| a.to_string()).unwrap_or_default(),
            r.writes.to_string(),
            r.overflow_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One hex word per line, addresses ascending.
pub fn sram_hex(img: &SramImage) -> String {
    let mut s = img.to_hex_lines().join("\n");
    s.push('\n');
    s
}

pub fn write_grid_csv<W: Write>(out: W, grid: &DegradationGrid, threshold: f64) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "param_fmt",
        "op_fmt",
        "preset",
        "accuracy_degradation",
        "f1_degradation",
        "pass",
        "saturation_events",
    ])?;
    for c in &grid.cells {
        w.write_record([
            c.config.param_fmt.to_string(),
            c.config.op_fmt.to_string(),
            c.config.preset.map(|p| format!("#{p}")).unwrap_or_default(),
            c.worst.accuracy.to_string(),
            c.worst.f1.to_string(),
            c.worst.passes(threshold).to_string(),
            c.overflow.total().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Markdown matrix, parameter formats as rows; cells are tagged green when
/// both degradations are below the threshold and red otherwise.
pub fn grid_markdown(grid: &DegradationGrid, threshold: f64) -> String {
    let mut s = String::from("| param \\ op |");
    for o in &grid.op_fmts {
        s.push_str(&format!(" {o} |"));
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(grid.op_fmts.len()));
    s.push('\n');
    for (p, row) in grid.param_fmts.iter().zip(grid.rows()) {
        s.push_str(&format!("| {p} |"));
        for c in row {
            let class = if c.worst.passes(threshold) { "green" } else { "red" };
            s.push_str(&format!(
                " acc {:.2}% / F1 {:.2}% ({class}) |",
                c.worst.accuracy * 100.0,
                c.worst.f1 * 100.0
            ));
        }
        s.push('\n');
    }
    s
}

pub fn write_validation_csv<W: Write>(out: W, report: &ValidationReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["component", "max", "avg", "count"])?;
    for (name, s) in report.rows() {
        w.write_record([name.to_string(), s.max.to_string(), s.avg().to_string(), s.count.to_string()])?;
    }
    w.write_record([
        "accuracy_delta".to_string(),
        report.accuracy_delta().to_string(),
        String::new(),
        report.confusion_a.total().to_string(),
    ])?;
    w.write_record([
        "f1_delta".to_string(),
        report.f1_delta().to_string(),
        String::new(),
        report.confusion_a.total().to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn timing_text(t: &TimingReport) -> String {
    format!(
        "cycles: {}\nclock: {} MHz\nlatency: {} ms\nbudget: {} ms\nmargin: {:.2}x\n",
        t.cycles,
        t.clock_hz / 1e6,
        t.latency_ms,
        t.budget_ms,
        t.margin
    )
}

pub fn timing_json(t: &TimingReport) -> serde_json::Value {
    serde_json::json!({
        "cycles": t.cycles,
        "clock_hz": t.clock_hz,
        "latency_ms": t.latency_ms,
        "budget_ms": t.budget_ms,
        "margin": t.margin,
        "meets_budget": t.meets_budget(),
    })
}

/// Row of a golden pack: reference full-precision output for one window.
/// `window_id` is the window's position in dataset order (steps in file
/// order, offsets ascending) for the stride used to produce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenRow {
    pub window_id: usize,
    pub logit_normal: f64,
    pub logit_abnormal: f64,
    pub cls: String,
}

impl GoldenRow {
    pub fn label(&self) -> std::result::Result<Label, String> {
        self.cls.parse()
    }
}

pub fn write_golden<W: Write>(out: W, rows: &[GoldenRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["window_id", "logit_normal", "logit_abnormal", "cls"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_golden<R: Read>(input: R, path: &Path) -> Result<Vec<GoldenRow>> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let mut rows = Vec::new();
    for rec in rd.deserialize::<GoldenRow>() {
        let row = rec.map_err(|e| Error::schema(path, e.position().map(|p| p.line()), e))?;
        row.label().map_err(|e| Error::schema(path, None, e))?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_round_trip() {
        let rows = vec![
            GoldenRow {
                window_id: 0,
                logit_normal: 0.1 + 0.2,
                logit_abnormal: -1e-17,
                cls: "normal".into(),
            },
            GoldenRow {
                window_id: 5,
                logit_normal: -0.5,
                logit_abnormal: 2.0 / 3.0,
                cls: "abnormal".into(),
            },
        ];
        let mut buf = Vec::new();
        write_golden(&mut buf, &rows).unwrap();
        assert_eq!(read_golden(&buf[..], Path::new("g.csv")).unwrap(), rows);
        let mut empty = Vec::new();
        write_golden(&mut empty, &[]).unwrap();
        assert!(read_golden(&empty[..], Path::new("g.csv")).unwrap().is_empty());
    }

    #[test]
    fn timing_defaults() {
        let t = TimingReport::new(9624, 10e6, 3.9);
        let s = timing_text(&t);
        assert!(s.contains("latency: 0.9624 ms"));
        assert!(s.contains("margin: 4.05x"));
    }
}
