//! Dataset CSV: `step_id,sample_idx,gx,gy,gz,mag,label`, one row per sample,
//! rows of a step contiguous with `sample_idx` counting from 0.

use std::io::{Read, Write};
use std::path::Path;

use fxlstm_core::net::{make_windows, GaitStep, GaitWindow, Label};
use fxlstm_core::RoundingMode;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHANNELS: [&str; 4] = ["gx", "gy", "gz", "mag"];

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Row {
    step_id: u64,
    sample_idx: usize,
    gx: f64,
    gy: f64,
    gz: f64,
    mag: f64,
    label: String,
}

pub fn write_steps<W: Write>(out: W, steps: &[GaitStep]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in steps {
        assert_eq!(s.channels, 4, "dataset rows carry four channels");
        for t in 0..s.len() {
            let r = s.row(t);
            w.serialize(Row {
                step_id: s.id,
                sample_idx: t,
                gx: r[0],
                gy: r[1],
                gz: r[2],
                mag: r[3],
                label: s.label.name().to_string(),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_steps<R: Read>(input: R, path: &Path) -> Result<Vec<GaitStep>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| Error::schema(path, Some(1), e))?.clone();
    let expected = ["step_id", "sample_idx", "gx", "gy", "gz", "mag", "label"];
    if header.iter().map(str::trim).ne(expected) {
        return Err(Error::schema(
            path,
            Some(1),
            format!("header must be {}", expected.join(",")),
        ));
    }
    let mut steps: Vec<GaitStep> = Vec::new();
    for rec in rd.deserialize::<Row>() {
        let row = rec.map_err(|e| {
            let line = e.position().map(|p| p.line());
            Error::schema(path, line, e)
        })?;
        // Header is line 1; this is only used for messages.
        let line = Some(steps.iter().map(|s| s.len() as u64).sum::<u64>() + 2);
        let label: Label = row.label.parse().map_err(|e| Error::schema(path, line, e))?;
        let values = [row.gx, row.gy, row.gz, row.mag];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::schema(path, line, "non-finite sample"));
        }
        match steps.last_mut() {
            Some(s) if s.id == row.step_id => {
                if row.sample_idx != s.len() {
                    return Err(Error::schema(
                        path,
                        line,
                        format!("step {}: expected sample_idx {}, found {}", s.id, s.len(), row.sample_idx),
                    ));
                }
                if s.label != label {
                    return Err(Error::schema(path, line, format!("step {}: label changes within the step", s.id)));
                }
                s.samples.extend(values);
            }
            _ => {
                if steps.iter().any(|s| s.id == row.step_id) {
                    return Err(Error::schema(path, line, format!("step {} is not contiguous", row.step_id)));
                }
                if row.sample_idx != 0 {
                    return Err(Error::schema(
                        path,
                        line,
                        format!("step {} must start at sample_idx 0", row.step_id),
                    ));
                }
                steps.push(GaitStep {
                    id: row.step_id,
                    label,
                    channels: 4,
                    samples: values.to_vec(),
                });
            }
        }
    }
    Ok(steps)
}

pub fn load_steps(path: &Path) -> Result<Vec<GaitStep>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_steps(std::io::BufReader::new(f), path)
}

pub fn save_steps(path: &Path, steps: &[GaitStep]) -> Result<()> {
    let mut buf = Vec::new();
    write_steps(&mut buf, steps).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    crate::write_file(path, &buf)
}

/// All windows of all steps, grouped by step in file order.
pub fn windows(steps: &[GaitStep], window_len: usize, stride: usize, mode: RoundingMode) -> Result<Vec<GaitWindow>> {
    let mut out = Vec::new();
    for s in steps {
        let w = make_windows(s, window_len, stride, mode).map_err(|e| Error::Usage(format!("step {}: {e}", s.id)))?;
        out.extend(w);
    }
    Ok(out)
}
