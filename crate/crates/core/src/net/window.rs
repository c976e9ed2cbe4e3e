use alloc::vec::Vec;
use core::fmt;

use crate::fxp::{quantize, FxpError, FxpValue, RoundingMode, INPUT_FORMAT};

/// Default number of samples per window.
pub const WINDOW_LEN: usize = 96;
/// Default shift between consecutive windows of a step.
pub const DEFAULT_STRIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Normal),
            1 => Some(Label::Abnormal),
            _ => None,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Label {
    type Err = alloc::string::String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "0" | "n" => Ok(Label::Normal),
            "abnormal" | "1" | "a" => Ok(Label::Abnormal),
            other => Err(alloc::format!("unknown label {other:?} (normal|abnormal)")),
        }
    }
}

/// One walking step: `samples` is row-major, `channels` values per row.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitStep {
    pub id: u64,
    pub label: Label,
    pub channels: usize,
    pub samples: Vec<f64>,
}

impl GaitStep {
    pub fn len(&self) -> usize {
        self.samples.len() / self.channels.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.samples[t * self.channels..(t + 1) * self.channels]
    }
}

/// A classification input: `timesteps x channels` samples in `FxP(10,8)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GaitWindow {
    samples: Vec<FxpValue>,
    timesteps: usize,
    channels: usize,
    pub label: Label,
    pub step_id: u64,
    /// Offset of the first sample inside its step.
    pub offset: usize,
}

impl GaitWindow {
    /// Quantize row-major real samples into the input format.
    pub fn from_reals(
        samples: &[f64],
        channels: usize,
        label: Label,
        step_id: u64,
        mode: RoundingMode,
    ) -> Result<Self, FxpError> {
        assert!(channels > 0 && samples.len() % channels == 0, "ragged window");
        let samples = samples
            .iter()
            .map(|&x| quantize(x, INPUT_FORMAT, mode).map(|r| r.value))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            timesteps: samples.len() / channels,
            samples,
            channels,
            label,
            step_id,
            offset: 0,
        })
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn sample(&self, t: usize) -> &[FxpValue] {
        &self.samples[t * self.channels..(t + 1) * self.channels]
    }

    pub fn samples(&self) -> &[FxpValue] {
        &self.samples
    }

    pub fn real_sample(&self, t: usize) -> impl Iterator<Item = f64> + '_ {
        self.sample(t).iter().map(|v| v.to_real())
    }

    pub fn real_samples(&self) -> Vec<f64> {
        self.samples.iter().map(|v| v.to_real()).collect()
    }
}

/// Cut a step into windows at offsets `0, stride, 2*stride, ...` that fit
/// entirely inside it. A step shorter than one window yields nothing.
pub fn make_windows(
    step: &GaitStep,
    window_len: usize,
    stride: usize,
    mode: RoundingMode,
) -> Result<Vec<GaitWindow>, FxpError> {
    assert!(stride > 0 && window_len > 0, "stride and window length must be positive");
    let len = step.len();
    if len < window_len {
        log::warn!(
            "step {} has {len} samples, fewer than one {window_len}-sample window; skipped",
            step.id
        );
        return Ok(Vec::new());
    }
    let c = step.channels;
    (0..=(len - window_len) / stride)
        .map(|k| {
            let offset = k * stride;
            let rows = &step.samples[offset * c..(offset + window_len) * c];
            let mut w = GaitWindow::from_reals(rows, c, step.label, step.id, mode)?;
            w.offset = offset;
            Ok(w)
        })
        .collect()
}
