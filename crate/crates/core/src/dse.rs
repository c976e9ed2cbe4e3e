//! Bit-width exploration and cross-path validation.
//!
//! Degradation is `full_precision - quantized` (positive means worse),
//! as fractions, worst case over all benchmarks. F1 treats `Abnormal` as the
//! positive class.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::config::{BitWidthConfig, FcInput, REJECTED_OP_FORMATS, REJECTED_PARAM_FORMATS};
use crate::fxp::{FxpFormat, RoundingMode};
use crate::net::{
    FloatNet, GaitWindow, Gate, Intermediates, Label, ModelParams, NetError, OverflowStats, ParamCounts, QuantizedModel,
    QuantizedNet,
};
use crate::sim::{pack_sram, AccelState, SimError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DseError {
    Length { preds: usize, labels: usize },
    Empty(&'static str),
    Net(NetError),
    Sim(SimError),
}

impl fmt::Display for DseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DseError::Length { preds, labels } => write!(f, "{preds} predictions for {labels} labels"),
            DseError::Empty(what) => write!(f, "{what} is empty"),
            DseError::Net(e) => e.fmt(f),
            DseError::Sim(e) => e.fmt(f),
        }
    }
}

impl From<NetError> for DseError {
    fn from(e: NetError) -> Self {
        DseError::Net(e)
    }
}

impl From<SimError> for DseError {
    fn from(e: SimError) -> Self {
        DseError::Sim(e)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn from_pairs(preds: &[Label], labels: &[Label]) -> Result<Self, DseError> {
        if preds.len() != labels.len() {
            return Err(DseError::Length {
                preds: preds.len(),
                labels: labels.len(),
            });
        }
        if preds.is_empty() {
            return Err(DseError::Empty("prediction set"));
        }
        let mut c = Confusion::default();
        for (&p, &l) in preds.iter().zip(labels) {
            c.record(p, l);
        }
        Ok(c)
    }

    pub fn record(&mut self, pred: Label, label: Label) {
        match (pred, label) {
            (Label::Abnormal, Label::Abnormal) => self.tp += 1,
            (Label::Abnormal, Label::Normal) => self.fp += 1,
            (Label::Normal, Label::Normal) => self.tn += 1,
            (Label::Normal, Label::Abnormal) => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, o: &Confusion) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// `2TP / (2TP + FP + FN)`, zero when undefined.
    pub fn f1(&self) -> f64 {
        let den = 2 * self.tp + self.fp + self.fn_;
        if den == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / den as f64
        }
    }
}

pub fn f1(preds: &[Label], labels: &[Label]) -> Result<f64, DseError> {
    Confusion::from_pairs(preds, labels).map(|c| c.f1())
}

pub fn accuracy(preds: &[Label], labels: &[Label]) -> Result<f64, DseError> {
    Confusion::from_pairs(preds, labels).map(|c| c.accuracy())
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub f1: f64,
    pub overflow: OverflowStats,
}

impl Metrics {
    pub fn from_confusion(confusion: Confusion, overflow: OverflowStats) -> Self {
        Self {
            confusion,
            accuracy: confusion.accuracy(),
            f1: confusion.f1(),
            overflow,
        }
    }
}

/// A trained model together with the windows it is evaluated on.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub name: String,
    pub model: ModelParams,
    pub windows: Vec<GaitWindow>,
}

pub fn eval_full_precision(bench: &Benchmark, fc_input: FcInput) -> Result<Metrics, DseError> {
    let net = FloatNet::new(&bench.model)?.with_fc_input(fc_input);
    let mut conf = Confusion::default();
    for w in &bench.windows {
        conf.record(net.classify(w)?.label, w.label);
    }
    Ok(Metrics::from_confusion(conf, OverflowStats::default()))
}

/// Quantized classification of every window of `bench` under `cfg`.
pub fn eval_config(bench: &Benchmark, cfg: &BitWidthConfig) -> Result<Metrics, DseError> {
    bench.model.check_finite().map_err(NetError::from)?;
    let (q, _) = bench
        .model
        .quantize(cfg.param_fmt, cfg.rounding)
        .expect("finite parameters quantize");
    eval_quantized(&q, &bench.windows, cfg)
}

pub fn eval_quantized(model: &QuantizedModel, windows: &[GaitWindow], cfg: &BitWidthConfig) -> Result<Metrics, DseError> {
    let net = QuantizedNet::new(model, *cfg)?;
    let mut conf = Confusion::default();
    let mut ov = OverflowStats::default();
    for w in windows {
        let r = net.classify(w)?;
        conf.record(r.label, w.label);
        ov.merge(&r.overflow);
    }
    Ok(Metrics::from_confusion(conf, ov))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Degradation {
    pub accuracy: f64,
    pub f1: f64,
}

impl Degradation {
    pub fn between(full: &Metrics, quantized: &Metrics) -> Self {
        Self {
            accuracy: full.accuracy - quantized.accuracy,
            f1: full.f1 - quantized.f1,
        }
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.accuracy < threshold && self.f1 < threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub config: BitWidthConfig,
    /// Worst case over benchmarks, accuracy and F1 taken separately.
    pub worst: Degradation,
    pub per_benchmark: Vec<Degradation>,
    pub metrics: Vec<Metrics>,
    pub overflow: OverflowStats,
}

/// Full-precision metrics of every benchmark, the baseline of a sweep.
pub fn baselines(benches: &[Benchmark], fc_input: FcInput) -> Result<Vec<Metrics>, DseError> {
    benches.iter().map(|b| eval_full_precision(b, fc_input)).collect()
}

pub fn evaluate_cell(benches: &[Benchmark], baselines: &[Metrics], cfg: BitWidthConfig) -> Result<GridCell, DseError> {
    if benches.is_empty() {
        return Err(DseError::Empty("benchmark set"));
    }
    assert_eq!(benches.len(), baselines.len(), "one baseline per benchmark");
    let metrics = benches.iter().map(|b| eval_config(b, &cfg)).collect::<Result<Vec<_>, _>>()?;
    let per_benchmark: Vec<Degradation> = baselines
        .iter()
        .zip(&metrics)
        .map(|(fp, q)| Degradation::between(fp, q))
        .collect();
    let worst = per_benchmark.iter().fold(
        Degradation {
            accuracy: f64::NEG_INFINITY,
            f1: f64::NEG_INFINITY,
        },
        |w, d| Degradation {
            accuracy: w.accuracy.max(d.accuracy),
            f1: w.f1.max(d.f1),
        },
    );
    let mut overflow = OverflowStats::default();
    for m in &metrics {
        overflow.merge(&m.overflow);
    }
    Ok(GridCell {
        config: cfg,
        worst,
        per_benchmark,
        metrics,
        overflow,
    })
}

/// Degradation over parameter formats (rows) by operation formats (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationGrid {
    pub param_fmts: Vec<FxpFormat>,
    pub op_fmts: Vec<FxpFormat>,
    /// Row-major.
    pub cells: Vec<GridCell>,
}

impl DegradationGrid {
    /// Configurations in row-major order, the order `cells` must follow.
    pub fn configs(param_fmts: &[FxpFormat], op_fmts: &[FxpFormat], rounding: RoundingMode, fc_input: FcInput) -> Vec<BitWidthConfig> {
        param_fmts
            .iter()
            .flat_map(|&p| {
                op_fmts
                    .iter()
                    .map(move |&o| BitWidthConfig::new(p, o).with_rounding(rounding).with_fc_input(fc_input))
            })
            .collect()
    }

    pub fn cell(&self, param: FxpFormat, op: FxpFormat) -> Option<&GridCell> {
        let r = self.param_fmts.iter().position(|&p| p == param)?;
        let c = self.op_fmts.iter().position(|&o| o == op)?;
        self.cells.get(r * self.op_fmts.len() + c)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[GridCell]> {
        self.cells.chunks(self.op_fmts.len().max(1))
    }
}

/// Parameter formats explored by default: the selected ones plus the
/// rejected one.
pub fn default_param_formats() -> Vec<FxpFormat> {
    let mut v: Vec<FxpFormat> = crate::config::SRAM_PARAM_FORMATS.to_vec();
    v.extend(REJECTED_PARAM_FORMATS);
    v
}

pub fn default_op_formats() -> Vec<FxpFormat> {
    let mut v: Vec<FxpFormat> = Vec::new();
    for (_, o) in crate::config::PRESETS {
        if !v.contains(&o) {
            v.push(o);
        }
    }
    v.extend(REJECTED_OP_FORMATS);
    v
}

/// Sequential sweep; [`DegradationGrid::configs`] and [`evaluate_cell`]
/// allow the cells to be computed elsewhere in any order.
pub fn sweep(
    benches: &[Benchmark],
    param_fmts: &[FxpFormat],
    op_fmts: &[FxpFormat],
    rounding: RoundingMode,
    fc_input: FcInput,
) -> Result<DegradationGrid, DseError> {
    if param_fmts.is_empty() || op_fmts.is_empty() {
        return Err(DseError::Empty("format grid"));
    }
    let base = baselines(benches, fc_input)?;
    let cells = DegradationGrid::configs(param_fmts, op_fmts, rounding, fc_input)
        .into_iter()
        .map(|cfg| evaluate_cell(benches, &base, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DegradationGrid {
        param_fmts: param_fmts.to_vec(),
        op_fmts: op_fmts.to_vec(),
        cells,
    })
}

/// Ordering key by estimated hardware cost: parameter storage bits, then
/// operation width, then fewer fraction bits.
pub fn cost_key(cfg: &BitWidthConfig) -> (usize, u32, u32, u32) {
    let params = ParamCounts::for_dims(Default::default()).total();
    (
        params * cfg.param_fmt.total_bits() as usize,
        cfg.op_fmt.total_bits(),
        cfg.param_fmt.frac_bits(),
        cfg.op_fmt.frac_bits(),
    )
}

/// Configurations whose worst-case accuracy and F1 degradation are both
/// below `threshold`, cheapest first.
pub fn select_configs(grid: &DegradationGrid, threshold: f64) -> Vec<BitWidthConfig> {
    let mut v: Vec<BitWidthConfig> = grid
        .cells
        .iter()
        .filter(|c| c.worst.passes(threshold))
        .map(|c| c.config)
        .collect();
    if v.is_empty() {
        log::warn!("no configuration degrades by less than {threshold}");
    }
    v.sort_by_key(cost_key);
    v
}

/// Execution path feeding a validation report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExecPath {
    FullPrecision,
    QuantizedSoftware,
    Simulator,
}

impl ExecPath {
    pub fn name(&self) -> &'static str {
        match self {
            ExecPath::FullPrecision => "full-precision",
            ExecPath::QuantizedSoftware => "quantized",
            ExecPath::Simulator => "simulator",
        }
    }
}

impl core::str::FromStr for ExecPath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full-precision" | "fp" => Ok(ExecPath::FullPrecision),
            "quantized" | "sw" => Ok(ExecPath::QuantizedSoftware),
            "simulator" | "sim" | "hw" => Ok(ExecPath::Simulator),
            other => Err(alloc::format!("unknown path {other:?}")),
        }
    }
}

/// Component rows of a validation report.
pub const COMPONENTS: [&str; 7] = ["gate_preact", "sigmoid", "tanh", "c", "h", "fc1", "logits"];

/// Absolute-difference accumulator of one component.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorStats {
    pub max: f64,
    pub sum: f64,
    pub count: u64,
}

impl ErrorStats {
    pub fn add(&mut self, a: f64, b: f64) {
        let d = libm::fabs(a - b);
        self.max = self.max.max(d);
        self.sum += d;
        self.count += 1;
    }

    pub fn merge(&mut self, o: &ErrorStats) {
        self.max = self.max.max(o.max);
        self.sum += o.sum;
        self.count += o.count;
    }

    pub fn avg(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub path_a: ExecPath,
    pub path_b: ExecPath,
    pub config: BitWidthConfig,
    /// Indexed like [`COMPONENTS`].
    pub components: [ErrorStats; 7],
    pub confusion_a: Confusion,
    pub confusion_b: Confusion,
}

impl ValidationReport {
    pub fn new(path_a: ExecPath, path_b: ExecPath, config: BitWidthConfig) -> Self {
        Self {
            path_a,
            path_b,
            config,
            components: [ErrorStats::default(); 7],
            confusion_a: Confusion::default(),
            confusion_b: Confusion::default(),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = (&'static str, &ErrorStats)> {
        COMPONENTS.iter().copied().zip(self.components.iter())
    }

    pub fn component(&self, name: &str) -> Option<&ErrorStats> {
        self.rows().find(|(n, _)| *n == name).map(|(_, s)| s)
    }

    pub fn accuracy_delta(&self) -> f64 {
        self.confusion_a.accuracy() - self.confusion_b.accuracy()
    }

    pub fn f1_delta(&self) -> f64 {
        self.confusion_a.f1() - self.confusion_b.f1()
    }

    /// Whether every component matched exactly.
    pub fn is_exact(&self) -> bool {
        self.components.iter().all(|s| s.max == 0.0) && self.confusion_a == self.confusion_b
    }

    pub fn merge(&mut self, o: &ValidationReport) {
        for (a, b) in self.components.iter_mut().zip(&o.components) {
            a.merge(b);
        }
        self.confusion_a.merge(&o.confusion_a);
        self.confusion_b.merge(&o.confusion_b);
    }

    fn add_window(&mut self, a: &Intermediates, b: &Intermediates, label: Label) {
        let stats = &mut self.components;
        let ngates = a.gate_preact.len();
        for i in 0..ngates {
            stats[0].add(a.gate_preact[i], b.gate_preact[i]);
            let slot = if i % 4 == Gate::G.index() { 2 } else { 1 };
            stats[slot].add(a.gate_act[i], b.gate_act[i]);
        }
        for i in 0..a.c.len() {
            stats[2].add(a.tanh_c[i], b.tanh_c[i]);
            stats[3].add(a.c[i], b.c[i]);
            stats[4].add(a.h[i], b.h[i]);
        }
        for i in 0..a.fc1_out.len() {
            stats[5].add(a.fc1_out[i], b.fc1_out[i]);
        }
        for i in 0..a.logits.len() {
            stats[6].add(a.logits[i], b.logits[i]);
        }
        let la = crate::net::argmax([a.logits[0], a.logits[1]]);
        let lb = crate::net::argmax([b.logits[0], b.logits[1]]);
        self.confusion_a.record(la, label);
        self.confusion_b.record(lb, label);
    }
}

/// One model prepared for all three execution paths.
#[derive(Debug, Clone)]
pub struct PathRunner<'m> {
    params: &'m ModelParams,
    quantized: QuantizedModel,
    cfg: BitWidthConfig,
    accel: Option<AccelState>,
}

impl<'m> PathRunner<'m> {
    pub fn new(params: &'m ModelParams, cfg: BitWidthConfig, with_simulator: bool) -> Result<Self, DseError> {
        params.check_finite().map_err(NetError::from)?;
        let (quantized, _) = params
            .quantize(cfg.param_fmt, cfg.rounding)
            .expect("finite parameters quantize");
        let accel = if with_simulator {
            let mut a = AccelState::new(params.dims, cfg)?;
            a.load_params(&pack_sram(&quantized)?)?;
            Some(a)
        } else {
            None
        };
        Ok(Self {
            params,
            quantized,
            cfg,
            accel,
        })
    }

    pub fn record(&mut self, path: ExecPath, window: &GaitWindow) -> Result<Intermediates, DseError> {
        let mut probe = Intermediates::new(self.params.dims);
        match path {
            ExecPath::FullPrecision => {
                FloatNet::new(self.params)?
                    .with_fc_input(self.cfg.fc_input)
                    .run(window, &mut probe)?;
            }
            ExecPath::QuantizedSoftware => {
                QuantizedNet::new(&self.quantized, self.cfg)?.run(window, &mut probe)?;
            }
            ExecPath::Simulator => {
                let accel = self.accel.as_mut().ok_or(SimError::Protocol("runner built without a simulator"))?;
                accel.run_inference_with(window, false, &mut probe)?;
            }
        }
        Ok(probe)
    }
}

/// Feed the same windows to two paths and compare every latched value.
pub fn component_errors(
    model: &ModelParams,
    windows: &[GaitWindow],
    cfg: BitWidthConfig,
    path_a: ExecPath,
    path_b: ExecPath,
) -> Result<ValidationReport, DseError> {
    let needs_sim = path_a == ExecPath::Simulator || path_b == ExecPath::Simulator;
    let mut runner = PathRunner::new(model, cfg, needs_sim)?;
    let mut report = ValidationReport::new(path_a, path_b, cfg);
    for w in windows {
        let a = runner.record(path_a, w)?;
        let b = runner.record(path_b, w)?;
        report.add_window(&a, &b, w.label);
    }
    Ok(report)
}
