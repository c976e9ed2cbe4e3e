//! Cycle-level behavioral model of the accelerator.
//!
//! One gate or neuron dot product completes per cycle; activations and the
//! cell update happen in the store cycle. Arithmetic goes through the same
//! rounding primitives as [`crate::net::QuantizedNet`], but the datapath,
//! register file and schedule are separate so the two can be compared.

pub mod control;
pub mod sram;
pub mod timing;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::activation::{relu, ActivationUnit};
use crate::config::{BitWidthConfig, FcInput};
use crate::fxp::{fxp_mul, FxpFormat, FxpValue, WideAccumulator, INPUT_FORMAT};
use crate::net::{
    argmax, check_window, Dims, Gate, GaitWindow, Label, ModelError, NetError, OverflowStats, Probe, FC1_NEURONS,
    FC2_NEURONS, MAX_CELLS, MAX_CHANNELS,
};

pub use control::{ControlCounter, Phase, Schedule};
pub use timing::TimingReport;
pub use sram::{
    address_of_fc1, address_of_fc2, address_of_gate, pack_sram, unpack_sram, SramImage, SramWord, FIELDS_PER_WORD,
    SRAM_WORDS,
};

use sram::{BIAS_FIELD, FC_BIAS_FIELD, U_FIELD, W_FIELD};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimError {
    /// Port handshake violated.
    Protocol(&'static str),
    Address { what: &'static str, index: usize },
    Unsupported(String),
    /// Malformed SRAM dump.
    Image(String),
    Shape { what: &'static str, expected: usize, found: usize },
    Model(ModelError),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Protocol(m) => write!(f, "protocol error: {m}"),
            SimError::Address { what, index } => write!(f, "{what} {index} out of range"),
            SimError::Unsupported(m) => write!(f, "unsupported configuration: {m}"),
            SimError::Image(m) => write!(f, "bad sram image: {m}"),
            SimError::Shape { what, expected, found } => write!(f, "{what}: expected {expected}, found {found}"),
            SimError::Model(e) => e.fmt(f),
        }
    }
}

impl From<ModelError> for SimError {
    fn from(e: ModelError) -> Self {
        SimError::Model(e)
    }
}

impl From<NetError> for SimError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Shape { what, expected, found } => SimError::Shape { what, expected, found },
            NetError::Model(m) => SimError::Model(m),
        }
    }
}

/// Direction of the parameter port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MemMode {
    #[default]
    Write,
    Read,
}

/// Parameter bus as last driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MemBus {
    pub address: Option<usize>,
    pub enable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortState {
    pub wr_rd: MemMode,
    pub x_rdy: bool,
    pub x_t: Vec<FxpValue>,
    pub cls: Label,
    pub cls_rdy: bool,
    pub mem: MemBus,
}

/// Register written in a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegWrite {
    GateLatch { cell: usize, gate: Gate },
    CellState { cell: usize },
    Fc1Latch { neuron: usize },
    Fc1Bank,
    Fc2Latch { neuron: usize },
    Class(Label),
}

impl fmt::Display for RegWrite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegWrite::GateLatch { cell, gate } => write!(f, "pre_{}[{cell}]", gate.name()),
            RegWrite::CellState { cell } => write!(f, "c[{cell}] h[{cell}]"),
            RegWrite::Fc1Latch { neuron } => write!(f, "fc1[{neuron}]"),
            RegWrite::Fc1Bank => write!(f, "fc1_out"),
            RegWrite::Fc2Latch { neuron } => write!(f, "fc2[{neuron}]"),
            RegWrite::Class(l) => write!(f, "cls={}", l.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub cycle: usize,
    pub phase: Phase,
    pub sram_addr: Option<usize>,
    pub writes: RegWrite,
    /// Saturation events raised in this cycle.
    pub overflow_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub cls: Label,
    pub logits: [f64; 2],
    pub cycles_used: usize,
    pub sram_reads: usize,
    pub overflow: OverflowStats,
    pub trace: Vec<TraceRecord>,
}

/// Registers, SRAM and ports of one accelerator instance.
#[derive(Debug, Clone)]
pub struct AccelState {
    dims: Dims,
    cfg: BitWidthConfig,
    act: ActivationUnit,
    sram: Option<SramImage>,
    counter: ControlCounter,
    ports: PortState,
    in_flight: bool,
    c: [FxpValue; MAX_CELLS],
    h: [FxpValue; MAX_CELLS],
    h_next: [FxpValue; MAX_CELLS],
    pre: [FxpValue; 4],
    fc1_latch: [FxpValue; FC1_NEURONS],
    fc1_out: [FxpValue; FC1_NEURONS],
    fc2_latch: [FxpValue; FC2_NEURONS],
    overflow: OverflowStats,
    sram_reads: usize,
}

impl AccelState {
    pub fn new(dims: Dims, cfg: BitWidthConfig) -> Result<Self, SimError> {
        dims.validate_for_accelerator()?;
        let zero = FxpValue::zero(cfg.op_fmt);
        Ok(Self {
            dims,
            cfg,
            act: ActivationUnit::new(cfg.rounding),
            sram: None,
            counter: ControlCounter::new(Schedule::new(dims.timesteps, dims.num_cells)),
            ports: PortState {
                wr_rd: MemMode::Write,
                x_rdy: false,
                x_t: vec![FxpValue::zero(INPUT_FORMAT); dims.input_channels],
                cls: Label::Normal,
                cls_rdy: false,
                mem: MemBus::default(),
            },
            in_flight: false,
            c: [zero; MAX_CELLS],
            h: [zero; MAX_CELLS],
            h_next: [zero; MAX_CELLS],
            pre: [zero; 4],
            fc1_latch: [zero; FC1_NEURONS],
            fc1_out: [zero; FC1_NEURONS],
            fc2_latch: [zero; FC2_NEURONS],
            overflow: OverflowStats::default(),
            sram_reads: 0,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn config(&self) -> &BitWidthConfig {
        &self.cfg
    }

    pub fn ports(&self) -> &PortState {
        &self.ports
    }

    pub fn counter(&self) -> &ControlCounter {
        &self.counter
    }

    pub fn schedule(&self) -> Schedule {
        self.counter.schedule()
    }

    pub fn in_flight(&self) -> bool {
        self.in_flight
    }

    pub fn sram(&self) -> Option<&SramImage> {
        self.sram.as_ref()
    }

    pub fn set_mode(&mut self, mode: MemMode) -> Result<(), SimError> {
        if self.in_flight && mode == MemMode::Write {
            return Err(SimError::Protocol("cannot switch to write mode during an inference"));
        }
        self.ports.wr_rd = mode;
        Ok(())
    }

    fn check_writable(&self) -> Result<(), SimError> {
        if self.in_flight {
            return Err(SimError::Protocol("parameter write while an inference is in flight"));
        }
        if self.ports.wr_rd != MemMode::Write {
            return Err(SimError::Protocol("parameter write with wr_rd in read mode"));
        }
        Ok(())
    }

    /// Install a whole image.
    pub fn load_params(&mut self, img: &SramImage) -> Result<(), SimError> {
        self.check_writable()?;
        if img.format() != self.cfg.param_fmt {
            return Err(SimError::Unsupported(alloc::format!(
                "image is {} but the configuration expects {}",
                img.format(),
                self.cfg.param_fmt
            )));
        }
        self.sram = Some(img.clone());
        Ok(())
    }

    /// Single-word write over the MEM bus.
    pub fn write_word(&mut self, addr: usize, word: SramWord) -> Result<(), SimError> {
        self.check_writable()?;
        let fmt = self.cfg.param_fmt;
        self.ports.mem = MemBus { address: Some(addr), enable: true };
        self.sram.get_or_insert_with(|| SramImage::zeroed(fmt)).set_word(addr, word)
    }

    pub fn read_word(&self, addr: usize) -> Result<SramWord, SimError> {
        let img = self.sram.as_ref().ok_or(SimError::Protocol("no parameters loaded"))?;
        img.word(addr).copied()
    }

    /// Drive `X_t` and raise `x_rdy`.
    pub fn present_sample(&mut self, x_t: &[FxpValue]) -> Result<(), SimError> {
        if x_t.len() != self.dims.input_channels {
            return Err(SimError::Shape {
                what: "sample channels",
                expected: self.dims.input_channels,
                found: x_t.len(),
            });
        }
        if x_t.iter().any(|x| x.format() != INPUT_FORMAT) {
            return Err(SimError::Protocol("samples must be in the input format"));
        }
        self.ports.x_t.copy_from_slice(x_t);
        self.ports.x_rdy = true;
        Ok(())
    }

    /// Return the datapath to its power-on state; SRAM is kept.
    pub fn reset(&mut self) {
        let zero = FxpValue::zero(self.cfg.op_fmt);
        self.counter.reset();
        self.in_flight = false;
        self.c = [zero; MAX_CELLS];
        self.h = [zero; MAX_CELLS];
        self.h_next = [zero; MAX_CELLS];
        self.pre = [zero; 4];
        self.fc1_latch = [zero; FC1_NEURONS];
        self.fc1_out = [zero; FC1_NEURONS];
        self.fc2_latch = [zero; FC2_NEURONS];
        self.ports.x_rdy = false;
        self.ports.cls_rdy = false;
        self.ports.mem = MemBus::default();
    }

    fn op(&self) -> FxpFormat {
        self.cfg.op_fmt
    }

    fn mac(&mut self, word: &SramWord, terms: &[(usize, FxpValue)], bias_field: usize) -> WideAccumulator {
        let (pf, op, mode) = (self.cfg.param_fmt, self.op(), self.cfg.rounding);
        let mut acc = WideAccumulator::new(self.cfg.acc_frac());
        for &(field, x) in terms {
            let p = fxp_mul(word.field(field, pf), x, op, mode).tally(&mut self.overflow.products);
            acc.add_aligned(p).expect("accumulator holds the operation format");
        }
        acc.add_aligned(word.field(bias_field, pf)).expect("accumulator holds the parameter format");
        acc
    }

    fn fetch(&mut self, addr: usize) -> Result<SramWord, SimError> {
        let word = self.read_word(addr)?;
        self.ports.mem = MemBus { address: Some(addr), enable: true };
        self.sram_reads += 1;
        Ok(word)
    }

    pub fn step(&mut self) -> Result<TraceRecord, SimError> {
        self.step_with(&mut ())
    }

    /// Execute the current cycle and advance the counter.
    pub fn step_with(&mut self, probe: &mut impl Probe) -> Result<TraceRecord, SimError> {
        if self.sram.is_none() {
            return Err(SimError::Protocol("step without loaded parameters"));
        }
        if self.ports.wr_rd != MemMode::Read {
            return Err(SimError::Protocol("step with wr_rd in write mode"));
        }
        let cycle = self.counter.cycle();
        let phase = self.counter.phase();
        let before = self.overflow.total();
        self.ports.cls_rdy = false;
        self.ports.mem = MemBus::default();
        let (op, mode) = (self.op(), self.cfg.rounding);
        let writes = match phase {
            Phase::Lstm { t, cell, gate } => {
                if !self.ports.x_rdy {
                    return Err(SimError::Protocol("gate cycle without a valid sample"));
                }
                self.in_flight = true;
                match gate {
                    Some(g) => {
                        let word = self.fetch(address_of_gate(cell, g)?)?;
                        let mut terms = [(0, FxpValue::zero(op)); MAX_CELLS + MAX_CHANNELS];
                        for k in 0..MAX_CELLS {
                            terms[k] = (U_FIELD + k, self.h[k]);
                        }
                        for d in 0..MAX_CHANNELS {
                            let x = self.ports.x_t.get(d).copied().unwrap_or(FxpValue::zero(INPUT_FORMAT));
                            terms[MAX_CELLS + d] = (W_FIELD + d, x);
                        }
                        let acc = self.mac(&word, &terms, BIAS_FIELD);
                        self.pre[g.index()] = acc.requantize(op, mode).tally(&mut self.overflow.gate_preact);
                        RegWrite::GateLatch { cell, gate: g }
                    }
                    None => {
                        self.store_cell(t, cell, probe);
                        if cell + 1 == self.dims.num_cells {
                            core::mem::swap(&mut self.h, &mut self.h_next);
                            self.ports.x_rdy = false;
                        }
                        RegWrite::CellState { cell }
                    }
                }
            }
            Phase::Fc1 { neuron: Some(j) } => {
                let word = self.fetch(address_of_fc1(j)?)?;
                let src = match self.cfg.fc_input {
                    FcInput::CellState => self.c,
                    FcInput::Hidden => self.h,
                };
                let terms: [(usize, FxpValue); MAX_CELLS] = core::array::from_fn(|k| (k, src[k]));
                let pre = self.mac(&word, &terms, FC_BIAS_FIELD).requantize(op, mode).tally(&mut self.overflow.fc1);
                self.fc1_latch[j] = relu(pre);
                probe.fc1(j, pre.to_real(), self.fc1_latch[j].to_real());
                RegWrite::Fc1Latch { neuron: j }
            }
            Phase::Fc1 { neuron: None } => {
                self.fc1_out = self.fc1_latch;
                RegWrite::Fc1Bank
            }
            Phase::Fc2 { neuron: Some(k) } => {
                let word = self.fetch(address_of_fc2(k)?)?;
                let terms: [(usize, FxpValue); FC1_NEURONS] = core::array::from_fn(|j| (j, self.fc1_out[j]));
                self.fc2_latch[k] = self.mac(&word, &terms, FC_BIAS_FIELD).requantize(op, mode).tally(&mut self.overflow.fc2);
                probe.logit(k, self.fc2_latch[k].to_real());
                RegWrite::Fc2Latch { neuron: k }
            }
            Phase::Fc2 { neuron: None } => {
                let cls = argmax([self.fc2_latch[0].to_real(), self.fc2_latch[1].to_real()]);
                self.ports.cls = cls;
                self.ports.cls_rdy = true;
                RegWrite::Class(cls)
            }
        };
        let record = TraceRecord {
            cycle,
            phase,
            sram_addr: phase.sram_address(),
            writes,
            overflow_count: self.overflow.total() - before,
        };
        self.counter.advance();
        if self.counter.cycle() == 0 {
            self.finish_inference();
        }
        Ok(record)
    }

    /// Activations and the state update of one cell.
    fn store_cell(&mut self, t: usize, n: usize, probe: &mut impl Probe) {
        let op = self.op();
        let ov = &mut self.overflow;
        let mut a = [FxpValue::zero(op); 4];
        for g in Gate::ALL {
            let x = self.pre[g.index()];
            a[g.index()] = match g {
                Gate::G => self.act.tanh(x, op, &mut ov.activation),
                _ => self.act.sigmoid(x, op, &mut ov.activation),
            };
            probe.gate(t, n, g, x.to_real(), a[g.index()].to_real());
        }
        let mode = self.cfg.rounding;
        let [i, f, g, o] = a;
        let fc = fxp_mul(f, self.c[n], op, mode).tally(&mut ov.products);
        let ig = fxp_mul(i, g, op, mode).tally(&mut ov.products);
        let mut acc = WideAccumulator::new(op.frac_bits());
        acc.add(fc).expect("same format");
        acc.add(ig).expect("same format");
        let c = acc.requantize(op, mode).tally(&mut ov.cell_state);
        let tanh_c = self.act.tanh(c, op, &mut ov.activation);
        let h = fxp_mul(o, tanh_c, op, mode).tally(&mut ov.products);
        self.c[n] = c;
        self.h_next[n] = h;
        probe.cell(t, n, c.to_real(), tanh_c.to_real(), h.to_real());
    }

    /// Auto-restart after the classification cycle; `cls` and `cls_rdy`
    /// stay visible until the next step.
    fn finish_inference(&mut self) {
        let zero = FxpValue::zero(self.op());
        self.in_flight = false;
        self.c = [zero; MAX_CELLS];
        self.h = [zero; MAX_CELLS];
        self.h_next = [zero; MAX_CELLS];
    }

    /// Drive one window through a full schedule from cycle 0.
    pub fn run_inference(&mut self, window: &GaitWindow, keep_trace: bool) -> Result<InferenceResult, SimError> {
        self.run_inference_with(window, keep_trace, &mut ())
    }

    pub fn run_inference_with(
        &mut self,
        window: &GaitWindow,
        keep_trace: bool,
        probe: &mut impl Probe,
    ) -> Result<InferenceResult, SimError> {
        check_window(self.dims, window)?;
        if self.sram.is_none() {
            return Err(SimError::Protocol("inference without loaded parameters"));
        }
        if self.in_flight {
            return Err(SimError::Protocol("inference already in flight"));
        }
        self.reset();
        self.ports.wr_rd = MemMode::Read;
        self.overflow = OverflowStats::default();
        self.sram_reads = 0;
        let total = self.schedule().total_cycles();
        let mut trace = Vec::with_capacity(if keep_trace { total } else { 0 });
        let mut cycles_used = 0;
        loop {
            if let Phase::Lstm { t, cell: 0, gate: Some(Gate::I) } = self.counter.phase() {
                self.present_sample(window.sample(t))?;
            }
            let rec = self.step_with(probe)?;
            cycles_used += 1;
            if keep_trace {
                trace.push(rec);
            }
            if self.ports.cls_rdy {
                break;
            }
        }
        Ok(InferenceResult {
            cls: self.ports.cls,
            logits: [self.fc2_latch[0].to_real(), self.fc2_latch[1].to_real()],
            cycles_used,
            sram_reads: self.sram_reads,
            overflow: self.overflow,
            trace,
        })
    }
}

impl Dims {
    /// Whether this shape fits the accelerator's register file and SRAM.
    pub fn validate_for_accelerator(&self) -> Result<(), SimError> {
        if self.timesteps == 0
            || self.num_cells == 0
            || self.num_cells > MAX_CELLS
            || self.input_channels == 0
            || self.input_channels > MAX_CHANNELS
        {
            return Err(SimError::Unsupported(alloc::format!(
                "shape {} cells x {} channels x {} timesteps",
                self.num_cells, self.input_channels, self.timesteps
            )));
        }
        Ok(())
    }
}
