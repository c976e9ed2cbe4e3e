//! Inference: a bit-true fixed-point path and a real-valued reference path
//! with identical structure and evaluation order.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::activation::{approx_real, reference_activation, relu, relu_real, ActivationKind, ActivationUnit};
use crate::config::{BitWidthConfig, FcInput};
use crate::fxp::{fxp_mul, FxpFormat, FxpValue, RoundingMode, WideAccumulator};
use crate::net::model::{Dims, Gate, GateParams, ModelError, ModelParams, Neuron, QuantizedModel, FC1_NEURONS, FC2_NEURONS};
use crate::net::window::{GaitWindow, Label};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetError {
    /// Vector or window sizes disagree with the model.
    Shape { what: &'static str, expected: usize, found: usize },
    Model(ModelError),
}

impl fmt::Display for NetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetError::Shape { what, expected, found } => {
                write!(f, "{what}: expected {expected}, found {found}")
            }
            NetError::Model(e) => e.fmt(f),
        }
    }
}

impl From<ModelError> for NetError {
    fn from(e: ModelError) -> Self {
        NetError::Model(e)
    }
}

fn check(what: &'static str, expected: usize, found: usize) -> Result<(), NetError> {
    if expected == found {
        Ok(())
    } else {
        Err(NetError::Shape { what, expected, found })
    }
}

pub fn check_window(dims: Dims, window: &GaitWindow) -> Result<(), NetError> {
    check("window timesteps", dims.timesteps, window.timesteps())?;
    check("window channels", dims.input_channels, window.channels())
}

/// Saturation events per datapath site.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OverflowStats {
    /// Multiplier outputs (dot products, cell update, hidden output).
    pub products: u64,
    pub gate_preact: u64,
    /// Inside the activation units, including their input conversion.
    pub activation: u64,
    pub cell_state: u64,
    pub fc1: u64,
    pub fc2: u64,
}

impl OverflowStats {
    pub fn total(&self) -> u64 {
        self.products + self.gate_preact + self.activation + self.cell_state + self.fc1 + self.fc2
    }

    pub fn merge(&mut self, o: &OverflowStats) {
        self.products += o.products;
        self.gate_preact += o.gate_preact;
        self.activation += o.activation;
        self.cell_state += o.cell_state;
        self.fc1 += o.fc1;
        self.fc2 += o.fc2;
    }
}

/// Observer of intermediate values, reported as exact reals.
pub trait Probe {
    fn gate(&mut self, _t: usize, _cell: usize, _gate: Gate, _preact: f64, _act: f64) {}
    fn cell(&mut self, _t: usize, _cell: usize, _c: f64, _tanh_c: f64, _h: f64) {}
    fn fc1(&mut self, _neuron: usize, _preact: f64, _out: f64) {}
    fn logit(&mut self, _neuron: usize, _value: f64) {}
}

impl Probe for () {}

/// Every latched value of one inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Intermediates {
    pub dims: Dims,
    /// `[t][cell][gate]` flattened.
    pub gate_preact: Vec<f64>,
    pub gate_act: Vec<f64>,
    /// `[t][cell]` flattened.
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub fc1_preact: Vec<f64>,
    pub fc1_out: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Intermediates {
    pub fn new(dims: Dims) -> Self {
        let cells = dims.timesteps * dims.num_cells;
        Self {
            dims,
            gate_preact: vec![f64::NAN; cells * 4],
            gate_act: vec![f64::NAN; cells * 4],
            c: vec![f64::NAN; cells],
            tanh_c: vec![f64::NAN; cells],
            h: vec![f64::NAN; cells],
            fc1_preact: vec![f64::NAN; FC1_NEURONS],
            fc1_out: vec![f64::NAN; FC1_NEURONS],
            logits: vec![f64::NAN; FC2_NEURONS],
        }
    }

    fn cell_index(&self, t: usize, cell: usize) -> usize {
        t * self.dims.num_cells + cell
    }

    /// Named views for comparisons, in a fixed order.
    pub fn series(&self) -> [(&'static str, &[f64]); 8] {
        [
            ("gate_preact", &self.gate_preact),
            ("gate_act", &self.gate_act),
            ("c", &self.c),
            ("tanh_c", &self.tanh_c),
            ("h", &self.h),
            ("fc1_preact", &self.fc1_preact),
            ("fc1_out", &self.fc1_out),
            ("logits", &self.logits),
        ]
    }

    /// Number of positions where the two recordings differ (bitwise on the
    /// reals, which are exact images of the raw integers).
    pub fn mismatches(&self, other: &Intermediates) -> usize {
        self.series()
            .iter()
            .zip(other.series().iter())
            .map(|((_, a), (_, b))| {
                if a.len() != b.len() {
                    a.len().max(b.len())
                } else {
                    a.iter().zip(b.iter()).filter(|(x, y)| x.to_bits() != y.to_bits()).count()
                }
            })
            .sum()
    }
}

impl Probe for Intermediates {
    fn gate(&mut self, t: usize, cell: usize, gate: Gate, preact: f64, act: f64) {
        let i = self.cell_index(t, cell) * 4 + gate.index();
        self.gate_preact[i] = preact;
        self.gate_act[i] = act;
    }

    fn cell(&mut self, t: usize, cell: usize, c: f64, tanh_c: f64, h: f64) {
        let i = self.cell_index(t, cell);
        self.c[i] = c;
        self.tanh_c[i] = tanh_c;
        self.h[i] = h;
    }

    fn fc1(&mut self, neuron: usize, preact: f64, out: f64) {
        self.fc1_preact[neuron] = preact;
        self.fc1_out[neuron] = out;
    }

    fn logit(&mut self, neuron: usize, value: f64) {
        self.logits[neuron] = value;
    }
}

/// Argmax over the two output neurons; a tie goes to `Normal`.
pub fn argmax(logits: [f64; 2]) -> Label {
    if logits[1] > logits[0] {
        Label::Abnormal
    } else {
        Label::Normal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub label: Label,
    pub logits: [f64; 2],
    pub overflow: OverflowStats,
}

/// Final LSTM state of a window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerState {
    pub c: Vec<FxpValue>,
    pub h: Vec<FxpValue>,
}

/// Fixed-point network bound to one bit-width configuration.
///
/// Every multiply is rounded and saturated into the operation format; every
/// sum is exact in a wide accumulator until one requantization. Dot
/// products run U (by index), then W (by index), then the bias.
#[derive(Debug, Clone)]
pub struct QuantizedNet<'m> {
    model: &'m QuantizedModel,
    cfg: BitWidthConfig,
    act: ActivationUnit,
}

impl<'m> QuantizedNet<'m> {
    pub fn new(model: &'m QuantizedModel, cfg: BitWidthConfig) -> Result<Self, NetError> {
        model.validate()?;
        model.check_format(cfg.param_fmt)?;
        Ok(Self {
            model,
            cfg,
            act: ActivationUnit::new(cfg.rounding),
        })
    }

    pub fn model(&self) -> &QuantizedModel {
        self.model
    }

    pub fn config(&self) -> &BitWidthConfig {
        &self.cfg
    }

    pub fn activations(&self) -> &ActivationUnit {
        &self.act
    }

    fn op(&self) -> FxpFormat {
        self.cfg.op_fmt
    }

    fn mode(&self) -> RoundingMode {
        self.cfg.rounding
    }

    fn mul(&self, a: FxpValue, b: FxpValue, ov: &mut OverflowStats) -> FxpValue {
        fxp_mul(a, b, self.op(), self.mode()).tally(&mut ov.products)
    }

    /// `sum_k w[k]*x[k] + b` with products in the operation format.
    fn dot(&self, terms: impl Iterator<Item = (FxpValue, FxpValue)>, bias: FxpValue, ov: &mut OverflowStats) -> WideAccumulator {
        let mut acc = WideAccumulator::new(self.cfg.acc_frac());
        for (w, x) in terms {
            let p = self.mul(w, x, ov);
            acc.add_aligned(p).expect("accumulator holds the operation format");
        }
        acc.add_aligned(bias).expect("accumulator holds the parameter format");
        acc
    }

    pub fn gate_preact(
        &self,
        x_t: &[FxpValue],
        h_prev: &[FxpValue],
        gate: &GateParams<FxpValue>,
        ov: &mut OverflowStats,
    ) -> Result<FxpValue, NetError> {
        check("recurrent input", gate.u.len(), h_prev.len())?;
        check("sample channels", gate.w.len(), x_t.len())?;
        let terms = gate
            .u
            .iter()
            .copied()
            .zip(h_prev.iter().copied())
            .chain(gate.w.iter().copied().zip(x_t.iter().copied()));
        let acc = self.dot(terms, gate.b, ov);
        Ok(acc.requantize(self.op(), self.mode()).tally(&mut ov.gate_preact))
    }

    /// One cell at one timestep; returns `(c, h)`.
    #[allow(clippy::too_many_arguments)]
    pub fn cell_step(
        &self,
        t: usize,
        n: usize,
        x_t: &[FxpValue],
        c_prev: FxpValue,
        h_prev: &[FxpValue],
        ov: &mut OverflowStats,
        probe: &mut impl Probe,
    ) -> Result<(FxpValue, FxpValue), NetError> {
        let op = self.op();
        let params = &self.model.cells[n];
        let mut acts = [FxpValue::zero(op); 4];
        for gate in Gate::ALL {
            let pre = self.gate_preact(x_t, h_prev, &params[gate.index()], ov)?;
            let kind = match gate {
                Gate::G => ActivationKind::Tanh,
                _ => ActivationKind::Sigmoid,
            };
            let a = self
                .act
                .eval(kind, pre, op, &mut ov.activation)
                .expect("sigmoid and tanh have tables");
            probe.gate(t, n, gate, pre.to_real(), a.to_real());
            acts[gate.index()] = a;
        }
        let [i, f, g, o] = acts;
        let (c, tanh_c, h) = self.cell_update(i, f, g, o, c_prev, ov);
        probe.cell(t, n, c.to_real(), tanh_c.to_real(), h.to_real());
        Ok((c, h))
    }

    /// `c = f*c_prev + i*g`, `h = o*tanh(c)`; returns `(c, tanh(c), h)`.
    pub fn cell_update(
        &self,
        i: FxpValue,
        f: FxpValue,
        g: FxpValue,
        o: FxpValue,
        c_prev: FxpValue,
        ov: &mut OverflowStats,
    ) -> (FxpValue, FxpValue, FxpValue) {
        let op = self.op();
        let mut acc = WideAccumulator::new(op.frac_bits());
        for p in [self.mul(f, c_prev, ov), self.mul(i, g, ov)] {
            acc.add(p).expect("products share the operation format");
        }
        let c = acc.requantize(op, self.mode()).tally(&mut ov.cell_state);
        let tanh_c = self.act.tanh(c, op, &mut ov.activation);
        let h = self.mul(o, tanh_c, ov);
        (c, tanh_c, h)
    }

    /// Run all timesteps; `h` is double-buffered so every cell at time `t`
    /// reads the state of `t - 1`.
    pub fn layer_forward(
        &self,
        window: &GaitWindow,
        ov: &mut OverflowStats,
        probe: &mut impl Probe,
    ) -> Result<LayerState, NetError> {
        let dims = self.model.dims;
        check_window(dims, window)?;
        let zero = FxpValue::zero(self.op());
        let mut c = vec![zero; dims.num_cells];
        let mut h = vec![zero; dims.num_cells];
        let mut h_next = vec![zero; dims.num_cells];
        for t in 0..dims.timesteps {
            let x_t = window.sample(t);
            for n in 0..dims.num_cells {
                let (cn, hn) = self.cell_step(t, n, x_t, c[n], &h, ov, probe)?;
                c[n] = cn;
                h_next[n] = hn;
            }
            core::mem::swap(&mut h, &mut h_next);
        }
        Ok(LayerState { c, h })
    }

    pub fn neuron(&self, neuron: &Neuron<FxpValue>, input: &[FxpValue], ov: &mut OverflowStats) -> WideAccumulator {
        self.dot(neuron.w.iter().copied().zip(input.iter().copied()), neuron.b, ov)
    }

    /// FC1 with ReLU, then FC2.
    pub fn fc_forward(
        &self,
        input: &[FxpValue],
        ov: &mut OverflowStats,
        probe: &mut impl Probe,
    ) -> Result<[FxpValue; 2], NetError> {
        check("fc input", self.model.dims.num_cells, input.len())?;
        let (op, mode) = (self.op(), self.mode());
        let hidden: Vec<FxpValue> = self
            .model
            .fc1
            .iter()
            .enumerate()
            .map(|(j, n)| {
                let pre = self.neuron(n, input, ov).requantize(op, mode).tally(&mut ov.fc1);
                let out = relu(pre);
                probe.fc1(j, pre.to_real(), out.to_real());
                out
            })
            .collect();
        let mut logits = [FxpValue::zero(op); 2];
        for (k, n) in self.model.fc2.iter().enumerate() {
            logits[k] = self.neuron(n, &hidden, ov).requantize(op, mode).tally(&mut ov.fc2);
            probe.logit(k, logits[k].to_real());
        }
        Ok(logits)
    }

    pub fn run(&self, window: &GaitWindow, probe: &mut impl Probe) -> Result<Classification, NetError> {
        let mut ov = OverflowStats::default();
        let state = self.layer_forward(window, &mut ov, probe)?;
        let input = match self.cfg.fc_input {
            FcInput::CellState => &state.c,
            FcInput::Hidden => &state.h,
        };
        let logits = self.fc_forward(input, &mut ov, probe)?;
        let logits = logits.map(|v| v.to_real());
        Ok(Classification {
            label: argmax(logits),
            logits,
            overflow: ov,
        })
    }

    pub fn classify(&self, window: &GaitWindow) -> Result<Classification, NetError> {
        self.run(window, &mut ())
    }
}

/// Activation functions used by the real-valued path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RealActivations {
    /// The piecewise polynomials with their printed coefficients.
    #[default]
    Piecewise,
    /// Exact sigmoid and tanh.
    Exact,
}

/// Real-valued network in the host's double precision.
#[derive(Debug, Clone)]
pub struct FloatNet<'m> {
    model: &'m ModelParams,
    fc_input: FcInput,
    activations: RealActivations,
}

impl<'m> FloatNet<'m> {
    pub fn new(model: &'m ModelParams) -> Result<Self, NetError> {
        model.validate()?;
        Ok(Self {
            model,
            fc_input: FcInput::CellState,
            activations: RealActivations::Piecewise,
        })
    }

    pub fn with_fc_input(mut self, fc_input: FcInput) -> Self {
        self.fc_input = fc_input;
        self
    }

    pub fn with_activations(mut self, activations: RealActivations) -> Self {
        self.activations = activations;
        self
    }

    fn act(&self, kind: ActivationKind, x: f64) -> f64 {
        match self.activations {
            RealActivations::Piecewise => approx_real(kind, x),
            RealActivations::Exact => reference_activation(kind, x),
        }
    }

    fn dot(terms: impl Iterator<Item = (f64, f64)>, bias: f64) -> f64 {
        terms.fold(0.0, |acc, (w, x)| acc + w * x) + bias
    }

    pub fn gate_preact(x_t: &[f64], h_prev: &[f64], gate: &GateParams<f64>) -> f64 {
        let terms = gate
            .u
            .iter()
            .copied()
            .zip(h_prev.iter().copied())
            .chain(gate.w.iter().copied().zip(x_t.iter().copied()));
        Self::dot(terms, gate.b)
    }

    pub fn layer_forward(&self, window: &GaitWindow, probe: &mut impl Probe) -> Result<(Vec<f64>, Vec<f64>), NetError> {
        let dims = self.model.dims;
        check_window(dims, window)?;
        let mut c = vec![0.0; dims.num_cells];
        let mut h = vec![0.0; dims.num_cells];
        let mut h_next = vec![0.0; dims.num_cells];
        let mut x_t = vec![0.0; dims.input_channels];
        for t in 0..dims.timesteps {
            for (dst, v) in x_t.iter_mut().zip(window.real_sample(t)) {
                *dst = v;
            }
            for n in 0..dims.num_cells {
                let mut acts = [0.0; 4];
                for gate in Gate::ALL {
                    let pre = Self::gate_preact(&x_t, &h, &self.model.cells[n][gate.index()]);
                    let kind = match gate {
                        Gate::G => ActivationKind::Tanh,
                        _ => ActivationKind::Sigmoid,
                    };
                    let a = self.act(kind, pre);
                    probe.gate(t, n, gate, pre, a);
                    acts[gate.index()] = a;
                }
                let [i, f, g, o] = acts;
                c[n] = f * c[n] + i * g;
                let tanh_c = self.act(ActivationKind::Tanh, c[n]);
                h_next[n] = o * tanh_c;
                probe.cell(t, n, c[n], tanh_c, h_next[n]);
            }
            core::mem::swap(&mut h, &mut h_next);
        }
        Ok((c, h))
    }

    pub fn fc_forward(&self, input: &[f64], probe: &mut impl Probe) -> Result<[f64; 2], NetError> {
        check("fc input", self.model.dims.num_cells, input.len())?;
        let hidden: Vec<f64> = self
            .model
            .fc1
            .iter()
            .enumerate()
            .map(|(j, n)| {
                let pre = Self::dot(n.w.iter().copied().zip(input.iter().copied()), n.b);
                let out = relu_real(pre);
                probe.fc1(j, pre, out);
                out
            })
            .collect();
        let mut logits = [0.0; 2];
        for (k, n) in self.model.fc2.iter().enumerate() {
            logits[k] = Self::dot(n.w.iter().copied().zip(hidden.iter().copied()), n.b);
            probe.logit(k, logits[k]);
        }
        Ok(logits)
    }

    pub fn run(&self, window: &GaitWindow, probe: &mut impl Probe) -> Result<Classification, NetError> {
        let (c, h) = self.layer_forward(window, probe)?;
        let input = match self.fc_input {
            FcInput::CellState => &c,
            FcInput::Hidden => &h,
        };
        let logits = self.fc_forward(input, probe)?;
        Ok(Classification {
            label: argmax(logits),
            logits,
            overflow: OverflowStats::default(),
        })
    }

    pub fn classify(&self, window: &GaitWindow) -> Result<Classification, NetError> {
        self.run(window, &mut ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    FullPrecision,
    Quantized,
}

/// Classify one window from real parameters, quantizing them first when
/// `mode` is [`ExecMode::Quantized`].
pub fn classify(
    window: &GaitWindow,
    params: &ModelParams,
    cfg: &BitWidthConfig,
    mode: ExecMode,
) -> Result<Classification, NetError> {
    match mode {
        ExecMode::FullPrecision => FloatNet::new(params)?.with_fc_input(cfg.fc_input).classify(window),
        ExecMode::Quantized => {
            params.check_finite()?;
            let (q, _) = params
                .quantize(cfg.param_fmt, cfg.rounding)
                .expect("finite parameters quantize");
            QuantizedNet::new(&q, *cfg)?.classify(window)
        }
    }
}
