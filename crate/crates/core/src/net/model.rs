use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::fxp::{quantize, FxpError, FxpFormat, FxpValue, RoundingMode};

/// Hardware limit on LSTM cells.
pub const MAX_CELLS: usize = 20;
/// Input fields available in a gate word.
pub const MAX_CHANNELS: usize = 4;
pub const FC1_NEURONS: usize = 20;
pub const FC2_NEURONS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    I,
    F,
    G,
    O,
}

impl Gate {
    /// Evaluation and storage order.
    pub const ALL: [Gate; 4] = [Gate::I, Gate::F, Gate::G, Gate::O];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn name(self) -> &'static str {
        match self {
            Gate::I => "i",
            Gate::F => "f",
            Gate::G => "g",
            Gate::O => "o",
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub num_cells: usize,
    pub input_channels: usize,
    pub timesteps: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            num_cells: 20,
            input_channels: 4,
            timesteps: 96,
        }
    }
}

/// Parameters of one gate of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams<T> {
    /// Recurrent weights, one per cell.
    pub u: Vec<T>,
    /// Input weights, one per channel.
    pub w: Vec<T>,
    pub b: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neuron<T> {
    pub w: Vec<T>,
    pub b: T,
}

/// The whole network: `cells[n][q]` is gate `q` of cell `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub dims: Dims,
    pub cells: Vec<[GateParams<T>; 4]>,
    pub fc1: Vec<Neuron<T>>,
    pub fc2: Vec<Neuron<T>>,
}

pub type ModelParams = Model<f64>;
pub type QuantizedModel = Model<FxpValue>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelError {
    /// A tensor has the wrong number of entries.
    Shape {
        tensor: String,
        expected: usize,
        found: usize,
    },
    /// Dimensions the network or the accelerator cannot hold.
    Dims(String),
    /// A parameter is NaN or infinite.
    NonFinite { tensor: String },
    /// A quantized parameter is not in the expected format.
    Format { tensor: String, expected: FxpFormat, found: FxpFormat },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Shape { tensor, expected, found } => {
                write!(f, "tensor {tensor}: expected {expected} values, found {found}")
            }
            ModelError::Dims(msg) => write!(f, "invalid dimensions: {msg}"),
            ModelError::NonFinite { tensor } => write!(f, "tensor {tensor}: non-finite value"),
            ModelError::Format { tensor, expected, found } => {
                write!(f, "tensor {tensor}: expected {expected}, found {found}")
            }
        }
    }
}

/// Parameter totals per tensor family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCounts {
    pub u: usize,
    pub w: usize,
    pub b: usize,
    pub fc1_w: usize,
    pub fc1_b: usize,
    pub fc2_w: usize,
    pub fc2_b: usize,
}

impl ParamCounts {
    pub fn for_dims(d: Dims) -> Self {
        Self {
            u: 4 * d.num_cells * d.num_cells,
            w: 4 * d.num_cells * d.input_channels,
            b: 4 * d.num_cells,
            fc1_w: FC1_NEURONS * d.num_cells,
            fc1_b: FC1_NEURONS,
            fc2_w: FC2_NEURONS * FC1_NEURONS,
            fc2_b: FC2_NEURONS,
        }
    }

    pub fn total(&self) -> usize {
        self.u + self.w + self.b + self.fc1_w + self.fc1_b + self.fc2_w + self.fc2_b
    }
}

fn check_len(tensor: impl FnOnce() -> String, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::Shape {
            tensor: tensor(),
            expected,
            found,
        })
    }
}

impl<T> Model<T> {
    pub fn counts(&self) -> ParamCounts {
        ParamCounts::for_dims(self.dims)
    }

    pub fn param_count(&self) -> usize {
        self.counts().total()
    }

    /// Check every tensor against the declared dimensions.
    pub fn validate(&self) -> Result<(), ModelError> {
        let d = self.dims;
        if d.num_cells == 0 || d.num_cells > MAX_CELLS {
            return Err(ModelError::Dims(format!(
                "num_cells must be in 1..={MAX_CELLS}, got {}",
                d.num_cells
            )));
        }
        if d.input_channels == 0 {
            return Err(ModelError::Dims(String::from("input_channels must be positive")));
        }
        if d.timesteps == 0 {
            return Err(ModelError::Dims(String::from("timesteps must be positive")));
        }
        check_len(|| String::from("cells"), d.num_cells, self.cells.len())?;
        for (n, gates) in self.cells.iter().enumerate() {
            for (gate, p) in Gate::ALL.iter().zip(gates) {
                check_len(|| format!("u.{gate}[{n}]"), d.num_cells, p.u.len())?;
                check_len(|| format!("w.{gate}[{n}]"), d.input_channels, p.w.len())?;
            }
        }
        check_len(|| String::from("fc1.w"), FC1_NEURONS, self.fc1.len())?;
        for (j, neuron) in self.fc1.iter().enumerate() {
            check_len(|| format!("fc1.w[{j}]"), d.num_cells, neuron.w.len())?;
        }
        check_len(|| String::from("fc2.w"), FC2_NEURONS, self.fc2.len())?;
        for (k, neuron) in self.fc2.iter().enumerate() {
            check_len(|| format!("fc2.w[{k}]"), FC1_NEURONS, neuron.w.len())?;
        }
        Ok(())
    }

    /// Visit every parameter with its tensor name, in storage order.
    pub fn for_each_param(&self, mut f: impl FnMut(&str, &T)) {
        for (n, gates) in self.cells.iter().enumerate() {
            for (gate, p) in Gate::ALL.iter().zip(gates) {
                let name = format!("u.{gate}[{n}]");
                p.u.iter().for_each(|v| f(&name, v));
                let name = format!("w.{gate}[{n}]");
                p.w.iter().for_each(|v| f(&name, v));
                f(&format!("b.{gate}[{n}]"), &p.b);
            }
        }
        for (layer, neurons) in [("fc1", &self.fc1), ("fc2", &self.fc2)] {
            for (j, neuron) in neurons.iter().enumerate() {
                let name = format!("{layer}.w[{j}]");
                neuron.w.iter().for_each(|v| f(&name, v));
                f(&format!("{layer}.b[{j}]"), &neuron.b);
            }
        }
    }

    pub fn try_map<U, E>(&self, mut f: impl FnMut(&T) -> Result<U, E>) -> Result<Model<U>, E> {
        let mut gate = |p: &GateParams<T>| -> Result<GateParams<U>, E> {
            Ok(GateParams {
                u: p.u.iter().map(&mut f).collect::<Result<_, _>>()?,
                w: p.w.iter().map(&mut f).collect::<Result<_, _>>()?,
                b: f(&p.b)?,
            })
        };
        let mut cells = Vec::with_capacity(self.cells.len());
        for [i, fg, g, o] in &self.cells {
            cells.push([gate(i)?, gate(fg)?, gate(g)?, gate(o)?]);
        }
        let mut neurons = |layer: &[Neuron<T>]| -> Result<Vec<Neuron<U>>, E> {
            layer
                .iter()
                .map(|n| {
                    Ok(Neuron {
                        w: n.w.iter().map(&mut f).collect::<Result<_, _>>()?,
                        b: f(&n.b)?,
                    })
                })
                .collect()
        };
        Ok(Model {
            dims: self.dims,
            cells,
            fc1: neurons(&self.fc1)?,
            fc2: neurons(&self.fc2)?,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Model<U> {
        self.try_map::<U, core::convert::Infallible>(|v| Ok(f(v)))
            .unwrap_or_else(|e| match e {})
    }
}

impl<T: Clone> Model<T> {
    /// Same network with extra cells whose every parameter is `zero`; the
    /// padded cells cannot influence the logits.
    pub fn pad_cells(&self, num_cells: usize, zero: T) -> Model<T> {
        assert!(num_cells >= self.dims.num_cells);
        let extra = num_cells - self.dims.num_cells;
        let widen = |v: &Vec<T>| {
            let mut v = v.clone();
            v.extend(core::iter::repeat_n(zero.clone(), extra));
            v
        };
        let zero_gate = || GateParams {
            u: vec![zero.clone(); num_cells],
            w: vec![zero.clone(); self.dims.input_channels],
            b: zero.clone(),
        };
        let mut cells: Vec<[GateParams<T>; 4]> = self
            .cells
            .iter()
            .map(|gates| {
                gates.clone().map(|p| GateParams {
                    u: widen(&p.u),
                    ..p
                })
            })
            .collect();
        cells.extend((0..extra).map(|_| [zero_gate(), zero_gate(), zero_gate(), zero_gate()]));
        Model {
            dims: Dims {
                num_cells,
                ..self.dims
            },
            cells,
            fc1: self
                .fc1
                .iter()
                .map(|n| Neuron {
                    w: widen(&n.w),
                    b: n.b.clone(),
                })
                .collect(),
            fc2: self.fc2.clone(),
        }
    }
}

impl ModelParams {
    /// All-zero model of the given shape.
    pub fn zeros(dims: Dims) -> Self {
        let gate = || GateParams {
            u: vec![0.0; dims.num_cells],
            w: vec![0.0; dims.input_channels],
            b: 0.0,
        };
        Model {
            dims,
            cells: (0..dims.num_cells).map(|_| [gate(), gate(), gate(), gate()]).collect(),
            fc1: (0..FC1_NEURONS)
                .map(|_| Neuron {
                    w: vec![0.0; dims.num_cells],
                    b: 0.0,
                })
                .collect(),
            fc2: (0..FC2_NEURONS)
                .map(|_| Neuron {
                    w: vec![0.0; FC1_NEURONS],
                    b: 0.0,
                })
                .collect(),
        }
    }

    pub fn check_finite(&self) -> Result<(), ModelError> {
        let mut bad = None;
        self.for_each_param(|name, v| {
            if bad.is_none() && !v.is_finite() {
                bad = Some(String::from(name));
            }
        });
        match bad {
            Some(tensor) => Err(ModelError::NonFinite { tensor }),
            None => Ok(()),
        }
    }

    /// Quantize every parameter; the second value counts clamped parameters.
    pub fn quantize(&self, format: FxpFormat, mode: RoundingMode) -> Result<(QuantizedModel, u64), FxpError> {
        let mut saturated = 0;
        let q = self.try_map(|&x| quantize(x, format, mode).map(|r| r.tally(&mut saturated)))?;
        Ok((q, saturated))
    }
}

impl QuantizedModel {
    pub fn to_real(&self) -> ModelParams {
        self.map(|v| v.to_real())
    }

    /// Every parameter's format, or an error naming the first stray tensor.
    pub fn check_format(&self, format: FxpFormat) -> Result<(), ModelError> {
        let mut bad = None;
        self.for_each_param(|name, v| {
            if bad.is_none() && v.format() != format {
                bad = Some(ModelError::Format {
                    tensor: String::from(name),
                    expected: format,
                    found: v.format(),
                });
            }
        });
        bad.map_or(Ok(()), Err)
    }

    /// Format shared by all parameters, when there is one.
    pub fn param_format(&self) -> FxpFormat {
        self.fc2[0].b.format()
    }
}
