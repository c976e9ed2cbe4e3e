//! Piecewise-quadratic sigmoid and tanh, evaluated the way the hardware
//! activation units do it: coefficients and every product held in
//! `FxP(18,13)`, sums kept wide, one final requantization.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::fxp::{fxp_mul, quantize, FxpFormat, FxpValue, Rounded, RoundingMode, WideAccumulator, ACT_FORMAT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    Relu,
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Relu => "relu",
        })
    }
}

impl FromStr for ActivationKind {
    type Err = alloc::string::String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "tanh" => Ok(ActivationKind::Tanh),
            "relu" => Ok(ActivationKind::Relu),
            other => Err(alloc::format!("unknown activation {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationError {
    /// ReLU has no polynomial table.
    NoPolynomial,
}

impl fmt::Display for ActivationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationError::NoPolynomial => f.write_str("relu has no polynomial approximation"),
        }
    }
}

/// One piece `a2*x^2 + a1*x + a0` on `(lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub lower: f64,
    pub upper: f64,
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl Segment {
    const fn poly(lower: f64, upper: f64, a2: f64, a1: f64, a0: f64) -> Self {
        Self { lower, upper, a2, a1, a0 }
    }

    const fn constant(lower: f64, upper: f64, c: f64) -> Self {
        Self::poly(lower, upper, 0.0, 0.0, c)
    }

    pub fn is_constant(&self) -> bool {
        self.a2 == 0.0 && self.a1 == 0.0
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower < x && x <= self.upper
    }
}

/// Contiguous segments covering the real line, ascending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewisePoly {
    pub segments: &'static [Segment],
}

const NEG_INF: f64 = f64::NEG_INFINITY;
const POS_INF: f64 = f64::INFINITY;

pub const SIGMOID: PiecewisePoly = PiecewisePoly {
    segments: &[
        Segment::constant(NEG_INF, -6.0, 0.0),
        Segment::poly(-6.0, -3.0, 0.00642, 0.07176, 0.20323),
        Segment::poly(-3.0, 0.0, 0.04059, 0.27269, 0.50195),
        Segment::poly(0.0, 3.0, -0.04058, 0.27266, 0.49805),
        Segment::poly(3.0, 6.0, -0.00642, 0.07175, 0.79675),
        Segment::constant(6.0, POS_INF, 1.0),
    ],
};

pub const TANH: PiecewisePoly = PiecewisePoly {
    segments: &[
        Segment::constant(NEG_INF, -3.0, -1.0),
        Segment::poly(-3.0, -1.0, 0.09007, 0.46527, -0.39814),
        Segment::poly(-1.0, 0.0, 0.31592, 1.08381, 0.00314),
        Segment::poly(0.0, 1.0, -0.31676, 1.08538, -0.00349),
        Segment::poly(1.0, 3.0, -0.09013, 0.46509, 0.39878),
        Segment::constant(3.0, POS_INF, 1.0),
    ],
};

impl PiecewisePoly {
    pub fn for_kind(kind: ActivationKind) -> Option<PiecewisePoly> {
        match kind {
            ActivationKind::Sigmoid => Some(SIGMOID),
            ActivationKind::Tanh => Some(TANH),
            ActivationKind::Relu => None,
        }
    }

    pub fn segment_index(&self, x: f64) -> usize {
        self.segments
            .iter()
            .position(|s| s.contains(x))
            .expect("segments cover the real line")
    }

    /// Evaluation with the printed real coefficients.
    pub fn eval_real(&self, x: f64) -> f64 {
        let s = &self.segments[self.segment_index(x)];
        s.a2 * x * x + s.a1 * x + s.a0
    }

    pub fn quantized(&self, mode: RoundingMode) -> QuantizedPoly {
        let q = |c: f64| quantize(c, ACT_FORMAT, mode).expect("finite coefficient").value;
        let bound = |b: f64| b.is_finite().then(|| q(b).raw());
        QuantizedPoly {
            segments: self
                .segments
                .iter()
                .map(|s| QuantizedSegment {
                    lower: bound(s.lower),
                    upper: bound(s.upper),
                    constant: s.is_constant(),
                    a2: q(s.a2),
                    a1: q(s.a1),
                    a0: q(s.a0),
                })
                .collect(),
        }
    }
}

/// A segment with breakpoints and coefficients in `FxP(18,13)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizedSegment {
    /// Raw breakpoints; `None` for the infinite ends.
    pub lower: Option<i32>,
    pub upper: Option<i32>,
    pub constant: bool,
    pub a2: FxpValue,
    pub a1: FxpValue,
    pub a0: FxpValue,
}

impl QuantizedSegment {
    fn contains(&self, raw: i32) -> bool {
        self.lower.is_none_or(|lo| lo < raw) && self.upper.is_none_or(|hi| raw <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedPoly {
    pub segments: Vec<QuantizedSegment>,
}

impl QuantizedPoly {
    pub fn segment_index(&self, x: FxpValue) -> usize {
        debug_assert_eq!(x.format(), ACT_FORMAT);
        self.segments
            .iter()
            .position(|s| s.contains(x.raw()))
            .expect("segments cover every representable input")
    }

    /// Evaluate on `x`, returning the result in `out`.
    ///
    /// `a2*x^2` is formed as `(a2*x)*x` so the intermediate stays inside
    /// `FxP(18,13)` for the whole input range.
    pub fn eval(&self, x: FxpValue, out: FxpFormat, mode: RoundingMode, overflow: &mut u64) -> FxpValue {
        let x = to_act_format(x, mode).tally(overflow);
        let s = &self.segments[self.segment_index(x)];
        if s.constant {
            return requantize_value(s.a0, out, mode).tally(overflow);
        }
        let a2x = fxp_mul(s.a2, x, ACT_FORMAT, mode).tally(overflow);
        let quad = fxp_mul(a2x, x, ACT_FORMAT, mode).tally(overflow);
        let lin = fxp_mul(s.a1, x, ACT_FORMAT, mode).tally(overflow);
        let mut acc = WideAccumulator::new(ACT_FORMAT.frac_bits());
        for term in [quad, lin, s.a0] {
            acc.add(term).expect("all terms in FxP(18,13)");
        }
        let sum = acc.requantize(ACT_FORMAT, mode).tally(overflow);
        requantize_value(sum, out, mode).tally(overflow)
    }
}

fn requantize_value(v: FxpValue, out: FxpFormat, mode: RoundingMode) -> Rounded {
    crate::fxp::requantize_raw(v.raw() as i128, v.format().frac_bits(), out, mode)
}

/// Input conversion into the activation format: an exact shift for every
/// operation format with at most 13 fraction bits that fits the range,
/// rounding and saturation otherwise.
fn to_act_format(x: FxpValue, mode: RoundingMode) -> Rounded {
    if x.format() == ACT_FORMAT {
        return Rounded { value: x, saturated: false };
    }
    if let Some(v) = x.widen(ACT_FORMAT) {
        return Rounded { value: v, saturated: false };
    }
    requantize_value(x, ACT_FORMAT, mode)
}

/// Quantized sigmoid and tanh tables for one rounding mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationUnit {
    mode: RoundingMode,
    sigmoid: QuantizedPoly,
    tanh: QuantizedPoly,
}

impl ActivationUnit {
    pub fn new(mode: RoundingMode) -> Self {
        Self {
            mode,
            sigmoid: SIGMOID.quantized(mode),
            tanh: TANH.quantized(mode),
        }
    }

    pub fn mode(&self) -> RoundingMode {
        self.mode
    }

    pub fn table(&self, kind: ActivationKind) -> Option<&QuantizedPoly> {
        match kind {
            ActivationKind::Sigmoid => Some(&self.sigmoid),
            ActivationKind::Tanh => Some(&self.tanh),
            ActivationKind::Relu => None,
        }
    }

    pub fn sigmoid(&self, x: FxpValue, out: FxpFormat, overflow: &mut u64) -> FxpValue {
        self.sigmoid.eval(x, out, self.mode, overflow)
    }

    pub fn tanh(&self, x: FxpValue, out: FxpFormat, overflow: &mut u64) -> FxpValue {
        self.tanh.eval(x, out, self.mode, overflow)
    }

    pub fn eval(
        &self,
        kind: ActivationKind,
        x: FxpValue,
        out: FxpFormat,
        overflow: &mut u64,
    ) -> Result<FxpValue, ActivationError> {
        let table = self.table(kind).ok_or(ActivationError::NoPolynomial)?;
        Ok(table.eval(x, out, self.mode, overflow))
    }
}

/// One-shot quantized evaluation. Builds the tables on every call; hot paths
/// hold an [`ActivationUnit`] instead.
pub fn act_eval(
    kind: ActivationKind,
    x: FxpValue,
    out: FxpFormat,
    mode: RoundingMode,
) -> Result<Rounded, ActivationError> {
    let poly = PiecewisePoly::for_kind(kind).ok_or(ActivationError::NoPolynomial)?;
    let mut events = 0;
    let value = poly.quantized(mode).eval(x, out, mode, &mut events);
    Ok(Rounded {
        value,
        saturated: events > 0,
    })
}

pub fn relu(x: FxpValue) -> FxpValue {
    if x.is_positive() {
        x
    } else {
        FxpValue::zero(x.format())
    }
}

pub fn relu_real(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Approximated activation with real coefficients.
pub fn approx_real(kind: ActivationKind, x: f64) -> f64 {
    match PiecewisePoly::for_kind(kind) {
        Some(p) => p.eval_real(x),
        None => relu_real(x),
    }
}

/// Exact activation from the host's transcendental functions.
pub fn reference_activation(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Sigmoid => 1.0 / (1.0 + libm::exp(-x)),
        ActivationKind::Tanh => libm::tanh(x),
        ActivationKind::Relu => relu_real(x),
    }
}

/// Grid `lo, lo + step, ...` up to and including `hi`.
pub fn grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    assert!(lo < hi && step > 0.0, "grid needs lo < hi and a positive step");
    let n = libm::floor((hi - lo) / step + 1e-9) as u64;
    (0..=n).map(move |k| lo + k as f64 * step)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxError {
    pub max_abs_error: f64,
    pub argmax: f64,
}

/// Largest deviation of the real-coefficient approximation from the exact
/// function over a grid. The first grid point wins ties.
pub fn measure_approx_error(kind: ActivationKind, grid_step: f64, lo: f64, hi: f64) -> ApproxError {
    let mut worst = ApproxError {
        max_abs_error: -1.0,
        argmax: lo,
    };
    for x in grid(lo, hi, grid_step) {
        let err = libm::fabs(approx_real(kind, x) - reference_activation(kind, x));
        if err > worst.max_abs_error {
            worst = ApproxError { max_abs_error: err, argmax: x };
        }
    }
    worst
}
