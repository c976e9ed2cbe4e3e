//! Bit-width configurations: one format for stored parameters, one for the
//! datapath's multiply inputs and outputs.

use core::fmt;

use crate::fxp::{FxpFormat, RoundingMode};

/// Where the fully-connected head reads its input from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FcInput {
    /// Final cell state.
    #[default]
    CellState,
    /// Final hidden state.
    Hidden,
}

impl core::str::FromStr for FcInput {
    type Err = alloc::string::String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "c" | "C" => Ok(FcInput::CellState),
            "h" | "H" => Ok(FcInput::Hidden),
            other => Err(alloc::format!("fc input must be c or h, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitWidthConfig {
    pub param_fmt: FxpFormat,
    pub op_fmt: FxpFormat,
    /// Preset number 1..=7 when the pair is one of the presets.
    pub preset: Option<u8>,
    pub rounding: RoundingMode,
    pub fc_input: FcInput,
}

const fn f(b: u8, fr: u8) -> FxpFormat {
    FxpFormat::new_const(b, fr)
}

/// The seven selected (parameter, operation) configurations.
pub const PRESETS: [(FxpFormat, FxpFormat); 7] = [
    (f(10, 8), f(13, 8)),
    (f(10, 8), f(13, 9)),
    (f(10, 8), f(12, 8)),
    (f(9, 7), f(13, 8)),
    (f(9, 7), f(13, 9)),
    (f(9, 7), f(12, 8)),
    (f(8, 6), f(13, 9)),
];

/// Parameter formats with a dedicated SRAM sizing.
pub const SRAM_PARAM_FORMATS: [FxpFormat; 3] = [f(10, 8), f(9, 7), f(8, 6)];

/// Formats rejected during exploration for too few integer or fraction bits.
pub const REJECTED_OP_FORMATS: [FxpFormat; 3] = [f(13, 10), f(12, 9), f(11, 8)];
pub const REJECTED_PARAM_FORMATS: [FxpFormat; 1] = [f(8, 4)];

/// Wide formats used to check convergence towards full precision.
pub const WIDE: (FxpFormat, FxpFormat) = (f(24, 16), f(28, 20));

impl BitWidthConfig {
    /// The preset number is filled in when the pair is one of the presets.
    pub fn new(param_fmt: FxpFormat, op_fmt: FxpFormat) -> Self {
        let preset = PRESETS
            .iter()
            .position(|&pair| pair == (param_fmt, op_fmt))
            .map(|i| i as u8 + 1);
        Self {
            param_fmt,
            op_fmt,
            preset,
            rounding: RoundingMode::NearestTiesAway,
            fc_input: FcInput::CellState,
        }
    }

    /// Preset `#n`, `n` in 1..=7.
    pub fn preset(n: u8) -> Option<Self> {
        let (p, o) = *PRESETS.get((n as usize).checked_sub(1)?)?;
        Some(Self::new(p, o))
    }

    pub fn presets() -> impl Iterator<Item = Self> {
        (1..=7).filter_map(Self::preset)
    }

    pub fn wide() -> Self {
        Self::new(WIDE.0, WIDE.1)
    }

    pub fn with_rounding(mut self, rounding: RoundingMode) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn with_fc_input(mut self, fc_input: FcInput) -> Self {
        self.fc_input = fc_input;
        self
    }

    /// Fraction bits of the accumulators: wide enough to hold both products
    /// (operation format) and biases (parameter format) exactly.
    pub fn acc_frac(&self) -> u32 {
        self.op_fmt.frac_bits().max(self.param_fmt.frac_bits())
    }
}

impl fmt::Display for BitWidthConfig {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(n) = self.preset {
            write!(fm, "#{n} ")?;
        }
        write!(fm, "{}/{}", self.param_fmt, self.op_fmt)
    }
}
