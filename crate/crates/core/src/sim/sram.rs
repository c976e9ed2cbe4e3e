//! Parameter SRAM: 102 words of 25 fields each.
//!
//! | addresses | contents                                       |
//! |-----------|------------------------------------------------|
//! | 0..=79    | gate words, `4*cell + gate` with gates i,f,g,o |
//! | 80..=99   | FC1 neuron words                               |
//! | 100..=101 | FC2 neuron words                               |
//!
//! Gate words hold `U[0..20], W[0..4], B`; FC words hold `W[0..20], B` and
//! four zero fields. Field 0 is the most significant in the packed word.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::fxp::{FxpFormat, FxpValue};
use crate::net::{Dims, Gate, GateParams, Neuron, QuantizedModel, FC1_NEURONS, FC2_NEURONS, MAX_CELLS, MAX_CHANNELS};
use crate::sim::SimError;

pub const SRAM_WORDS: usize = 102;
pub const FIELDS_PER_WORD: usize = 25;
pub const GATE_BASE: usize = 0;
pub const FC1_BASE: usize = 80;
pub const FC2_BASE: usize = 100;
/// Field index of the recurrent weights, input weights and bias in a gate word.
pub const U_FIELD: usize = 0;
pub const W_FIELD: usize = MAX_CELLS;
pub const BIAS_FIELD: usize = MAX_CELLS + MAX_CHANNELS;
/// Field index of an FC neuron's bias.
pub const FC_BIAS_FIELD: usize = 20;

pub fn address_of_gate(cell: usize, gate: Gate) -> Result<usize, SimError> {
    if cell >= MAX_CELLS {
        return Err(SimError::Address { what: "cell", index: cell });
    }
    Ok(GATE_BASE + 4 * cell + gate.index())
}

pub fn address_of_fc1(neuron: usize) -> Result<usize, SimError> {
    if neuron >= FC1_NEURONS {
        return Err(SimError::Address { what: "fc1 neuron", index: neuron });
    }
    Ok(FC1_BASE + neuron)
}

pub fn address_of_fc2(neuron: usize) -> Result<usize, SimError> {
    if neuron >= FC2_NEURONS {
        return Err(SimError::Address { what: "fc2 neuron", index: neuron });
    }
    Ok(FC2_BASE + neuron)
}

/// One SRAM word as 25 two's-complement fields of the parameter width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SramWord {
    pub fields: [u32; FIELDS_PER_WORD],
}

impl SramWord {
    pub const ZERO: SramWord = SramWord {
        fields: [0; FIELDS_PER_WORD],
    };

    pub fn is_zero(&self) -> bool {
        self.fields.iter().all(|&f| f == 0)
    }

    pub fn field(&self, i: usize, format: FxpFormat) -> FxpValue {
        FxpValue::from_bits(self.fields[i], format)
    }

    /// Concatenated word, field 0 first, as binary digits.
    pub fn to_bit_string(&self, format: FxpFormat) -> String {
        let b = format.total_bits();
        let mut s = String::with_capacity(FIELDS_PER_WORD * b as usize);
        for &f in &self.fields {
            for i in (0..b).rev() {
                s.push(if f >> i & 1 == 1 { '1' } else { '0' });
            }
        }
        s
    }

    /// Upper-case hex of the concatenated word, left-padded to whole digits.
    pub fn to_hex(&self, format: FxpFormat) -> String {
        let bits = self.to_bit_string(format);
        let pad = (4 - bits.len() % 4) % 4;
        let padded: Vec<u8> = core::iter::repeat_n(b'0', pad).chain(bits.bytes()).collect();
        padded
            .chunks(4)
            .map(|nib| {
                let v = nib.iter().fold(0u32, |acc, &c| acc << 1 | (c - b'0') as u32);
                char::from_digit(v, 16).expect("nibble").to_ascii_uppercase()
            })
            .collect()
    }

    pub fn from_hex(hex: &str, format: FxpFormat) -> Result<Self, SimError> {
        let b = format.total_bits() as usize;
        let width = FIELDS_PER_WORD * b;
        let digits = width.div_ceil(4);
        let hex = hex.trim();
        if hex.len() != digits {
            return Err(SimError::Image(alloc::format!(
                "expected {digits} hex digits for a {width}-bit word, found {}",
                hex.len()
            )));
        }
        let mut bits = Vec::with_capacity(digits * 4);
        for c in hex.chars() {
            let v = c
                .to_digit(16)
                .ok_or_else(|| SimError::Image(alloc::format!("invalid hex digit {c:?}")))?;
            bits.extend((0..4).rev().map(|i| (v >> i) & 1));
        }
        let pad = digits * 4 - width;
        if bits[..pad].iter().any(|&x| x != 0) {
            return Err(SimError::Image(String::from("padding bits of a word must be zero")));
        }
        let mut fields = [0u32; FIELDS_PER_WORD];
        for (i, chunk) in bits[pad..].chunks(b).enumerate() {
            fields[i] = chunk.iter().fold(0, |acc, &x| acc << 1 | x);
        }
        Ok(SramWord { fields })
    }
}

/// The full parameter memory in one parameter format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SramImage {
    format: FxpFormat,
    words: Vec<SramWord>,
}

impl SramImage {
    pub fn zeroed(format: FxpFormat) -> Self {
        Self {
            format,
            words: vec![SramWord::ZERO; SRAM_WORDS],
        }
    }

    pub fn format(&self) -> FxpFormat {
        self.format
    }

    pub fn words(&self) -> &[SramWord] {
        &self.words
    }

    pub fn word(&self, addr: usize) -> Result<&SramWord, SimError> {
        self.words.get(addr).ok_or(SimError::Address { what: "sram address", index: addr })
    }

    pub fn set_word(&mut self, addr: usize, word: SramWord) -> Result<(), SimError> {
        let slot = self
            .words
            .get_mut(addr)
            .ok_or(SimError::Address { what: "sram address", index: addr })?;
        *slot = word;
        Ok(())
    }

    pub fn word_bits(&self) -> usize {
        FIELDS_PER_WORD * self.format.total_bits() as usize
    }

    /// Bits occupied by the parameters of a network of shape `dims`.
    pub fn parameter_bits(dims: Dims, format: FxpFormat) -> usize {
        crate::net::ParamCounts::for_dims(dims).total() * format.total_bits() as usize
    }

    /// One hex word per line, addresses ascending.
    pub fn to_hex_lines(&self) -> Vec<String> {
        self.words.iter().map(|w| w.to_hex(self.format)).collect()
    }

    pub fn from_hex_lines<'a>(lines: impl IntoIterator<Item = &'a str>, format: FxpFormat) -> Result<Self, SimError> {
        let words = lines
            .into_iter()
            .filter(|l| !l.trim().is_empty())
            .map(|l| SramWord::from_hex(l, format))
            .collect::<Result<Vec<_>, _>>()?;
        if words.len() != SRAM_WORDS {
            return Err(SimError::Image(alloc::format!(
                "expected {SRAM_WORDS} words, found {}",
                words.len()
            )));
        }
        Ok(Self { format, words })
    }
}

fn check_packable(dims: Dims) -> Result<(), SimError> {
    if dims.num_cells == 0 || dims.num_cells > MAX_CELLS || dims.input_channels == 0 || dims.input_channels > MAX_CHANNELS {
        return Err(SimError::Unsupported(alloc::format!(
            "the accelerator holds at most {MAX_CELLS} cells and {MAX_CHANNELS} input channels, model has {} and {}",
            dims.num_cells, dims.input_channels
        )));
    }
    Ok(())
}

/// Lay out a quantized model in SRAM.
pub fn pack_sram(model: &QuantizedModel) -> Result<SramImage, SimError> {
    model.validate()?;
    check_packable(model.dims)?;
    let format = model.param_format();
    model.check_format(format)?;
    let mut img = SramImage::zeroed(format);
    for (n, gates) in model.cells.iter().enumerate() {
        for gate in Gate::ALL {
            let p = &gates[gate.index()];
            let mut word = SramWord::ZERO;
            for (k, v) in p.u.iter().enumerate() {
                word.fields[U_FIELD + k] = v.to_bits();
            }
            for (d, v) in p.w.iter().enumerate() {
                word.fields[W_FIELD + d] = v.to_bits();
            }
            word.fields[BIAS_FIELD] = p.b.to_bits();
            img.set_word(address_of_gate(n, gate)?, word)?;
        }
    }
    let neuron_word = |n: &Neuron<FxpValue>| {
        let mut word = SramWord::ZERO;
        for (k, v) in n.w.iter().enumerate() {
            word.fields[k] = v.to_bits();
        }
        word.fields[FC_BIAS_FIELD] = n.b.to_bits();
        word
    };
    for (j, n) in model.fc1.iter().enumerate() {
        img.set_word(address_of_fc1(j)?, neuron_word(n))?;
    }
    for (k, n) in model.fc2.iter().enumerate() {
        img.set_word(address_of_fc2(k)?, neuron_word(n))?;
    }
    Ok(img)
}

/// Read a model of shape `dims` back out of an image.
pub fn unpack_sram(img: &SramImage, dims: Dims) -> Result<QuantizedModel, SimError> {
    check_packable(dims)?;
    let fmt = img.format();
    let mut cells = Vec::with_capacity(dims.num_cells);
    for n in 0..dims.num_cells {
        let mut gates = Vec::with_capacity(4);
        for gate in Gate::ALL {
            let w = img.word(address_of_gate(n, gate)?)?;
            gates.push(GateParams {
                u: (0..dims.num_cells).map(|k| w.field(U_FIELD + k, fmt)).collect(),
                w: (0..dims.input_channels).map(|d| w.field(W_FIELD + d, fmt)).collect(),
                b: w.field(BIAS_FIELD, fmt),
            });
        }
        let gates: [GateParams<FxpValue>; 4] = gates.try_into().expect("four gates");
        cells.push(gates);
    }
    let neuron = |w: &SramWord, inputs: usize| Neuron {
        w: (0..inputs).map(|k| w.field(k, fmt)).collect(),
        b: w.field(FC_BIAS_FIELD, fmt),
    };
    let fc1 = (0..FC1_NEURONS)
        .map(|j| Ok(neuron(img.word(address_of_fc1(j)?)?, dims.num_cells)))
        .collect::<Result<Vec<_>, SimError>>()?;
    let fc2 = (0..FC2_NEURONS)
        .map(|k| Ok(neuron(img.word(address_of_fc2(k)?)?, FC1_NEURONS)))
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(QuantizedModel { dims, cells, fc1, fc2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fxp::RoundingMode;
    use crate::net::{gen_fixture_model, ModelParams};

    const P8: FxpFormat = FxpFormat::new_const(8, 6);

    #[test]
    fn address_map() {
        assert_eq!(address_of_gate(0, Gate::I).unwrap(), 0);
        assert_eq!(address_of_gate(19, Gate::O).unwrap(), 79);
        assert_eq!(address_of_fc1(0).unwrap(), 80);
        assert_eq!(address_of_fc1(19).unwrap(), 99);
        assert_eq!(address_of_fc2(1).unwrap(), 101);
        assert!(address_of_gate(20, Gate::I).is_err());
        assert!(address_of_fc1(20).is_err());
        assert!(address_of_fc2(2).is_err());
    }

    #[test]
    fn zero_model_packs_to_zero_words() {
        let (q, _) = ModelParams::zeros(Dims::default()).quantize(P8, RoundingMode::NearestTiesAway).unwrap();
        let img = pack_sram(&q).unwrap();
        assert!(img.words().iter().all(SramWord::is_zero));
    }

    #[test]
    fn single_parameter_lands_in_most_significant_field() {
        let mut m = ModelParams::zeros(Dims::default());
        m.cells[0][0].u[0] = 100.0;
        let (q, _) = m.quantize(P8, RoundingMode::NearestTiesAway).unwrap();
        let img = pack_sram(&q).unwrap();
        for (addr, w) in img.words().iter().enumerate() {
            assert_eq!(w.is_zero(), addr != 0);
        }
        let bits = img.word(0).unwrap().to_bit_string(P8);
        assert_eq!(&bits[..8], "01111111");
        assert!(bits[8..].bytes().all(|b| b == b'0'));
        assert_eq!(img.words()[0].to_hex(P8), alloc::format!("7F{}", "0".repeat(48)));
    }

    #[test]
    fn fixture_round_trip_and_hex() {
        for fmt in crate::config::SRAM_PARAM_FORMATS {
            let (q, _) = gen_fixture_model(42).quantize(fmt, RoundingMode::NearestTiesAway).unwrap();
            let img = pack_sram(&q).unwrap();
            assert_eq!(unpack_sram(&img, q.dims).unwrap(), q);
            let lines = img.to_hex_lines();
            assert_eq!(lines.len(), SRAM_WORDS);
            let back = SramImage::from_hex_lines(lines.iter().map(String::as_str), fmt).unwrap();
            assert_eq!(back, img);
        }
    }

    #[test]
    fn fc_words_have_zero_padding() {
        let (q, _) = gen_fixture_model(1).quantize(P8, RoundingMode::NearestTiesAway).unwrap();
        let img = pack_sram(&q).unwrap();
        for addr in FC1_BASE..SRAM_WORDS {
            assert_eq!(&img.words()[addr].fields[21..], &[0, 0, 0, 0]);
        }
    }

    #[test]
    fn parameter_bit_totals() {
        let d = Dims::default();
        let bits: Vec<usize> = crate::config::SRAM_PARAM_FORMATS
            .iter()
            .map(|&f| SramImage::parameter_bits(d, f))
            .collect();
        assert_eq!(bits, [24620, 22158, 19696]);
    }

    #[test]
    fn hex_rejects_bad_input() {
        assert!(SramWord::from_hex("7F", P8).is_err());
        let mut s = "0".repeat(50);
        s.replace_range(0..1, "G");
        assert!(SramWord::from_hex(&s, P8).is_err());
        // 25 * 9 = 225 bits: the top three bits of the first digit are padding.
        let fmt9 = FxpFormat::new_const(9, 7);
        let mut s = "0".repeat(57);
        s.replace_range(0..1, "2");
        assert!(SramWord::from_hex(&s, fmt9).is_err());
    }
}
