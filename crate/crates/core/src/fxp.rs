//! Saturating two's-complement fixed-point arithmetic.
//!
//! A format `FxP(b, f)` has `b` total bits of which `f` are fraction bits and
//! one is the sign. Values carry their raw integer and format; every
//! conversion into a format is a shift, an offset, a truncation and a clamp,
//! all done in integer arithmetic except for the initial scaling of a real.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

/// Largest supported total bit-width.
pub const MAX_BITS: u32 = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FxpError {
    /// Format with unsupported widths.
    InvalidFormat { total_bits: u32, frac_bits: u32 },
    /// Unparseable `FxP(b,f)` string.
    Parse(String),
    /// Quantizing NaN or an infinity.
    NonFinite,
    /// Raw integer outside the format's range.
    RawOutOfRange { raw: i64, format: FxpFormat },
    /// Addend fraction bits differ from the accumulator's.
    FracMismatch { acc_frac: u32, value_frac: u32 },
    /// Bit-string has the wrong length or contains something other than 0/1.
    BitString { expected: usize, found: String },
}

impl fmt::Display for FxpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FxpError::InvalidFormat { total_bits, frac_bits } => write!(
                f,
                "invalid fixed-point format FxP({total_bits},{frac_bits}): need 2 <= b <= {MAX_BITS} and f <= b-1"
            ),
            FxpError::Parse(s) => write!(f, "cannot parse fixed-point format {s:?} (expected e.g. \"FxP(13,9)\")"),
            FxpError::NonFinite => f.write_str("cannot quantize a non-finite value"),
            FxpError::RawOutOfRange { raw, format } => {
                write!(f, "raw value {raw} does not fit in {format}")
            }
            FxpError::FracMismatch { acc_frac, value_frac } => write!(
                f,
                "accumulator has {acc_frac} fraction bits but addend has {value_frac}"
            ),
            FxpError::BitString { expected, found } => {
                write!(f, "expected a {expected}-bit binary string, got {found:?}")
            }
        }
    }
}

/// Fixed-point format `FxP(b, f)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FxpFormat {
    total_bits: u8,
    frac_bits: u8,
}

/// Format the input samples are always quantized into.
pub const INPUT_FORMAT: FxpFormat = FxpFormat::new_const(10, 8);

/// Internal format of the activation polynomial units.
pub const ACT_FORMAT: FxpFormat = FxpFormat::new_const(18, 13);

impl FxpFormat {
    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self, FxpError> {
        if !(2..=MAX_BITS).contains(&total_bits) || frac_bits >= total_bits {
            return Err(FxpError::InvalidFormat { total_bits, frac_bits });
        }
        Ok(Self {
            total_bits: total_bits as u8,
            frac_bits: frac_bits as u8,
        })
    }

    /// Compile-time constructor; panics on an invalid format.
    pub const fn new_const(total_bits: u8, frac_bits: u8) -> Self {
        assert!(total_bits >= 2 && total_bits as u32 <= MAX_BITS && frac_bits < total_bits);
        Self { total_bits, frac_bits }
    }

    pub const fn total_bits(self) -> u32 {
        self.total_bits as u32
    }

    pub const fn frac_bits(self) -> u32 {
        self.frac_bits as u32
    }

    /// Integer bits excluding the sign bit.
    pub const fn int_bits(self) -> u32 {
        self.total_bits as u32 - self.frac_bits as u32 - 1
    }

    pub const fn max_raw(self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    pub const fn min_raw(self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    pub fn ulp(self) -> f64 {
        libm::ldexp(1.0, -(self.frac_bits as i32))
    }

    pub fn max(self) -> f64 {
        self.max_raw() as f64 * self.ulp()
    }

    pub fn min(self) -> f64 {
        self.min_raw() as f64 * self.ulp()
    }

    /// `(Min, Max)` of the format.
    pub fn range(self) -> (f64, f64) {
        (self.min(), self.max())
    }

    pub fn contains_raw(self, raw: i64) -> bool {
        (self.min_raw()..=self.max_raw()).contains(&raw)
    }

    /// Clamp a wide raw integer into range, reporting whether it was clamped.
    fn clamp_raw(self, raw: i128) -> (i32, bool) {
        let (lo, hi) = (self.min_raw() as i128, self.max_raw() as i128);
        if raw > hi {
            (hi as i32, true)
        } else if raw < lo {
            (lo as i32, true)
        } else {
            (raw as i32, false)
        }
    }

    /// True when every value of `self` is exactly representable in `other`.
    pub fn fits_in(self, other: FxpFormat) -> bool {
        self.frac_bits <= other.frac_bits && self.int_bits() <= other.int_bits()
    }
}

impl fmt::Display for FxpFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FxP({},{})", self.total_bits, self.frac_bits)
    }
}

impl FromStr for FxpFormat {
    type Err = FxpError;

    /// Accepts `FxP(13,9)`, `fxp(13, 9)`, `(13,9)` and `13,9`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || FxpError::Parse(String::from(s));
        let mut body = s.trim();
        if body.len() >= 3 && body[..3].eq_ignore_ascii_case("fxp") {
            body = body[3..].trim_start();
        }
        if let Some(inner) = body.strip_prefix('(') {
            body = inner.strip_suffix(')').ok_or_else(err)?;
        }
        let (b, f) = body.split_once(',').ok_or_else(err)?;
        let b: u32 = b.trim().parse().map_err(|_| err())?;
        let f: u32 = f.trim().parse().map_err(|_| err())?;
        FxpFormat::new(b, f)
    }
}

/// How the magnitude is offset before truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RoundingMode {
    /// Offset by half an ULP: round to nearest, ties away from zero.
    #[default]
    NearestTiesAway,
    /// Offset by a full ULP before truncating the magnitude. Exactly
    /// representable non-zero values move one ULP away from zero.
    PaperEpsilon,
}

impl fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoundingMode::NearestTiesAway => "nearest",
            RoundingMode::PaperEpsilon => "epsilon",
        })
    }
}

impl FromStr for RoundingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nearest" | "nearest-ties-away" | "round" => Ok(RoundingMode::NearestTiesAway),
            "epsilon" => Ok(RoundingMode::PaperEpsilon),
            other => Err(alloc::format!("unknown rounding mode {other:?} (nearest|epsilon)")),
        }
    }
}

/// A value in a fixed-point format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FxpValue {
    raw: i32,
    format: FxpFormat,
}

impl FxpValue {
    pub fn from_raw(raw: i64, format: FxpFormat) -> Result<Self, FxpError> {
        if !format.contains_raw(raw) {
            return Err(FxpError::RawOutOfRange { raw, format });
        }
        Ok(Self { raw: raw as i32, format })
    }

    pub const fn zero(format: FxpFormat) -> Self {
        Self { raw: 0, format }
    }

    pub const fn raw(self) -> i32 {
        self.raw
    }

    pub const fn format(self) -> FxpFormat {
        self.format
    }

    /// Exact real value `raw * 2^-f`.
    pub fn to_real(self) -> f64 {
        libm::ldexp(self.raw as f64, -(self.format.frac_bits() as i32))
    }

    pub fn is_positive(self) -> bool {
        self.raw > 0
    }

    /// Two's-complement bit pattern in the low `b` bits.
    pub fn to_bits(self) -> u32 {
        let b = self.format.total_bits();
        let mask = if b == 32 { u32::MAX } else { (1u32 << b) - 1 };
        (self.raw as u32) & mask
    }

    /// Sign-extend the low `b` bits of `bits`; higher bits are ignored.
    pub fn from_bits(bits: u32, format: FxpFormat) -> Self {
        let pad = 32 - format.total_bits();
        let raw = ((bits << pad) as i32) >> pad;
        Self { raw, format }
    }

    /// Bits as a `b`-character string, sign bit first.
    pub fn encode_bits(self) -> String {
        let b = self.format.total_bits();
        let bits = self.to_bits();
        (0..b)
            .rev()
            .map(|i| if bits >> i & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    pub fn decode_bits(bits: &str, format: FxpFormat) -> Result<Self, FxpError> {
        let expected = format.total_bits() as usize;
        let bad = || FxpError::BitString {
            expected,
            found: String::from(bits),
        };
        if bits.len() != expected {
            return Err(bad());
        }
        let mut word = 0u32;
        for c in bits.chars() {
            word = (word << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    _ => return Err(bad()),
                };
        }
        Ok(Self::from_bits(word, format))
    }

    /// Exact re-expression in a format that contains this one.
    pub fn widen(self, to: FxpFormat) -> Option<Self> {
        let shift = to.frac_bits().checked_sub(self.format.frac_bits())?;
        let raw = (self.raw as i64) << shift;
        Self::from_raw(raw, to).ok()
    }
}

/// Result of a conversion that may have saturated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[must_use]
pub struct Rounded {
    pub value: FxpValue,
    pub saturated: bool,
}

impl Rounded {
    /// Add the saturation event (if any) to `counter` and return the value.
    #[inline]
    pub fn tally(self, counter: &mut u64) -> FxpValue {
        *counter += self.saturated as u64;
        self.value
    }
}

/// Round a non-negative magnitude held at `src_frac` fraction bits to `dst_frac`.
fn round_magnitude(mag: u128, src_frac: u32, dst_frac: u32, mode: RoundingMode) -> u128 {
    let base = if src_frac >= dst_frac {
        let shift = src_frac - dst_frac;
        let kept = if shift >= 128 { 0 } else { mag >> shift };
        match mode {
            RoundingMode::NearestTiesAway if shift > 0 && shift <= 128 => {
                kept + ((mag >> (shift - 1)) & 1)
            }
            _ => kept,
        }
    } else {
        let shift = dst_frac - src_frac;
        // Anything this large saturates every supported format anyway.
        if mag.leading_zeros() <= shift + 34 {
            1u128 << 100
        } else {
            mag << shift
        }
    };
    match mode {
        RoundingMode::NearestTiesAway => base,
        RoundingMode::PaperEpsilon => base + 1,
    }
}

/// Integer-only conversion of `raw * 2^-src_frac` into `format`.
pub fn requantize_raw(raw: i128, src_frac: u32, format: FxpFormat, mode: RoundingMode) -> Rounded {
    if raw == 0 {
        return Rounded {
            value: FxpValue::zero(format),
            saturated: false,
        };
    }
    let mag = round_magnitude(raw.unsigned_abs(), src_frac, format.frac_bits(), mode);
    // `mag` is far below 2^127 by construction.
    let signed = if raw < 0 { -(mag as i128) } else { mag as i128 };
    let (raw, saturated) = format.clamp_raw(signed);
    Rounded {
        value: FxpValue { raw, format },
        saturated,
    }
}

/// Quantize a real into `format`: scale the magnitude, offset by the rounding
/// epsilon, truncate, restore the sign and clamp to `[Min, Max]`.
pub fn quantize(x: f64, format: FxpFormat, mode: RoundingMode) -> Result<Rounded, FxpError> {
    if !x.is_finite() {
        return Err(FxpError::NonFinite);
    }
    if x == 0.0 {
        return Ok(Rounded {
            value: FxpValue::zero(format),
            saturated: false,
        });
    }
    // Scaling by a power of two is exact; floor and the fractional remainder
    // of a double are exact too, so no real-valued addition is involved.
    let scaled = libm::ldexp(libm::fabs(x), format.frac_bits() as i32);
    let mag: u128 = if scaled >= 4_294_967_296.0 {
        1u128 << 40
    } else {
        let whole = libm::floor(scaled);
        let frac = scaled - whole;
        let whole = whole as u128;
        match mode {
            RoundingMode::NearestTiesAway => whole + (frac >= 0.5) as u128,
            RoundingMode::PaperEpsilon => whole + 1,
        }
    };
    let signed = if x < 0.0 { -(mag as i128) } else { mag as i128 };
    let (raw, saturated) = format.clamp_raw(signed);
    Ok(Rounded {
        value: FxpValue { raw, format },
        saturated,
    })
}

/// `(Min, Max)` of a format.
pub fn format_range(format: FxpFormat) -> (f64, f64) {
    format.range()
}

/// Exact product rounded and saturated into `out`.
pub fn fxp_mul(a: FxpValue, b: FxpValue, out: FxpFormat, mode: RoundingMode) -> Rounded {
    let product = a.raw as i64 * b.raw as i64;
    requantize_raw(
        product as i128,
        a.format.frac_bits() + b.format.frac_bits(),
        out,
        mode,
    )
}

/// Unbounded exact accumulator for sums of fixed-point values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WideAccumulator {
    raw: i128,
    frac_bits: u32,
}

impl WideAccumulator {
    pub const fn new(frac_bits: u32) -> Self {
        Self { raw: 0, frac_bits }
    }

    pub const fn raw(&self) -> i128 {
        self.raw
    }

    pub const fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn to_real(&self) -> f64 {
        libm::ldexp(self.raw as f64, -(self.frac_bits as i32))
    }

    /// Add a value with the same number of fraction bits.
    pub fn add(&mut self, v: FxpValue) -> Result<(), FxpError> {
        if v.format.frac_bits() != self.frac_bits {
            return Err(FxpError::FracMismatch {
                acc_frac: self.frac_bits,
                value_frac: v.format.frac_bits(),
            });
        }
        self.raw += v.raw as i128;
        Ok(())
    }

    /// Add a value with at most as many fraction bits, aligned by an exact shift.
    pub fn add_aligned(&mut self, v: FxpValue) -> Result<(), FxpError> {
        let shift = self
            .frac_bits
            .checked_sub(v.format.frac_bits())
            .ok_or(FxpError::FracMismatch {
                acc_frac: self.frac_bits,
                value_frac: v.format.frac_bits(),
            })?;
        self.raw += (v.raw as i128) << shift;
        Ok(())
    }

    pub fn requantize(&self, out: FxpFormat, mode: RoundingMode) -> Rounded {
        requantize_raw(self.raw, self.frac_bits, out, mode)
    }
}

/// Functional form of [`WideAccumulator::add`].
pub fn wide_add(mut acc: WideAccumulator, v: FxpValue) -> Result<WideAccumulator, FxpError> {
    acc.add(v)?;
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use alloc::string::ToString;


    const NTA: RoundingMode = RoundingMode::NearestTiesAway;

    fn fmt(b: u8, f: u8) -> FxpFormat {
        FxpFormat::new_const(b, f)
    }

    fn q(x: f64, b: u8, f: u8) -> FxpValue {
        quantize(x, fmt(b, f), NTA).unwrap().value
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(q(0.0, 10, 8).raw(), 0);
        let v = q(0.1, 10, 8);
        assert_eq!(v.raw(), 26);
        assert_eq!(v.to_real(), 0.1015625);
        for mode in [NTA, RoundingMode::PaperEpsilon] {
            let r = quantize(-3.0, fmt(10, 8), mode).unwrap();
            assert_eq!(r.value.to_real(), -2.0);
            assert!(r.saturated);
            assert_eq!(quantize(100.0, fmt(8, 6), mode).unwrap().value.to_real(), 1.984375);
        }
    }

    #[test]
    fn quantize_rejects_non_finite() {
        for x in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
            assert_eq!(quantize(x, fmt(10, 8), NTA), Err(FxpError::NonFinite));
        }
    }

    #[test]
    fn ties_round_away_from_zero() {
        assert_eq!(q(0.5 / 256.0, 10, 8).raw(), 1);
        assert_eq!(q(-0.5 / 256.0, 10, 8).raw(), -1);
        assert_eq!(q(1.5 / 256.0, 10, 8).raw(), 2);
        // Just below a tie.
        assert_eq!(q(0.5 / 256.0 - 1e-12, 10, 8).raw(), 0);
    }

    #[test]
    fn epsilon_moves_representables_up() {
        let r = quantize(0.25, fmt(10, 8), RoundingMode::PaperEpsilon).unwrap();
        assert_eq!(r.value.raw(), 65);
        let r = quantize(-0.25, fmt(10, 8), RoundingMode::PaperEpsilon).unwrap();
        assert_eq!(r.value.raw(), -65);
    }

    #[test]
    fn format_ranges() {
        assert_eq!(format_range(fmt(10, 8)), (-2.0, 1.99609375));
        assert_eq!(format_range(fmt(13, 9)), (-8.0, 7.998046875));
        assert_eq!(format_range(fmt(18, 13)), (-16.0, 15.9998779296875));
    }

    #[test]
    fn format_validation_and_parsing() {
        assert!(FxpFormat::new(1, 0).is_err());
        assert!(FxpFormat::new(33, 8).is_err());
        assert!(FxpFormat::new(8, 8).is_err());
        assert!(FxpFormat::new(8, 7).is_ok());
        assert_eq!("FxP(13,9)".parse::<FxpFormat>().unwrap(), fmt(13, 9));
        assert_eq!(" fxp( 18 , 13 ) ".parse::<FxpFormat>().unwrap(), fmt(18, 13));
        assert_eq!("(8,6)".parse::<FxpFormat>().unwrap(), fmt(8, 6));
        assert_eq!("12,8".parse::<FxpFormat>().unwrap(), fmt(12, 8));
        assert!("FxP(13;9)".parse::<FxpFormat>().is_err());
        assert!("FxP(13,13)".parse::<FxpFormat>().is_err());
        assert_eq!(fmt(13, 9).to_string(), "FxP(13,9)");
    }

    #[test]
    fn mul_examples() {
        let f = fmt(13, 9);
        let half = q(0.5, 13, 9);
        assert_eq!(fxp_mul(half, half, f, NTA).value.to_real(), 0.25);
        let r = fxp_mul(q(1.5, 13, 9), q(-1.5, 13, 9), f, NTA);
        assert_eq!(r.value.to_real(), -2.25);
        assert!(!r.saturated);
        let max = FxpValue::from_raw(f.max_raw(), f).unwrap();
        let r = fxp_mul(max, max, f, NTA);
        assert_eq!(r.value, max);
        assert!(r.saturated);
        let mut count = 0;
        let _ = r.tally(&mut count);
        assert_eq!(count, 1);
    }

    #[test]
    fn mul_by_one_requantizes() {
        let one = q(1.0, 13, 9);
        let a = q(0.73, 10, 8);
        assert_eq!(fxp_mul(a, one, fmt(13, 9), NTA).value.to_real(), a.to_real());
    }

    #[test]
    fn wide_add_examples() {
        let f = fmt(13, 9);
        let acc = wide_add(WideAccumulator::new(9), q(0.25, 13, 9)).unwrap();
        assert_eq!(acc.to_real(), 0.25);

        let max = FxpValue::from_raw(f.max_raw(), f).unwrap();
        let mut acc = WideAccumulator::new(9);
        for _ in 0..25 {
            acc.add(max).unwrap();
        }
        assert_eq!(acc.raw(), 25 * 4095);
        assert_eq!(acc.to_real(), 199.951171875);

        let x = q(-3.25, 13, 9);
        let neg = FxpValue::from_raw(-(x.raw() as i64), f).unwrap();
        let acc = wide_add(wide_add(WideAccumulator::new(9), x).unwrap(), neg).unwrap();
        assert_eq!(acc.raw(), 0);

        assert!(matches!(
            WideAccumulator::new(9).add(q(0.5, 10, 8)),
            Err(FxpError::FracMismatch { acc_frac: 9, value_frac: 8 })
        ));
        let mut acc = WideAccumulator::new(9);
        acc.add_aligned(q(0.5, 10, 8)).unwrap();
        assert_eq!(acc.to_real(), 0.5);
        assert!(WideAccumulator::new(6).add_aligned(q(0.5, 10, 8)).is_err());
    }

    #[test]
    fn requantize_examples() {
        let out = fmt(13, 9);
        let acc = WideAccumulator { raw: 1 << 17, frac_bits: 18 };
        assert_eq!(acc.requantize(out, NTA).value.to_real(), 0.5);
        let acc = WideAccumulator { raw: 9 << 18, frac_bits: 18 };
        let r = acc.requantize(out, NTA);
        assert_eq!(r.value.to_real(), 7.998046875);
        assert!(r.saturated);
        let acc = WideAccumulator { raw: 1, frac_bits: 18 };
        assert_eq!(acc.requantize(out, NTA).value.raw(), 0);
    }

    #[test]
    fn bit_strings() {
        let f = fmt(8, 6);
        assert_eq!(FxpValue::zero(f).encode_bits(), "00000000");
        assert_eq!(FxpValue::from_raw(-1, f).unwrap().encode_bits(), "11111111");
        assert_eq!(FxpValue::from_raw(127, f).unwrap().encode_bits(), "01111111");
        assert_eq!(FxpValue::from_raw(-128, f).unwrap().encode_bits(), "10000000");
        assert_eq!(FxpValue::decode_bits("11111111", f).unwrap().raw(), -1);
        assert!(FxpValue::decode_bits("1111111", f).is_err());
        assert!(FxpValue::decode_bits("1111111x", f).is_err());
        let w = fmt(32, 16);
        let v = FxpValue::from_raw(w.min_raw(), w).unwrap();
        assert_eq!(FxpValue::from_bits(v.to_bits(), w), v);
    }

    #[test]
    fn from_raw_checks_range() {
        assert!(FxpValue::from_raw(128, fmt(8, 6)).is_err());
        assert!(FxpValue::from_raw(-129, fmt(8, 6)).is_err());
    }

    fn any_format() -> impl Strategy<Value = FxpFormat> {
        (2u32..=32).prop_flat_map(|b| (Just(b), 0..b)).prop_map(|(b, f)| FxpFormat::new(b, f).unwrap())
    }

    proptest! {
        #[test]
        fn bits_round_trip(format in any_format(), seed in any::<i64>()) {
            let span = format.max_raw() - format.min_raw() + 1;
            let raw = format.min_raw() + seed.rem_euclid(span);
            let v = FxpValue::from_raw(raw, format).unwrap();
            prop_assert_eq!(FxpValue::decode_bits(&v.encode_bits(), format).unwrap(), v);
            prop_assert_eq!(FxpValue::from_bits(v.to_bits(), format), v);
        }

        #[test]
        fn requantize_matches_real_quantize(
            raw in -(1i64 << 50)..(1i64 << 50),
            src_frac in 0u32..40,
            format in any_format(),
            eps in any::<bool>(),
        ) {
            let mode = if eps { RoundingMode::PaperEpsilon } else { NTA };
            let real = libm::ldexp(raw as f64, -(src_frac as i32));
            let int_path = requantize_raw(raw as i128, src_frac, format, mode);
            let real_path = quantize(real, format, mode).unwrap();
            prop_assert_eq!(int_path, real_path);
        }

        #[test]
        fn mul_commutes(a in -2048i64..2048, b in -512i64..512) {
            let fa = fmt(13, 9);
            let fb = fmt(10, 8);
            let va = FxpValue::from_raw(a, fa).unwrap();
            let vb = FxpValue::from_raw(b, fb).unwrap();
            prop_assert_eq!(fxp_mul(va, vb, fa, NTA), fxp_mul(vb, va, fa, NTA));
        }
    }
}
