//! The single-precision register model: sign, 8-bit biased exponent and a
//! mantissa of configurable width (23 for IEEE binary32).

use std::fmt;

pub const EXPONENT_WIDTH: usize = 8;
pub const EXPONENT_BIAS: u32 = 127;
pub const MANTISSA_WIDTH: usize = 23;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FloatClass {
    Normal,
    Zero,
    Subnormal,
    Infinity,
    NaN,
}

impl fmt::Display for FloatClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FloatClass::Normal => "normal",
            FloatClass::Zero => "zero",
            FloatClass::Subnormal => "subnormal",
            FloatClass::Infinity => "infinity",
            FloatClass::NaN => "NaN",
        })
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FloatError {
    #[error("{0} input unsupported: operands must be normalized")]
    Unsupported(FloatClass),
    #[error("cannot parse `{0}` as a 0x-prefixed 8-digit hex pattern or a decimal float")]
    Parse(String),
    #[error("mantissa width {0} is outside 0..=23")]
    BadWidth(usize),
    #[error("mantissa {mantissa:#x} does not fit in {width} bits")]
    MantissaOutOfRange { mantissa: u32, width: usize },
    #[error("operand mantissa widths differ: {0} vs {1}")]
    WidthMismatch(usize, usize),
}

/// `(S, E, M)` with `M` holding `mantissa_width` bits below the hidden 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Float32Fields {
    pub sign: bool,
    pub exponent: u8,
    pub mantissa: u32,
    mantissa_width: usize,
}

impl Float32Fields {
    pub fn new(sign: bool, exponent: u8, mantissa: u32, mantissa_width: usize) -> Result<Self, FloatError> {
        if mantissa_width > MANTISSA_WIDTH {
            return Err(FloatError::BadWidth(mantissa_width));
        }
        if u64::from(mantissa) >> mantissa_width != 0 {
            return Err(FloatError::MantissaOutOfRange {
                mantissa,
                width: mantissa_width,
            });
        }
        Ok(Self {
            sign,
            exponent,
            mantissa,
            mantissa_width,
        })
    }

    pub fn from_bits(bits: u32) -> Self {
        Self {
            sign: bits >> 31 == 1,
            exponent: (bits >> 23) as u8,
            mantissa: bits & 0x7F_FFFF,
            mantissa_width: MANTISSA_WIDTH,
        }
    }

    pub fn from_f32(value: f32) -> Self {
        Self::from_bits(value.to_bits())
    }

    pub fn mantissa_width(&self) -> usize {
        self.mantissa_width
    }

    /// Keeps the top `width` mantissa bits (round toward zero).
    pub fn truncate_to_width(&self, width: usize) -> Result<Self, FloatError> {
        if width > self.mantissa_width {
            return Err(FloatError::BadWidth(width));
        }
        Ok(Self {
            mantissa: self.mantissa >> (self.mantissa_width - width),
            mantissa_width: width,
            ..*self
        })
    }

    /// binary32 pattern, with a reduced-width mantissa left-aligned in the 23-bit field.
    pub fn to_bits(&self) -> u32 {
        (u32::from(self.sign) << 31)
            | (u32::from(self.exponent) << 23)
            | (self.mantissa << (MANTISSA_WIDTH - self.mantissa_width))
    }

    /// Classification by the binary32 rules (exponent 0 or 255 are special).
    pub fn class(&self) -> FloatClass {
        match (self.exponent, self.mantissa) {
            (0, 0) => FloatClass::Zero,
            (0, _) => FloatClass::Subnormal,
            (255, 0) => FloatClass::Infinity,
            (255, _) => FloatClass::NaN,
            _ => FloatClass::Normal,
        }
    }

    pub fn ensure_normal(&self) -> Result<(), FloatError> {
        match self.class() {
            FloatClass::Normal => Ok(()),
            other => Err(FloatError::Unsupported(other)),
        }
    }

    /// `1.M` as an integer: `2^W + M`.
    pub fn significand(&self) -> u64 {
        (1u64 << self.mantissa_width) | u64::from(self.mantissa)
    }

    /// Real value `(-1)^S · 1.M · 2^(E − 127)` (only meaningful for normal fields).
    pub fn value(&self) -> f64 {
        let mag = self.significand() as f64 / (1u64 << self.mantissa_width) as f64;
        let v = mag * 2f64.powi(i32::from(self.exponent) - EXPONENT_BIAS as i32);
        if self.sign {
            -v
        } else {
            v
        }
    }
}

impl fmt::Display for Float32Fields {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "S={} E={:08b} M={:0w$b}",
            u8::from(self.sign),
            self.exponent,
            self.mantissa,
            w = self.mantissa_width.max(1)
        )
    }
}

/// Parses `0x` followed by exactly 8 hex digits, or a decimal float.
pub fn parse_operand(text: &str) -> Result<Float32Fields, FloatError> {
    let t = text.trim();
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        if hex.len() != 8 {
            return Err(FloatError::Parse(text.to_string()));
        }
        return u32::from_str_radix(hex, 16)
            .map(Float32Fields::from_bits)
            .map_err(|_| FloatError::Parse(text.to_string()));
    }
    t.parse::<f32>()
        .map(Float32Fields::from_f32)
        .map_err(|_| FloatError::Parse(text.to_string()))
}

pub fn format_hex(bits: u32) -> String {
    format!("0x{bits:08X}")
}
