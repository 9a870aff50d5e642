//! Integer reference for the truncating multiply that the neural circuit
//! implements. Written for obviousness, not speed.

use crate::float::{Float32Fields, FloatError, EXPONENT_BIAS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleResult {
    pub fields: Float32Fields,
    pub norm_bit: bool,
    /// `(2^W + M1) × (2^W + M2)`.
    pub raw_product: u64,
    /// `(E1 + E2 + norm_bit) mod 256`.
    pub exponent_sum: u8,
    /// Carry out of the 8-bit exponent addition.
    pub exponent_carry: bool,
    /// Overflow/underflow flag as the circuit defines it: the exponent carry.
    pub carry_flag: bool,
    /// Biased result exponent above 254.
    pub true_overflow: bool,
    /// Biased result exponent below 1.
    pub true_underflow: bool,
}

/// Multiplies two normalized operands of equal mantissa width with
/// truncation of the product mantissa.
pub fn ieee_mul_truncate(a: &Float32Fields, b: &Float32Fields) -> Result<OracleResult, FloatError> {
    a.ensure_normal()?;
    b.ensure_normal()?;
    let w = a.mantissa_width();
    if b.mantissa_width() != w {
        return Err(FloatError::WidthMismatch(w, b.mantissa_width()));
    }

    let raw_product = a.significand() * b.significand();
    // The product of two values in [1, 2) lies in [1, 4): bit 2W+1 marks >= 2.
    let norm_bit = (raw_product >> (2 * w + 1)) & 1 == 1;
    let shift = if norm_bit { w + 1 } else { w };
    let mantissa = ((raw_product >> shift) & ((1u64 << w) - 1)) as u32;

    let total = u32::from(a.exponent) + u32::from(b.exponent) + u32::from(norm_bit);
    let exponent_sum = (total & 0xFF) as u8;
    let exponent_carry = total > 0xFF;
    let exponent = exponent_sum.wrapping_sub(EXPONENT_BIAS as u8);
    let biased = total as i64 - i64::from(EXPONENT_BIAS);

    Ok(OracleResult {
        fields: Float32Fields::new(a.sign ^ b.sign, exponent, mantissa, w)?,
        norm_bit,
        raw_product,
        exponent_sum,
        exponent_carry,
        carry_flag: exponent_carry,
        true_overflow: biased > 254,
        true_underflow: biased < 1,
    })
}

/// Signals seen by one block of the array multiplier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BlockTrace {
    pub and_bit: bool,
    pub s_in: bool,
    pub c_in: bool,
    pub s_out: bool,
    pub c_out: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArrayTrace {
    /// `blocks[i][j]` is block `j` of stage `i`.
    pub blocks: Vec<Vec<BlockTrace>>,
    /// Product bits, LSB first, `2(W+1)` of them.
    pub product_bits: Vec<bool>,
    pub product: u64,
}

/// Runs the array multiplier wiring with ideal gates on `(W+1)`-bit operands.
///
/// Stage `i` ANDs `A_i` with every `B_j`. Block `j` adds that bit to the sum
/// from block `j+1` of the previous stage and the carry from block `j-1` of
/// the same stage; the last block takes the previous stage's final carry as
/// its sum input. Block 0 of stage `i` emits product bit `i`; the last stage
/// supplies the high half.
pub fn array_multiply_reference(a: u64, b: u64, width: usize) -> Result<ArrayTrace, FloatError> {
    let n = width + 1;
    if width > 31 {
        return Err(FloatError::BadWidth(width));
    }
    for v in [a, b] {
        if v >> n != 0 {
            return Err(FloatError::MantissaOutOfRange {
                mantissa: v as u32,
                width: n,
            });
        }
    }
    let bit = |v: u64, k: usize| (v >> k) & 1 == 1;

    let mut blocks = Vec::with_capacity(n);
    let mut product_bits = Vec::with_capacity(2 * n);
    let mut prev_sums = vec![false; n];
    let mut prev_carry = false;
    for i in 0..n {
        let mut row = Vec::with_capacity(n);
        let mut carry = false;
        for j in 0..n {
            let and_bit = bit(a, i) && bit(b, j);
            let s_in = if j + 1 < n { prev_sums[j + 1] } else { prev_carry };
            let total = u8::from(and_bit) + u8::from(s_in) + u8::from(carry);
            let t = BlockTrace {
                and_bit,
                s_in,
                c_in: carry,
                s_out: total & 1 == 1,
                c_out: total >= 2,
            };
            carry = t.c_out;
            row.push(t);
        }
        product_bits.push(row[0].s_out);
        prev_sums = row.iter().map(|t| t.s_out).collect();
        prev_carry = carry;
        blocks.push(row);
    }
    product_bits.extend(prev_sums[1..].iter().copied());
    product_bits.push(prev_carry);

    let product = product_bits
        .iter()
        .enumerate()
        .map(|(k, &b)| u64::from(b) << k)
        .sum();
    Ok(ArrayTrace {
        blocks,
        product_bits,
        product,
    })
}
