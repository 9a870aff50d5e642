//! The full multiplier: mantissa array, normalization, exponent adder, bias
//! subtractor and the sign/overflow unit, each built from gate ensembles.
//!
//! Evaluation is staged. The mantissa array runs first so that its
//! normalization bit is available as the carry-in of the exponent adder.

use std::fmt;
use std::str::FromStr;

use crate::float::{Float32Fields, FloatError, EXPONENT_BIAS, EXPONENT_WIDTH, MANTISSA_WIDTH};
use crate::gates::{lines_from_u64, lines_to_u64, BitLine, GateConfig, GateError, Inverter, MultiplierStage, NefParams, RippleAdder, XorGate};
use crate::nef::{Mode, NefError, SimConfig};
use crate::seed::derive_seed;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MulError {
    #[error(transparent)]
    Float(#[from] FloatError),
    #[error(transparent)]
    Gate(#[from] GateError),
}

impl From<NefError> for MulError {
    fn from(e: NefError) -> Self {
        MulError::Gate(GateError::Nef(e))
    }
}

/// The four units of the multiplier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    ExponentAdder,
    BiasSubtractor,
    MantissaMultiplier,
    SignOfUf,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::ExponentAdder,
        Component::BiasSubtractor,
        Component::MantissaMultiplier,
        Component::SignOfUf,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Component::ExponentAdder => "exponent_adder",
            Component::BiasSubtractor => "bias_subtractor",
            Component::MantissaMultiplier => "mantissa_multiplier",
            Component::SignOfUf => "sign_of_uf",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("unknown component `{0}` (expected exponent_adder, bias_subtractor, mantissa_multiplier or sign_of_uf)")]
pub struct UnknownComponent(pub String);

impl FromStr for Component {
    type Err = UnknownComponent;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Component::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| UnknownComponent(s.to_string()))
    }
}

/// Neurons per ensemble for each unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NeuronBudget {
    pub exponent_adder: usize,
    pub bias_subtractor: usize,
    pub mantissa_multiplier: usize,
    pub sign_of_uf: usize,
}

impl Default for NeuronBudget {
    fn default() -> Self {
        Self {
            exponent_adder: 300,
            bias_subtractor: 300,
            mantissa_multiplier: 600,
            sign_of_uf: 100,
        }
    }
}

impl NeuronBudget {
    pub fn uniform(n: usize) -> Self {
        Self {
            exponent_adder: n,
            bias_subtractor: n,
            mantissa_multiplier: n,
            sign_of_uf: n,
        }
    }

    pub fn get(&self, c: Component) -> usize {
        match c {
            Component::ExponentAdder => self.exponent_adder,
            Component::BiasSubtractor => self.bias_subtractor,
            Component::MantissaMultiplier => self.mantissa_multiplier,
            Component::SignOfUf => self.sign_of_uf,
        }
    }

    pub fn set(&mut self, c: Component, n: usize) {
        match c {
            Component::ExponentAdder => self.exponent_adder = n,
            Component::BiasSubtractor => self.bias_subtractor = n,
            Component::MantissaMultiplier => self.mantissa_multiplier = n,
            Component::SignOfUf => self.sign_of_uf = n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircuitConfig {
    pub mantissa_width: usize,
    pub budget: NeuronBudget,
    pub mode: Mode,
    pub sim: SimConfig,
    pub nef: NefParams,
    /// Seed for ensemble construction.
    pub seed: u64,
}

impl CircuitConfig {
    pub fn new(mantissa_width: usize, mode: Mode) -> Self {
        Self {
            mantissa_width,
            budget: NeuronBudget::default(),
            mode,
            sim: SimConfig::default(),
            nef: NefParams::default(),
            seed: 0,
        }
    }

    pub fn gate_config(&self, component: Component) -> GateConfig {
        GateConfig {
            neurons_per_ensemble: self.budget.get(component),
            mode: self.mode,
            sim: self.sim,
            nef: self.nef,
        }
    }

    fn component_seed(&self, component: Component) -> u64 {
        derive_seed(self.seed, component as u64)
    }
}

/// Output of the exponent adder.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentSum {
    /// 8 lines, LSB first.
    pub sum: Vec<BitLine>,
    pub carry: BitLine,
}

/// 8-bit ripple adder computing `E1 + E2 + norm_bit`.
#[derive(Debug)]
pub struct ExponentAdder {
    adder: RippleAdder,
}

impl ExponentAdder {
    pub fn build(cfg: &CircuitConfig) -> Result<Self, NefError> {
        let gc = cfg.gate_config(Component::ExponentAdder);
        Ok(Self {
            adder: RippleAdder::build(EXPONENT_WIDTH, &gc, cfg.component_seed(Component::ExponentAdder))?,
        })
    }

    pub fn eval(&self, e1: u8, e2: u8, norm_bit: BitLine, run_seed: u64) -> Result<ExponentSum, GateError> {
        let (sum, carry) = self.adder.eval(
            &lines_from_u64(e1.into(), EXPONENT_WIDTH),
            &lines_from_u64(e2.into(), EXPONENT_WIDTH),
            norm_bit,
            run_seed,
        )?;
        Ok(ExponentSum { sum, carry })
    }
}

/// Subtracts the bias by two's-complement addition.
///
/// The bias constant is inverted bit by bit, incremented by one through an
/// 8-bit adder, and the result is added to the exponent sum by a second
/// 8-bit adder whose carry is discarded.
#[derive(Debug)]
pub struct BiasSubtractor {
    inverters: Vec<Inverter>,
    increment: RippleAdder,
    adder: RippleAdder,
}

impl BiasSubtractor {
    pub fn build(cfg: &CircuitConfig) -> Result<Self, NefError> {
        let gc = cfg.gate_config(Component::BiasSubtractor);
        let seed = cfg.component_seed(Component::BiasSubtractor);
        Ok(Self {
            inverters: (0..EXPONENT_WIDTH)
                .map(|k| Inverter::build(&gc, derive_seed(seed, 100 + k as u64)))
                .collect::<Result<_, _>>()?,
            increment: RippleAdder::build(EXPONENT_WIDTH, &gc, derive_seed(seed, 1))?,
            adder: RippleAdder::build(EXPONENT_WIDTH, &gc, derive_seed(seed, 2))?,
        })
    }

    /// Two's complement of the bias as produced by the neural converter.
    pub fn negated_bias(&self, run_seed: u64) -> Result<Vec<BitLine>, GateError> {
        let bias = lines_from_u64(EXPONENT_BIAS.into(), EXPONENT_WIDTH);
        let ones = self
            .inverters
            .iter()
            .zip(&bias)
            .enumerate()
            .map(|(k, (inv, &b))| inv.eval(b, derive_seed(run_seed, 100 + k as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        let (twos, _) = self.increment.eval(
            &ones,
            &lines_from_u64(1, EXPONENT_WIDTH),
            BitLine::constant(false),
            derive_seed(run_seed, 1),
        )?;
        Ok(twos)
    }

    /// `(E_sum − 127) mod 256`, LSB first.
    pub fn eval(&self, exponent_sum: &[BitLine], run_seed: u64) -> Result<Vec<BitLine>, GateError> {
        if exponent_sum.len() != EXPONENT_WIDTH {
            return Err(GateError::WidthMismatch(exponent_sum.len(), EXPONENT_WIDTH));
        }
        let neg_bias = self.negated_bias(run_seed)?;
        let clean: Vec<BitLine> = exponent_sum.iter().map(|l| BitLine::constant(l.bit())).collect();
        let (out, _carry) = self
            .adder
            .eval(&clean, &neg_bias, BitLine::constant(false), derive_seed(run_seed, 2))?;
        Ok(out)
    }
}

/// Output of the mantissa array.
#[derive(Clone, Debug, PartialEq)]
pub struct MantissaProduct {
    /// `2(W+1)` product lines, LSB first.
    pub raw_product: Vec<BitLine>,
}

impl MantissaProduct {
    /// Most significant product line.
    pub fn norm_bit(&self) -> BitLine {
        *self.raw_product.last().expect("non-empty product")
    }

    pub fn value(&self) -> u64 {
        lines_to_u64(&self.raw_product)
    }
}

/// `(W+1) x (W+1)` array of AND/full-adder blocks, one [`MultiplierStage`] per row.
#[derive(Debug)]
pub struct MantissaMultiplier {
    width: usize,
    stages: Vec<MultiplierStage>,
}

impl MantissaMultiplier {
    pub fn build(cfg: &CircuitConfig) -> Result<Self, MulError> {
        let w = cfg.mantissa_width;
        if w > MANTISSA_WIDTH {
            return Err(FloatError::BadWidth(w).into());
        }
        let gc = cfg.gate_config(Component::MantissaMultiplier);
        let seed = cfg.component_seed(Component::MantissaMultiplier);
        let stages = (0..=w)
            .map(|i| MultiplierStage::build(w + 1, &gc, derive_seed(seed, i as u64)))
            .collect::<Result<_, _>>()?;
        Ok(Self { width: w, stages })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Multiplies `1.M1` by `1.M2`; both mantissas are `W` bits wide.
    pub fn eval(&self, m1: u32, m2: u32, run_seed: u64) -> Result<MantissaProduct, MulError> {
        let w = self.width;
        for m in [m1, m2] {
            if u64::from(m) >> w != 0 {
                return Err(FloatError::MantissaOutOfRange { mantissa: m, width: w }.into());
            }
        }
        let n = w + 1;
        let a = lines_from_u64((1u64 << w) | u64::from(m1), n);
        let b = lines_from_u64((1u64 << w) | u64::from(m2), n);
        let mut raw = Vec::with_capacity(2 * n);
        let mut s_in = lines_from_u64(0, n);
        let mut last = None;
        for (i, stage) in self.stages.iter().enumerate() {
            let (sums, carry) = stage.eval(a[i], &b, &s_in, derive_seed(run_seed, i as u64))?;
            raw.push(sums[0]);
            s_in = sums[1..]
                .iter()
                .chain(std::iter::once(&carry))
                .map(|l| BitLine::constant(l.bit()))
                .collect();
            last = Some((sums, carry));
        }
        let (sums, carry) = last.expect("at least one stage");
        raw.extend_from_slice(&sums[1..]);
        raw.push(carry);
        Ok(MantissaProduct { raw_product: raw })
    }
}

/// Drops the hidden bit and keeps the next `width` bits of the product,
/// shifting right by one more when the normalization bit is set.
pub fn normalize(raw_product: &[BitLine], width: usize) -> Result<u32, MulError> {
    if raw_product.len() != 2 * (width + 1) {
        return Err(GateError::WidthMismatch(raw_product.len(), 2 * (width + 1)).into());
    }
    let norm = raw_product[2 * width + 1].bit();
    let shift = if norm { width + 1 } else { width };
    Ok(lines_to_u64(&raw_product[shift..shift + width]) as u32)
}

/// XOR of the sign bits, plus the overflow/underflow flag wired from the exponent carry.
#[derive(Debug)]
pub struct SignUnit {
    xor: XorGate,
}

impl SignUnit {
    pub fn build(cfg: &CircuitConfig) -> Result<Self, NefError> {
        let gc = cfg.gate_config(Component::SignOfUf);
        Ok(Self {
            xor: XorGate::build(&gc, cfg.component_seed(Component::SignOfUf))?,
        })
    }

    /// Returns `(S_out, of_uf)`.
    pub fn eval(&self, s1: bool, s2: bool, exponent_carry: BitLine, run_seed: u64) -> Result<(BitLine, BitLine), NefError> {
        let s = self.xor.eval(BitLine::constant(s1), BitLine::constant(s2), run_seed)?;
        Ok((s, exponent_carry))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductResult {
    pub fields: Float32Fields,
    pub normalization_bit: bool,
    /// Carry out of the exponent adder.
    pub exponent_carry: bool,
    pub of_uf_flag: bool,
    pub raw_product: Vec<BitLine>,
    pub exponent_sum: ExponentSum,
    pub exponent_out: Vec<BitLine>,
    pub sign: BitLine,
}

impl ProductResult {
    pub fn raw_product_value(&self) -> u64 {
        lines_to_u64(&self.raw_product)
    }
}

/// The assembled multiplier.
#[derive(Debug)]
pub struct MultiplierCircuit {
    cfg: CircuitConfig,
    mantissa: MantissaMultiplier,
    exponent: ExponentAdder,
    bias: BiasSubtractor,
    sign: SignUnit,
}

impl MultiplierCircuit {
    pub fn build(cfg: CircuitConfig) -> Result<Self, MulError> {
        Ok(Self {
            mantissa: MantissaMultiplier::build(&cfg)?,
            exponent: ExponentAdder::build(&cfg)?,
            bias: BiasSubtractor::build(&cfg)?,
            sign: SignUnit::build(&cfg)?,
            cfg,
        })
    }

    pub fn config(&self) -> &CircuitConfig {
        &self.cfg
    }

    pub fn mantissa_width(&self) -> usize {
        self.cfg.mantissa_width
    }

    pub fn mantissa_multiplier(&self) -> &MantissaMultiplier {
        &self.mantissa
    }

    pub fn exponent_adder(&self) -> &ExponentAdder {
        &self.exponent
    }

    pub fn bias_subtractor(&self) -> &BiasSubtractor {
        &self.bias
    }

    pub fn sign_unit(&self) -> &SignUnit {
        &self.sign
    }

    /// Multiplies two normalized operands of the circuit's mantissa width.
    /// Spiking runs are seeded from `run_seed`.
    pub fn multiply(&self, x: &Float32Fields, y: &Float32Fields, run_seed: u64) -> Result<ProductResult, MulError> {
        x.ensure_normal()?;
        y.ensure_normal()?;
        let w = self.mantissa_width();
        for f in [x, y] {
            if f.mantissa_width() != w {
                return Err(FloatError::WidthMismatch(f.mantissa_width(), w).into());
            }
        }

        let product = self.mantissa.eval(x.mantissa, y.mantissa, derive_seed(run_seed, 1))?;
        let norm = product.norm_bit();
        let mantissa = normalize(&product.raw_product, w)?;

        let exponent_sum = self
            .exponent
            .eval(x.exponent, y.exponent, BitLine::constant(norm.bit()), derive_seed(run_seed, 2))?;
        let exponent_out = self.bias.eval(&exponent_sum.sum, derive_seed(run_seed, 3))?;
        let (sign, of_uf) = self
            .sign
            .eval(x.sign, y.sign, exponent_sum.carry, derive_seed(run_seed, 4))?;

        Ok(ProductResult {
            fields: Float32Fields::new(sign.bit(), lines_to_u64(&exponent_out) as u8, mantissa, w)?,
            normalization_bit: norm.bit(),
            exponent_carry: exponent_sum.carry.bit(),
            of_uf_flag: of_uf.bit(),
            raw_product: product.raw_product,
            exponent_sum,
            exponent_out,
            sign,
        })
    }
}

/// Builds a circuit from `cfg` and multiplies once, seeding the run from `cfg.sim.master_seed`.
pub fn multiply(x: &Float32Fields, y: &Float32Fields, cfg: &CircuitConfig) -> Result<ProductResult, MulError> {
    MultiplierCircuit::build(*cfg)?.multiply(x, y, cfg.sim.master_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ieee_mul_truncate;

    fn rate_cfg(w: usize) -> CircuitConfig {
        let mut c = CircuitConfig::new(w, Mode::Rate);
        c.budget = NeuronBudget::uniform(100);
        c
    }

    #[test]
    fn component_names_round_trip() {
        for c in Component::ALL {
            assert_eq!(c.name().parse::<Component>().unwrap(), c);
        }
        assert!("adder".parse::<Component>().is_err());
    }

    #[test]
    fn table_budget() {
        let b = NeuronBudget::default();
        assert_eq!((b.exponent_adder, b.bias_subtractor, b.mantissa_multiplier, b.sign_of_uf), (300, 300, 600, 100));
    }

    #[test]
    fn exponent_adder_examples() {
        let cfg = rate_cfg(2);
        let add = ExponentAdder::build(&cfg).unwrap();
        let z = BitLine::constant(false);
        let r = add.eval(127, 127, z, 0).unwrap();
        assert_eq!((lines_to_u64(&r.sum), r.carry.bit()), (254, false));
        let r = add.eval(128, 128, z, 0).unwrap();
        assert_eq!((lines_to_u64(&r.sum), r.carry.bit()), (0, true));
        let r = add.eval(0, 0, BitLine::constant(true), 0).unwrap();
        assert_eq!((lines_to_u64(&r.sum), r.carry.bit()), (1, false));
    }

    #[test]
    fn bias_subtractor_examples() {
        let cfg = rate_cfg(2);
        let sub = BiasSubtractor::build(&cfg).unwrap();
        assert_eq!(lines_to_u64(&sub.negated_bias(0).unwrap()), 0b1000_0001);
        for (input, expected) in [(254, 127), (127, 0), (100, 229)] {
            let out = sub.eval(&lines_from_u64(input, 8), 0).unwrap();
            assert_eq!(lines_to_u64(&out), expected, "{input}");
        }
        assert!(sub.eval(&lines_from_u64(1, 7), 0).is_err());
    }

    #[test]
    fn mantissa_multiplier_examples() {
        let m = MantissaMultiplier::build(&rate_cfg(2)).unwrap();
        let p = m.eval(0b10, 0b10, 0).unwrap();
        assert_eq!(p.value(), 36);
        assert!(p.norm_bit().bit());
        assert_eq!(normalize(&p.raw_product, 2).unwrap(), 0);
        let p = m.eval(0, 0, 0).unwrap();
        assert_eq!(p.value(), 16);
        assert!(!p.norm_bit().bit());
        assert_eq!(normalize(&p.raw_product, 2).unwrap(), 0);
        assert!(m.eval(4, 0, 0).is_err());
    }

    #[test]
    fn sign_unit_examples() {
        let s = SignUnit::build(&rate_cfg(2)).unwrap();
        let c = |b| BitLine::constant(b);
        for (s1, s2, carry) in [(false, false, false), (true, false, false), (true, true, true)] {
            let (so, f) = s.eval(s1, s2, c(carry), 0).unwrap();
            assert_eq!((so.bit(), f.bit()), (s1 ^ s2, carry));
        }
    }

    #[test]
    fn full_width_products_in_rate_mode() {
        let circuit = MultiplierCircuit::build(rate_cfg(23)).unwrap();
        for (x, y) in [(1.0f32, 1.0f32), (2.5, 3.5), (-1.5, 2.0), (1.5, 1.5)] {
            let a = Float32Fields::from_f32(x);
            let b = Float32Fields::from_f32(y);
            let r = circuit.multiply(&a, &b, 0).unwrap();
            let o = ieee_mul_truncate(&a, &b).unwrap();
            assert_eq!(r.fields, o.fields, "{x} * {y}");
            assert_eq!(r.fields.to_bits(), (x * y).to_bits());
            assert_eq!(r.raw_product_value(), o.raw_product);
        }
    }

    #[test]
    fn rejects_special_values_and_width_mismatch() {
        let circuit = MultiplierCircuit::build(rate_cfg(3)).unwrap();
        let one = Float32Fields::from_f32(1.0).truncate_to_width(3).unwrap();
        let zero = Float32Fields::from_bits(0).truncate_to_width(3).unwrap();
        assert!(matches!(
            circuit.multiply(&zero, &one, 0),
            Err(MulError::Float(FloatError::Unsupported(_)))
        ));
        let full = Float32Fields::from_f32(1.0);
        assert!(matches!(
            circuit.multiply(&full, &one, 0),
            Err(MulError::Float(FloatError::WidthMismatch(23, 3)))
        ));
    }
}
