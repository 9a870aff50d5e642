//! Logic primitives built from single ensembles.
//!
//! Every gate is one ensemble that represents the sum of its input bits and
//! one or more decoded connections computing functions of that sum. Outputs
//! are read out as analog values and binarized on the host before they feed
//! the next stage.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::DMatrix;

use crate::nef::{
    build_ensemble, solve_decoders, grid_eval_points, readout, run_network, DecodedConnection, Ensemble, EnsembleId, LifParameters,
    Mode, NefError, Network, Probe, SimConfig, TuningRanges,
};
use crate::seed::derive_seed;

/// Threshold applied to the AND ensemble's decoded input sum.
pub const AND_THRESHOLD: f64 = 1.5;
/// Threshold for lines that carry a single decoded bit.
pub const BIT_THRESHOLD: f64 = 0.5;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GateError {
    #[error("operand widths differ: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error(transparent)]
    Nef(#[from] NefError),
}

/// `1` iff `value >= threshold`.
pub fn binarize(value: f64, threshold: f64) -> bool {
    value >= threshold
}

/// A decoded output line together with its binarized value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BitLine {
    pub analog_value: f64,
    pub logical_value: bool,
    pub threshold: f64,
}

impl BitLine {
    pub fn from_analog(analog_value: f64, threshold: f64) -> Self {
        Self {
            analog_value,
            logical_value: binarize(analog_value, threshold),
            threshold,
        }
    }

    /// An ideal line holding `bit`.
    pub fn constant(bit: bool) -> Self {
        Self::from_analog(if bit { 1.0 } else { 0.0 }, BIT_THRESHOLD)
    }

    pub fn bit(&self) -> bool {
        self.logical_value
    }

    pub fn as_f64(&self) -> f64 {
        if self.logical_value {
            1.0
        } else {
            0.0
        }
    }
}

/// Ensemble construction parameters shared by all gates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NefParams {
    pub lif: LifParameters,
    pub tuning: TuningRanges,
    /// Ridge strength as a fraction of peak activity.
    pub regularization: f64,
    pub eval_points: usize,
    /// Synapse time constant on every decoded connection (s).
    pub synapse_tau: f64,
}

impl Default for NefParams {
    fn default() -> Self {
        Self {
            lif: LifParameters::default(),
            tuning: TuningRanges::default(),
            regularization: 0.1,
            eval_points: 500,
            synapse_tau: 0.005,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateConfig {
    pub neurons_per_ensemble: usize,
    pub mode: Mode,
    pub sim: SimConfig,
    pub nef: NefParams,
}

impl GateConfig {
    pub fn new(neurons_per_ensemble: usize, mode: Mode) -> Self {
        Self {
            neurons_per_ensemble,
            mode,
            sim: SimConfig::default(),
            nef: NefParams::default(),
        }
    }

    pub fn with_neurons(mut self, n: usize) -> Self {
        self.neurons_per_ensemble = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sim.master_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), NefError> {
        if self.neurons_per_ensemble == 0 {
            return Err(NefError::InvalidParameter("neurons_per_ensemble must be >= 1".into()));
        }
        self.sim.validate()?;
        self.nef.lif.validate()
    }
}

/// Parity of the nearest integer.
fn parity(s: f64) -> f64 {
    (s.round() as i64).rem_euclid(2) as f64
}

fn step_at(s: f64, edge: f64) -> f64 {
    if s >= edge {
        1.0
    } else {
        0.0
    }
}

/// Name and target function of one decoded output.
type DecodeTarget = (&'static str, fn(f64) -> f64);

/// One ensemble representing the sum of its input lines, with decoded
/// outputs solved jointly over `[-radius, radius]`.
#[derive(Debug)]
struct LogicEnsemble {
    ensemble: Ensemble,
    outputs: Vec<DecodedConnection>,
}

impl LogicEnsemble {
    fn build(
        cfg: &GateConfig,
        radius: f64,
        seed: u64,
        functions: &[DecodeTarget],
    ) -> Result<Self, NefError> {
        cfg.validate()?;
        let nef = &cfg.nef;
        let ensemble = build_ensemble(cfg.neurons_per_ensemble, 1, radius, nef.lif, seed, nef.tuning)?;
        let pts = grid_eval_points(1, -radius, radius, nef.eval_points)?;
        let targets = DMatrix::from_fn(pts.nrows(), functions.len(), |p, k| (functions[k].1)(pts[(p, 0)]));
        let decoders = solve_decoders(&ensemble, &pts, &targets, nef.regularization)?;
        let outputs = functions
            .iter()
            .enumerate()
            .map(|(k, (name, _))| {
                DecodedConnection::new(&ensemble, decoders.columns(k, 1).into_owned(), nef.synapse_tau, *name)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { ensemble, outputs })
    }

    /// Drives the ensemble with the sum of `inputs` and reads every output.
    fn evaluate(&self, inputs: &[f64], mode: Mode, sim: &SimConfig) -> Result<Vec<f64>, NefError> {
        self.run(inputs, mode, sim)?
            .iter()
            .map(|p| readout(p, sim).map(|v| v[0]))
            .collect()
    }

    /// Full probe record of every output.
    fn run(&self, inputs: &[f64], mode: Mode, sim: &SimConfig) -> Result<Vec<Probe>, NefError> {
        let mut net = Network::new();
        let id = net.add_ensemble(&self.ensemble);
        for &v in inputs {
            let inp = net.add_input(vec![v]);
            net.connect_input(inp, id, None)?;
        }
        let probes = self
            .outputs
            .iter()
            .map(|c| net.probe(id, c))
            .collect::<Result<Vec<_>, _>>()?;
        let mut records = run_network(&net, sim, mode)?;
        Ok(probes
            .iter()
            .map(|p| std::mem::take(&mut records[p.index()]))
            .collect())
    }
}

/// Rate-mode outputs memoized by input bit pattern. Rate mode is a pure
/// function of the discrete inputs, so each pattern is simulated once.
#[derive(Debug, Default)]
struct RateMemo(Mutex<HashMap<u64, Vec<f64>>>);

impl RateMemo {
    fn get<F>(&self, bits: &[bool], compute: F) -> Result<Vec<f64>, NefError>
    where
        F: FnOnce(&[f64]) -> Result<Vec<f64>, NefError>,
    {
        let key = pattern(bits);
        if let Some(v) = self.0.lock().expect("memo lock").get(&key) {
            return Ok(v.clone());
        }
        let x: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let v = compute(&x)?;
        self.0.lock().expect("memo lock").insert(key, v.clone());
        Ok(v)
    }
}

fn pattern(bits: &[bool]) -> u64 {
    debug_assert!(bits.len() <= 64);
    bits.iter().enumerate().map(|(k, &b)| (b as u64) << k).sum()
}

fn gate_sim(cfg: &GateConfig, run_seed: u64) -> SimConfig {
    cfg.sim.with_seed(run_seed)
}

/// Shared evaluation path: rate mode goes through the cached table,
/// spiking mode simulates.
fn eval_logic(
    logic: &LogicEnsemble,
    table: &RateMemo,
    cfg: &GateConfig,
    bits: &[bool],
    run_seed: u64,
) -> Result<Vec<f64>, NefError> {
    match cfg.mode {
        Mode::Rate => table.get(bits, |x| logic.evaluate(x, Mode::Rate, &cfg.sim)),
        Mode::Spiking => {
            let x: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            logic.evaluate(&x, Mode::Spiking, &gate_sim(cfg, run_seed))
        }
    }
}

/// Two-input AND: the ensemble represents `a + b` on radius 2 and the decoded
/// sum is binarized at 1.5.
#[derive(Debug)]
pub struct AndGate {
    logic: LogicEnsemble,
    cfg: GateConfig,
    table: RateMemo,
}

const AND_SUM: usize = 0;
const AND_BIT: usize = 1;

impl AndGate {
    pub fn build(cfg: &GateConfig, seed: u64) -> Result<Self, NefError> {
        let logic = LogicEnsemble::build(
            cfg,
            2.0,
            seed,
            &[("a+b", |s| s), ("a+b>=1.5", |s| step_at(s, AND_THRESHOLD))],
        )?;
        Ok(Self {
            logic,
            cfg: *cfg,
            table: RateMemo::default(),
        })
    }

    pub fn eval(&self, a: BitLine, b: BitLine, run_seed: u64) -> Result<BitLine, NefError> {
        let out = eval_logic(&self.logic, &self.table, &self.cfg, &[a.bit(), b.bit()], run_seed)?;
        Ok(BitLine::from_analog(out[AND_SUM], AND_THRESHOLD))
    }

    /// Probe samples `(t, decoded a + b)` of one spiking run.
    pub fn sum_trace(&self, a: BitLine, b: BitLine, run_seed: u64) -> Result<Vec<(f64, f64)>, NefError> {
        let x = [a.as_f64(), b.as_f64()];
        let records = self.logic.run(&x, Mode::Spiking, &gate_sim(&self.cfg, run_seed))?;
        Ok(records[AND_SUM].samples.iter().map(|(t, v)| (*t, v[0])).collect())
    }
}

/// Two-input XOR: parity of `a + b` decoded from a radius-2 ensemble.
#[derive(Debug)]
pub struct XorGate {
    logic: LogicEnsemble,
    cfg: GateConfig,
    table: RateMemo,
}

impl XorGate {
    pub fn build(cfg: &GateConfig, seed: u64) -> Result<Self, NefError> {
        let logic = LogicEnsemble::build(cfg, 2.0, seed, &[("(a+b) mod 2", parity)])?;
        Ok(Self {
            logic,
            cfg: *cfg,
            table: RateMemo::default(),
        })
    }

    pub fn eval(&self, a: BitLine, b: BitLine, run_seed: u64) -> Result<BitLine, NefError> {
        let out = eval_logic(&self.logic, &self.table, &self.cfg, &[a.bit(), b.bit()], run_seed)?;
        Ok(BitLine::from_analog(out[0], BIT_THRESHOLD))
    }
}

/// One-input inverter decoding `1 - x` from a radius-1 ensemble.
#[derive(Debug)]
pub struct Inverter {
    logic: LogicEnsemble,
    cfg: GateConfig,
    table: RateMemo,
}

impl Inverter {
    pub fn build(cfg: &GateConfig, seed: u64) -> Result<Self, NefError> {
        let logic = LogicEnsemble::build(cfg, 1.0, seed, &[("1-x", |s| 1.0 - s)])?;
        Ok(Self {
            logic,
            cfg: *cfg,
            table: RateMemo::default(),
        })
    }

    pub fn eval(&self, a: BitLine, run_seed: u64) -> Result<BitLine, NefError> {
        let out = eval_logic(&self.logic, &self.table, &self.cfg, &[a.bit()], run_seed)?;
        Ok(BitLine::from_analog(out[0], BIT_THRESHOLD))
    }
}

/// Full adder: one radius-3 ensemble representing `a + b + c_in` with two
/// decoded outputs, the sum bit (parity) and the carry (majority).
#[derive(Debug)]
pub struct FullAdder {
    logic: LogicEnsemble,
    cfg: GateConfig,
    table: RateMemo,
}

const FA_FUNCTIONS: [DecodeTarget; 2] = [("(a+b+c) mod 2", parity), ("a+b+c>=2", |s| step_at(s, 1.5))];

impl FullAdder {
    pub fn build(cfg: &GateConfig, seed: u64) -> Result<Self, NefError> {
        let logic = LogicEnsemble::build(cfg, 3.0, seed, &FA_FUNCTIONS)?;
        Ok(Self {
            logic,
            cfg: *cfg,
            table: RateMemo::default(),
        })
    }

    /// Returns `(sum, carry_out)`.
    pub fn eval(&self, a: BitLine, b: BitLine, c_in: BitLine, run_seed: u64) -> Result<(BitLine, BitLine), NefError> {
        let out = eval_logic(
            &self.logic,
            &self.table,
            &self.cfg,
            &[a.bit(), b.bit(), c_in.bit()],
            run_seed,
        )?;
        Ok((
            BitLine::from_analog(out[0], BIT_THRESHOLD),
            BitLine::from_analog(out[1], BIT_THRESHOLD),
        ))
    }
}

/// Chain of full adders, LSB first, with the carry binarized between stages.
#[derive(Debug)]
pub struct RippleAdder {
    stages: Vec<FullAdder>,
}

impl RippleAdder {
    pub fn build(width: usize, cfg: &GateConfig, seed: u64) -> Result<Self, NefError> {
        let stages = (0..width)
            .map(|k| FullAdder::build(cfg, derive_seed(seed, k as u64)))
            .collect::<Result<_, _>>()?;
        Ok(Self { stages })
    }

    pub fn width(&self) -> usize {
        self.stages.len()
    }

    /// Adds little-endian operands; returns `(sum_bits, carry_out)`.
    pub fn eval(
        &self,
        a: &[BitLine],
        b: &[BitLine],
        c_in: BitLine,
        run_seed: u64,
    ) -> Result<(Vec<BitLine>, BitLine), GateError> {
        if a.len() != b.len() {
            return Err(GateError::WidthMismatch(a.len(), b.len()));
        }
        if a.len() != self.width() {
            return Err(GateError::WidthMismatch(a.len(), self.width()));
        }
        let mut carry = c_in;
        let mut sum = Vec::with_capacity(a.len());
        for (k, stage) in self.stages.iter().enumerate() {
            let (s, c) = stage.eval(a[k], b[k], carry, derive_seed(run_seed, k as u64))?;
            sum.push(s);
            carry = BitLine::from_analog(c.analog_value, BIT_THRESHOLD);
        }
        Ok((sum, carry))
    }
}

/// One cell of the array multiplier: an AND ensemble whose thresholded
/// output drives a full-adder ensemble through a synapse, alongside the
/// incoming partial sum and carry.
#[derive(Debug)]
pub struct MultiplierBlock {
    and: AndGate,
    adder: FullAdder,
    cfg: GateConfig,
    table: RateMemo,
}

impl MultiplierBlock {
    pub fn build(cfg: &GateConfig, seed: u64) -> Result<Self, NefError> {
        Ok(Self {
            and: AndGate::build(cfg, derive_seed(seed, 0))?,
            adder: FullAdder::build(cfg, derive_seed(seed, 1))?,
            cfg: *cfg,
            table: RateMemo::default(),
        })
    }

    /// Adds the block's two ensembles to `net` with constant `a`, `b`, `s_in`
    /// drives and returns the adder ensemble. The carry input is left for the
    /// caller to connect.
    fn wire<'a>(&'a self, net: &mut Network<'a>, a: f64, b: f64, s_in: f64) -> Result<EnsembleId, NefError> {
        let and_id = net.add_ensemble(&self.and.logic.ensemble);
        let add_id = net.add_ensemble(&self.adder.logic.ensemble);
        for v in [a, b] {
            let inp = net.add_input(vec![v]);
            net.connect_input(inp, and_id, None)?;
        }
        net.connect(and_id, &self.and.logic.outputs[AND_BIT], add_id, None)?;
        let inp = net.add_input(vec![s_in]);
        net.connect_input(inp, add_id, None)?;
        Ok(add_id)
    }

    fn sum_output(&self) -> &DecodedConnection {
        &self.adder.logic.outputs[0]
    }

    fn carry_output(&self) -> &DecodedConnection {
        &self.adder.logic.outputs[1]
    }

    fn simulate(&self, bits: &[f64], mode: Mode, sim: &SimConfig) -> Result<Vec<f64>, NefError> {
        let mut net = Network::new();
        let add_id = self.wire(&mut net, bits[0], bits[1], bits[2])?;
        let c_in = net.add_input(vec![bits[3]]);
        net.connect_input(c_in, add_id, None)?;
        let sum = net.probe(add_id, self.sum_output())?;
        let carry = net.probe(add_id, self.carry_output())?;
        let rec = run_network(&net, sim, mode)?;
        Ok(vec![
            readout(&rec[sum.index()], sim)?[0],
            readout(&rec[carry.index()], sim)?[0],
        ])
    }

    /// Computes `a AND b + s_in + c_in` as an isolated block; returns `(s_out, c_out)`.
    pub fn eval(
        &self,
        a: BitLine,
        b: BitLine,
        s_in: BitLine,
        c_in: BitLine,
        run_seed: u64,
    ) -> Result<(BitLine, BitLine), NefError> {
        let bits = [a.bit(), b.bit(), s_in.bit(), c_in.bit()];
        let out = match self.cfg.mode {
            Mode::Rate => self.table.get(&bits, |x| self.simulate(x, Mode::Rate, &self.cfg.sim))?,
            Mode::Spiking => {
                let x: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
                self.simulate(&x, Mode::Spiking, &gate_sim(&self.cfg, run_seed))?
            }
        };
        Ok((
            BitLine::from_analog(out[0], BIT_THRESHOLD),
            BitLine::from_analog(out[1], BIT_THRESHOLD),
        ))
    }
}

/// One stage (row) of the array multiplier, simulated as a single network.
///
/// Block `j` receives `A_i AND B_j`, the partial-sum bit `s_in[j]` and the
/// carry of block `j - 1` through a neural connection; block 0 has no carry
/// input. Only the stage outputs are binarized.
#[derive(Debug)]
pub struct MultiplierStage {
    blocks: Vec<MultiplierBlock>,
    cfg: GateConfig,
    table: RateMemo,
}

impl MultiplierStage {
    pub fn build(blocks: usize, cfg: &GateConfig, seed: u64) -> Result<Self, NefError> {
        if blocks == 0 || 1 + 2 * blocks > 64 {
            return Err(NefError::InvalidParameter(format!("stage with {blocks} blocks")));
        }
        let blocks = (0..blocks)
            .map(|j| MultiplierBlock::build(cfg, derive_seed(seed, j as u64)))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            blocks,
            cfg: *cfg,
            table: RateMemo::default(),
        })
    }

    pub fn width(&self) -> usize {
        self.blocks.len()
    }

    /// `bits` = `[a, b_0..b_n, s_0..s_n]`; returns `[sum_0..sum_n, carry_out]`.
    fn simulate(&self, bits: &[f64], mode: Mode, sim: &SimConfig) -> Result<Vec<f64>, NefError> {
        let n = self.width();
        let mut net = Network::new();
        let mut sums = Vec::with_capacity(n);
        let mut prev: Option<EnsembleId> = None;
        let mut carry = None;
        for (j, block) in self.blocks.iter().enumerate() {
            let id = block.wire(&mut net, bits[0], bits[1 + j], bits[1 + n + j])?;
            if let Some(p) = prev {
                net.connect(p, self.blocks[j - 1].carry_output(), id, None)?;
            }
            sums.push(net.probe(id, block.sum_output())?);
            if j == n - 1 {
                carry = Some(net.probe(id, block.carry_output())?);
            }
            prev = Some(id);
        }
        let rec = run_network(&net, sim, mode)?;
        sums.into_iter()
            .chain(carry)
            .map(|p| readout(&rec[p.index()], sim).map(|v| v[0]))
            .collect()
    }

    /// Runs the stage for multiplicand bit `a` against `b`, adding the
    /// incoming partial sums; returns `(s_out per block, carry out of the last block)`.
    pub fn eval(
        &self,
        a: BitLine,
        b: &[BitLine],
        s_in: &[BitLine],
        run_seed: u64,
    ) -> Result<(Vec<BitLine>, BitLine), GateError> {
        let n = self.width();
        if b.len() != n {
            return Err(GateError::WidthMismatch(b.len(), n));
        }
        if s_in.len() != n {
            return Err(GateError::WidthMismatch(s_in.len(), n));
        }
        let bits: Vec<bool> = std::iter::once(a.bit())
            .chain(b.iter().map(BitLine::bit))
            .chain(s_in.iter().map(BitLine::bit))
            .collect();
        let out = match self.cfg.mode {
            Mode::Rate => self.table.get(&bits, |x| self.simulate(x, Mode::Rate, &self.cfg.sim))?,
            Mode::Spiking => {
                let x: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
                self.simulate(&x, Mode::Spiking, &gate_sim(&self.cfg, run_seed))?
            }
        };
        let lines: Vec<BitLine> = out.iter().map(|&v| BitLine::from_analog(v, BIT_THRESHOLD)).collect();
        Ok((lines[..n].to_vec(), lines[n]))
    }
}

/// Builds a fresh AND gate seeded from `cfg.sim.master_seed` and evaluates it once.
pub fn and_gate(a: BitLine, b: BitLine, cfg: &GateConfig) -> Result<BitLine, NefError> {
    let seed = cfg.sim.master_seed;
    AndGate::build(cfg, derive_seed(seed, 0xA0))?.eval(a, b, derive_seed(seed, 0xA1))
}

pub fn xor_gate(a: BitLine, b: BitLine, cfg: &GateConfig) -> Result<BitLine, NefError> {
    let seed = cfg.sim.master_seed;
    XorGate::build(cfg, derive_seed(seed, 0xB0))?.eval(a, b, derive_seed(seed, 0xB1))
}

pub fn full_adder(a: BitLine, b: BitLine, c_in: BitLine, cfg: &GateConfig) -> Result<(BitLine, BitLine), NefError> {
    let seed = cfg.sim.master_seed;
    FullAdder::build(cfg, derive_seed(seed, 0xC0))?.eval(a, b, c_in, derive_seed(seed, 0xC1))
}

pub fn ripple_adder(
    a: &[BitLine],
    b: &[BitLine],
    c_in: BitLine,
    cfg: &GateConfig,
) -> Result<(Vec<BitLine>, BitLine), GateError> {
    if a.len() != b.len() {
        return Err(GateError::WidthMismatch(a.len(), b.len()));
    }
    let seed = cfg.sim.master_seed;
    RippleAdder::build(a.len(), cfg, derive_seed(seed, 0xD0))?.eval(a, b, c_in, derive_seed(seed, 0xD1))
}

/// Little-endian constant lines for the low `width` bits of `value`.
pub fn lines_from_u64(value: u64, width: usize) -> Vec<BitLine> {
    (0..width).map(|k| BitLine::constant((value >> k) & 1 == 1)).collect()
}

/// Integer value of little-endian binarized lines.
pub fn lines_to_u64(lines: &[BitLine]) -> u64 {
    lines
        .iter()
        .enumerate()
        .map(|(k, l)| (l.bit() as u64) << k)
        .sum()
}
