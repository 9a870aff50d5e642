//! Accuracy and bit-error measurements over the multiplier's units, and
//! neuron-count sweeps.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use crate::fp_mul::{Component, NeuronBudget};
use crate::float::Float32Fields;
use crate::fp_mul::{BiasSubtractor, CircuitConfig, ExponentAdder, MantissaMultiplier, MulError, SignUnit};
use crate::gates::{lines_from_u64, BitLine, NefParams};
use crate::nef::{Mode, NefError, SimConfig};
use crate::oracle::ieee_mul_truncate;
use crate::seed::derive_seed;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("no values to compare")]
    Empty,
    #[error("length mismatch: {0} computed vs {1} reference values")]
    LengthMismatch(usize, usize),
    #[error("no neuron counts given")]
    NoCounts,
    #[error("neuron counts must be strictly increasing: {0:?}")]
    UnsortedCounts(Vec<usize>),
    #[error("at least one trial is required")]
    NoTrials,
    #[error(transparent)]
    Mul(#[from] MulError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<NefError> for AnalysisError {
    fn from(e: NefError) -> Self {
        AnalysisError::Mul(e.into())
    }
}

/// Mean of `|computed − actual|` with reference bits read as 0/1.
pub fn mean_absolute_error(computed: &[f64], actual: &[bool]) -> Result<f64, AnalysisError> {
    if computed.len() != actual.len() {
        return Err(AnalysisError::LengthMismatch(computed.len(), actual.len()));
    }
    if computed.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let total: f64 = computed
        .iter()
        .zip(actual)
        .map(|(&c, &a)| (c - f64::from(u8::from(a))).abs())
        .sum();
    Ok(total / computed.len() as f64)
}

/// Fraction of positions where the binarized output differs from the reference.
pub fn mean_encoded_error(encoded: &[bool], actual: &[bool]) -> Result<f64, AnalysisError> {
    if encoded.len() != actual.len() {
        return Err(AnalysisError::LengthMismatch(encoded.len(), actual.len()));
    }
    if encoded.is_empty() {
        return Err(AnalysisError::Empty);
    }
    Ok(count_flips(encoded, actual) as f64 / encoded.len() as f64)
}

fn count_flips(encoded: &[bool], actual: &[bool]) -> usize {
    encoded.iter().zip(actual).filter(|(e, a)| e != a).count()
}

pub fn default_neuron_budget() -> NeuronBudget {
    NeuronBudget::default()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub component: Component,
    pub mae: f64,
    /// Percent.
    pub accuracy: f64,
    pub mee: f64,
    pub bit_errors: usize,
    pub total_bits: usize,
    pub neurons_per_ensemble: usize,
    pub n_trials: usize,
    pub seeds: Vec<u64>,
}

impl MetricsReport {
    /// Scores decoded lines against reference bits.
    pub fn from_lines(
        component: Component,
        neurons_per_ensemble: usize,
        seeds: Vec<u64>,
        lines: &[BitLine],
        reference: &[bool],
    ) -> Result<Self, AnalysisError> {
        let analog: Vec<f64> = lines.iter().map(|l| l.analog_value).collect();
        let bits: Vec<bool> = lines.iter().map(BitLine::bit).collect();
        let mae = mean_absolute_error(&analog, reference)?;
        Ok(Self {
            component,
            mae,
            accuracy: (1.0 - mae) * 100.0,
            mee: mean_encoded_error(&bits, reference)?,
            bit_errors: count_flips(&bits, reference),
            total_bits: reference.len(),
            neurons_per_ensemble,
            n_trials: seeds.len(),
            seeds,
        })
    }

    pub fn bit_error_rate(&self) -> f64 {
        self.bit_errors as f64 / self.total_bits as f64
    }
}

impl Serialize for Component {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// How a component is exercised: mantissa width, simulation mode and the
/// number of random operand pairs fed to each freshly built instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Experiment {
    pub component: Component,
    pub mantissa_width: usize,
    pub mode: Mode,
    pub sim: SimConfig,
    pub nef: NefParams,
    pub inputs_per_trial: usize,
}

/// One freshly built instance scored on its inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub report: MetricsReport,
    pub wall_time_s: f64,
}

fn random_operand(rng: &mut impl Rng, width: usize) -> Float32Fields {
    let mantissa = if width == 0 { 0 } else { rng.random_range(0..1u32 << width) };
    Float32Fields::new(rng.random(), rng.random_range(1..=254), mantissa, width).expect("in range")
}

impl Experiment {
    /// Spiking, 6-bit mantissa, default timing, 4 inputs per trial.
    pub fn new(component: Component) -> Self {
        Self {
            component,
            mantissa_width: 6,
            mode: Mode::Spiking,
            sim: SimConfig::default(),
            nef: NefParams::default(),
            inputs_per_trial: 4,
        }
    }

    fn circuit_config(&self, neurons: usize, seed: u64) -> CircuitConfig {
        CircuitConfig {
            mantissa_width: self.mantissa_width,
            budget: NeuronBudget::uniform(neurons),
            mode: self.mode,
            sim: self.sim.with_seed(seed),
            nef: self.nef,
            seed,
        }
    }

    /// Builds the component with `seed`, runs it on `inputs_per_trial`
    /// random operand pairs drawn from `seed`, and scores every output line.
    pub fn run_trial(&self, neurons: usize, seed: u64) -> Result<TrialRecord, AnalysisError> {
        let start = Instant::now();
        let cfg = self.circuit_config(neurons, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xA11));
        let pairs: Vec<(Float32Fields, Float32Fields)> = (0..self.inputs_per_trial)
            .map(|_| {
                let x = random_operand(&mut rng, self.mantissa_width);
                (x, random_operand(&mut rng, self.mantissa_width))
            })
            .collect();

        let mut lines = Vec::new();
        let mut reference = Vec::new();
        let bits_of = |v: u64, n: usize| (0..n).map(move |k| (v >> k) & 1 == 1);
        match self.component {
            Component::MantissaMultiplier => {
                let unit = MantissaMultiplier::build(&cfg)?;
                let n = 2 * (self.mantissa_width + 1);
                for (k, (x, y)) in pairs.iter().enumerate() {
                    let o = ieee_mul_truncate(x, y).map_err(MulError::from)?;
                    let p = unit.eval(x.mantissa, y.mantissa, derive_seed(seed, k as u64))?;
                    lines.extend(p.raw_product);
                    reference.extend(bits_of(o.raw_product, n));
                }
            }
            Component::ExponentAdder => {
                let unit = ExponentAdder::build(&cfg)?;
                for (k, (x, y)) in pairs.iter().enumerate() {
                    let o = ieee_mul_truncate(x, y).map_err(MulError::from)?;
                    let r = unit
                        .eval(x.exponent, y.exponent, BitLine::constant(o.norm_bit), derive_seed(seed, k as u64))
                        .map_err(MulError::from)?;
                    lines.extend(r.sum);
                    lines.push(r.carry);
                    reference.extend(bits_of(o.exponent_sum.into(), 8));
                    reference.push(o.exponent_carry);
                }
            }
            Component::BiasSubtractor => {
                let unit = BiasSubtractor::build(&cfg)?;
                for (k, (x, y)) in pairs.iter().enumerate() {
                    let o = ieee_mul_truncate(x, y).map_err(MulError::from)?;
                    let out = unit
                        .eval(&lines_from_u64(o.exponent_sum.into(), 8), derive_seed(seed, k as u64))
                        .map_err(MulError::from)?;
                    lines.extend(out);
                    reference.extend(bits_of(o.fields.exponent.into(), 8));
                }
            }
            Component::SignOfUf => {
                // The flag is a wire from the exponent carry; only the XOR is neural.
                let unit = SignUnit::build(&cfg)?;
                for (k, (x, y)) in pairs.iter().enumerate() {
                    let o = ieee_mul_truncate(x, y).map_err(MulError::from)?;
                    let (s, _) = unit.eval(x.sign, y.sign, BitLine::constant(o.exponent_carry), derive_seed(seed, k as u64))?;
                    lines.push(s);
                    reference.push(o.fields.sign);
                }
            }
        }
        let report = MetricsReport::from_lines(self.component, neurons, vec![seed], &lines, &reference)?;
        Ok(TrialRecord {
            seed,
            report,
            wall_time_s: start.elapsed().as_secs_f64(),
        })
    }

    /// Seed of trial `t` at a given neuron count.
    pub fn trial_seed(master_seed: u64, neurons: usize, t: usize) -> u64 {
        derive_seed(derive_seed(master_seed, neurons as u64), t as u64)
    }

    /// Runs `trials` fresh instances at one neuron count.
    pub fn measure(&self, neurons: usize, trials: usize, master_seed: u64) -> Result<SweepPoint, AnalysisError> {
        if trials == 0 {
            return Err(AnalysisError::NoTrials);
        }
        let records = (0..trials)
            .map(|t| self.run_trial(neurons, Self::trial_seed(master_seed, neurons, t)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SweepPoint::from_trials(self.component, neurons, records))
    }

    pub fn sweep(&self, counts: &[usize], trials: usize, master_seed: u64) -> Result<SweepResult, AnalysisError> {
        if counts.is_empty() {
            return Err(AnalysisError::NoCounts);
        }
        if counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AnalysisError::UnsortedCounts(counts.to_vec()));
        }
        let points = counts
            .iter()
            .map(|&n| self.measure(n, trials, master_seed))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SweepResult {
            neuron_counts: counts.to_vec(),
            points,
        })
    }
}

/// All trials at one neuron count, plus their pooled metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub neurons: usize,
    pub report: MetricsReport,
    pub trials: Vec<TrialRecord>,
}

impl SweepPoint {
    fn from_trials(component: Component, neurons: usize, trials: Vec<TrialRecord>) -> Self {
        let total_bits: usize = trials.iter().map(|t| t.report.total_bits).sum();
        let bit_errors: usize = trials.iter().map(|t| t.report.bit_errors).sum();
        let mae = trials
            .iter()
            .map(|t| t.report.mae * t.report.total_bits as f64)
            .sum::<f64>()
            / total_bits as f64;
        let report = MetricsReport {
            component,
            mae,
            accuracy: (1.0 - mae) * 100.0,
            mee: bit_errors as f64 / total_bits as f64,
            bit_errors,
            total_bits,
            neurons_per_ensemble: neurons,
            n_trials: trials.len(),
            seeds: trials.iter().map(|t| t.seed).collect(),
        };
        Self { neurons, report, trials }
    }

    pub fn mean_accuracy(&self) -> f64 {
        self.trials.iter().map(|t| t.report.accuracy).sum::<f64>() / self.trials.len() as f64
    }

    /// Standard error of the per-trial accuracies.
    pub fn accuracy_std_error(&self) -> f64 {
        let n = self.trials.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean_accuracy();
        let var = self.trials.iter().map(|t| (t.report.accuracy - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub neuron_counts: Vec<usize>,
    pub points: Vec<SweepPoint>,
}

#[derive(Serialize)]
struct CsvRow {
    component: Component,
    neurons: usize,
    seed: u64,
    mae: f64,
    accuracy: f64,
    mee: f64,
    bit_errors: usize,
    total_bits: usize,
    wall_time_s: f64,
}

impl SweepResult {
    pub fn point(&self, neurons: usize) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.neurons == neurons)
    }

    /// Smallest count whose mean accuracy is within `tolerance` percentage
    /// points of the best mean accuracy observed.
    pub fn knee(&self, tolerance: f64) -> Option<usize> {
        let best = self
            .points
            .iter()
            .map(SweepPoint::mean_accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        self.points
            .iter()
            .find(|p| p.mean_accuracy() >= best - tolerance)
            .map(|p| p.neurons)
    }

    /// One row per (count, seed), ordered by count then trial index.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.points {
            for t in &p.trials {
                w.serialize(CsvRow {
                    component: t.report.component,
                    neurons: p.neurons,
                    seed: t.seed,
                    mae: t.report.mae,
                    accuracy: t.report.accuracy,
                    mee: t.report.mee,
                    bit_errors: t.report.bit_errors,
                    total_bits: t.report.total_bits,
                    wall_time_s: t.wall_time_s,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Spiking bit-error fraction of `component` over `trials` fresh instances.
pub fn bit_error_rate(component: Component, neurons: usize, trials: usize, seed: u64) -> Result<f64, AnalysisError> {
    Ok(Experiment::new(component).measure(neurons, trials, seed)?.report.bit_error_rate())
}

/// Sweep with the default experiment settings.
pub fn sweep_neurons(
    component: Component,
    counts: &[usize],
    trials_per_count: usize,
    master_seed: u64,
) -> Result<SweepResult, AnalysisError> {
    Experiment::new(component).sweep(counts, trials_per_count, master_seed)
}
