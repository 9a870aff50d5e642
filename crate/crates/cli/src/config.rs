use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use spikefloat::fp_mul::{CircuitConfig, Component, NeuronBudget};
use spikefloat::gates::NefParams;
use spikefloat::nef::{Mode, SimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Rate,
    Spiking,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Rate => Mode::Rate,
            ModeArg::Spiking => Mode::Spiking,
        }
    }
}

/// Every setting a run depends on. Stored as a flat `key = value` file;
/// missing keys take the defaults below and command-line flags override both.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: ModeArg,
    /// Mantissa width; unset means 23 for `mul`/`verify` and 6 for `sweep`.
    pub width: Option<usize>,
    pub exponent_adder: usize,
    pub bias_subtractor: usize,
    pub mantissa_multiplier: usize,
    pub sign_of_uf: usize,
    pub dt_ms: f64,
    pub probe_ms: f64,
    pub settle_ms: f64,
    pub readout_ms: f64,
    pub seed: u64,
    /// Random pairs for `verify`, seeds per count for `sweep`.
    pub trials: Option<usize>,
    /// Operand pairs fed to each instance during a sweep.
    pub inputs_per_trial: usize,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let budget = NeuronBudget::default();
        let sim = SimConfig::default();
        Self {
            mode: ModeArg::Spiking,
            width: None,
            exponent_adder: budget.exponent_adder,
            bias_subtractor: budget.bias_subtractor,
            mantissa_multiplier: budget.mantissa_multiplier,
            sign_of_uf: budget.sign_of_uf,
            dt_ms: sim.dt * 1e3,
            probe_ms: sim.probe_interval * 1e3,
            settle_ms: sim.settle_time * 1e3,
            readout_ms: sim.readout_window * 1e3,
            seed: 0,
            trials: None,
            inputs_per_trial: 4,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_text(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn from_text(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn budget(&self) -> NeuronBudget {
        NeuronBudget {
            exponent_adder: self.exponent_adder,
            bias_subtractor: self.bias_subtractor,
            mantissa_multiplier: self.mantissa_multiplier,
            sign_of_uf: self.sign_of_uf,
        }
    }

    pub fn set_neurons(&mut self, component: Component, n: usize) {
        let mut b = self.budget();
        b.set(component, n);
        self.exponent_adder = b.exponent_adder;
        self.bias_subtractor = b.bias_subtractor;
        self.mantissa_multiplier = b.mantissa_multiplier;
        self.sign_of_uf = b.sign_of_uf;
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            dt: self.dt_ms * 1e-3,
            probe_interval: self.probe_ms * 1e-3,
            settle_time: self.settle_ms * 1e-3,
            readout_window: self.readout_ms * 1e-3,
            master_seed: self.seed,
        }
    }

    pub fn nef(&self) -> NefParams {
        let mut nef = NefParams::default();
        nef.lif.dt = self.dt_ms * 1e-3;
        nef
    }

    pub fn circuit(&self, width: usize) -> CircuitConfig {
        CircuitConfig {
            mantissa_width: width,
            budget: self.budget(),
            mode: self.mode.into(),
            sim: self.sim(),
            nef: self.nef(),
            seed: self.seed,
        }
    }
}

/// Parses a neuron override: `component=count`, or a bare count applying to
/// every component.
pub fn parse_neuron_override(s: &str) -> Result<(Option<Component>, usize), String> {
    let (component, count) = match s.split_once('=') {
        Some((name, count)) => (Some(name.trim().parse::<Component>().map_err(|e| e.to_string())?), count),
        None => (None, s),
    };
    let count = count
        .trim()
        .parse::<usize>()
        .map_err(|e| format!("bad neuron count `{count}`: {e}"))?;
    Ok((component, count))
}
