//! Leaky integrate-and-fire neuron model.
//!
//! Currents are dimensionless and normalized so that the spike threshold is
//! `v_threshold` (1 by default). The steady-state response curve [`lif_rate`]
//! is the neural nonlinearity used when solving decoders; [`LifPopulation`]
//! is the time-stepped version used in spiking simulations.

use super::NefError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LifParameters {
    /// Membrane time constant (s).
    pub tau_rc: f64,
    /// Absolute refractory period (s).
    pub tau_ref: f64,
    /// Spike threshold on the normalized membrane voltage.
    pub v_threshold: f64,
    /// Integration step (s).
    pub dt: f64,
}

impl Default for LifParameters {
    fn default() -> Self {
        Self {
            tau_rc: 0.02,
            tau_ref: 0.002,
            v_threshold: 1.0,
            dt: 0.001,
        }
    }
}

impl LifParameters {
    pub fn validate(&self) -> Result<(), NefError> {
        let ok = self.tau_rc > 0.0
            && self.tau_ref >= 0.0
            && self.dt > 0.0
            && self.dt < self.tau_rc
            && self.v_threshold > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NefError::InvalidParameter(format!("{self:?}")))
        }
    }
}

/// Steady-state firing rate (Hz) of a LIF neuron driven by constant current `current`.
///
/// Zero at or below threshold, `1 / (tau_ref - tau_rc ln(1 - v_th/J))` above it.
pub fn lif_rate(current: f64, params: &LifParameters) -> f64 {
    let j = current / params.v_threshold;
    if j <= 1.0 {
        return 0.0;
    }
    1.0 / (params.tau_ref - params.tau_rc * (-1.0 / j).ln_1p())
}

/// Drive at which a neuron fires at `rate` Hz; inverse of [`lif_rate`] above threshold.
pub fn lif_current_for_rate(rate: f64, params: &LifParameters) -> Result<f64, NefError> {
    if !(rate > 0.0) || 1.0 / rate <= params.tau_ref {
        return Err(NefError::InvalidParameter(format!(
            "rate {rate} Hz is not reachable with tau_ref {}",
            params.tau_ref
        )));
    }
    let k = (params.tau_ref - 1.0 / rate) / params.tau_rc;
    Ok(params.v_threshold / -k.exp_m1())
}

/// Membrane state of a population of LIF neurons.
///
/// Voltage integration uses the exact exponential solution over each step
/// under a piecewise-constant input, and spike times inside a step are
/// interpolated so that refractory periods are not quantized to `dt`.
#[derive(Clone, Debug)]
pub struct LifPopulation {
    params: LifParameters,
    voltage: Vec<f64>,
    refractory: Vec<f64>,
}

impl LifPopulation {
    pub fn new(params: LifParameters, initial_voltage: Vec<f64>) -> Self {
        let n = initial_voltage.len();
        Self {
            params,
            voltage: initial_voltage,
            refractory: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.voltage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voltage.is_empty()
    }

    pub fn voltage(&self) -> &[f64] {
        &self.voltage
    }

    /// Advances every neuron by one `dt` under input `current`, pushing the
    /// indices of neurons that spiked into `spiked`.
    pub fn step(&mut self, current: &[f64], spiked: &mut Vec<usize>) {
        debug_assert_eq!(current.len(), self.voltage.len());
        let p = &self.params;
        let dt = p.dt;
        let full_step = (-dt / p.tau_rc).exp_m1();
        spiked.clear();
        for (i, (&j_raw, (v, r))) in current
            .iter()
            .zip(self.voltage.iter_mut().zip(self.refractory.iter_mut()))
            .enumerate()
        {
            let j = j_raw / p.v_threshold;
            let factor = if *r <= 0.0 {
                full_step
            } else {
                (-(dt - *r).clamp(0.0, dt) / p.tau_rc).exp_m1()
            };
            *v -= (j - *v) * factor;
            if *v < 0.0 {
                *v = 0.0;
            }
            if *v > 1.0 {
                // Time between the threshold crossing and the end of the step.
                let overshoot = -p.tau_rc * (-(*v - 1.0) / (j - 1.0)).ln_1p();
                let overshoot = if overshoot.is_finite() {
                    overshoot.clamp(0.0, dt)
                } else {
                    0.0
                };
                *v = 0.0;
                *r = p.tau_ref + dt - overshoot;
                spiked.push(i);
            }
            *r -= dt;
        }
    }
}
