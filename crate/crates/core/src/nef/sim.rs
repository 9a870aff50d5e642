//! Clock-driven simulation of feedforward ensemble networks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::decoders::DecodedConnection;
use super::ensemble::Ensemble;
use super::lif::{LifParameters, LifPopulation};
use super::NefError;
use crate::seed::derive_seed;

/// How a network is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Analytic steady-state rates, no time stepping and no noise.
    Rate,
    /// Time-stepped LIF spiking with synaptic filtering.
    #[default]
    Spiking,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Rate => "rate",
            Mode::Spiking => "spiking",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = NefError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rate" => Ok(Mode::Rate),
            "spiking" => Ok(Mode::Spiking),
            other => Err(NefError::InvalidParameter(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    /// Integration step (s).
    pub dt: f64,
    /// Spacing of probe samples (s).
    pub probe_interval: f64,
    /// Simulated duration before outputs are read (s).
    pub settle_time: f64,
    /// Trailing window averaged by [`readout`] (s).
    pub readout_window: f64,
    pub master_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.001,
            probe_interval: 0.010,
            settle_time: 0.200,
            readout_window: 0.050,
            master_seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), NefError> {
        let ok = self.dt > 0.0
            && self.probe_interval >= self.dt
            && self.readout_window > 0.0
            && self.settle_time >= self.readout_window;
        if ok {
            Ok(())
        } else {
            Err(NefError::InvalidParameter(format!("{self:?}")))
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    fn total_steps(&self) -> usize {
        (self.settle_time / self.dt).round() as usize
    }

    fn probe_every(&self) -> usize {
        ((self.probe_interval / self.dt).round() as usize).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EnsembleId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct InputId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ProbeId(usize);

impl ProbeId {
    /// Position of this probe's record in the output of [`run_network`].
    pub fn index(self) -> usize {
        self.0
    }
}

struct InputLink {
    input: usize,
    target: usize,
    transform: DMatrix<f64>,
}

struct DecodedLink<'a> {
    source: usize,
    connection: &'a DecodedConnection,
    /// `None` for probe-only taps.
    target: Option<(usize, DMatrix<f64>)>,
}

/// A feedforward graph of borrowed ensembles, constant inputs and decoded connections.
#[derive(Default)]
pub struct Network<'a> {
    ensembles: Vec<&'a Ensemble>,
    inputs: Vec<Vec<f64>>,
    input_links: Vec<InputLink>,
    links: Vec<DecodedLink<'a>>,
    /// Indices into `links`.
    probes: Vec<usize>,
}

fn identity_transform(target_dims: usize, source_dims: usize) -> Result<DMatrix<f64>, NefError> {
    if target_dims != source_dims {
        return Err(NefError::DimensionMismatch {
            expected: target_dims,
            got: source_dims,
        });
    }
    Ok(DMatrix::identity(target_dims, source_dims))
}

impl<'a> Network<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_ensemble(&mut self, ensemble: &'a Ensemble) -> EnsembleId {
        self.ensembles.push(ensemble);
        EnsembleId(self.ensembles.len() - 1)
    }

    pub fn add_input(&mut self, value: Vec<f64>) -> InputId {
        self.inputs.push(value);
        InputId(self.inputs.len() - 1)
    }

    /// Feeds a constant input into an ensemble, through `transform` if given.
    pub fn connect_input(
        &mut self,
        input: InputId,
        target: EnsembleId,
        transform: Option<DMatrix<f64>>,
    ) -> Result<(), NefError> {
        let src_dims = self.inputs[input.0].len();
        let tgt_dims = self.ensembles[target.0].dimensions();
        let transform = match transform {
            Some(t) if t.shape() == (tgt_dims, src_dims) => t,
            Some(t) => {
                return Err(NefError::DimensionMismatch {
                    expected: tgt_dims * src_dims,
                    got: t.len(),
                })
            }
            None => identity_transform(tgt_dims, src_dims)?,
        };
        self.input_links.push(InputLink {
            input: input.0,
            target: target.0,
            transform,
        });
        Ok(())
    }

    /// Routes a decoded output of `source` into `target` through the connection's synapse.
    pub fn connect(
        &mut self,
        source: EnsembleId,
        connection: &'a DecodedConnection,
        target: EnsembleId,
        transform: Option<DMatrix<f64>>,
    ) -> Result<(), NefError> {
        self.check_source(source, connection)?;
        let src_dims = connection.output_dimensions();
        let tgt_dims = self.ensembles[target.0].dimensions();
        let transform = match transform {
            Some(t) if t.shape() == (tgt_dims, src_dims) => t,
            Some(t) => {
                return Err(NefError::DimensionMismatch {
                    expected: tgt_dims * src_dims,
                    got: t.len(),
                })
            }
            None => identity_transform(tgt_dims, src_dims)?,
        };
        self.links.push(DecodedLink {
            source: source.0,
            connection,
            target: Some((target.0, transform)),
        });
        Ok(())
    }

    /// Records the synapse-filtered decoded output of `connection` from `source`.
    pub fn probe(&mut self, source: EnsembleId, connection: &'a DecodedConnection) -> Result<ProbeId, NefError> {
        self.check_source(source, connection)?;
        self.links.push(DecodedLink {
            source: source.0,
            connection,
            target: None,
        });
        self.probes.push(self.links.len() - 1);
        Ok(ProbeId(self.probes.len() - 1))
    }

    fn check_source(&self, source: EnsembleId, connection: &DecodedConnection) -> Result<(), NefError> {
        let n = self.ensembles[source.0].n_neurons();
        if connection.decoders().nrows() != n {
            return Err(NefError::DimensionMismatch {
                expected: n,
                got: connection.decoders().nrows(),
            });
        }
        Ok(())
    }

    /// Ensemble indices in dependency order.
    fn topological_order(&self) -> Result<Vec<usize>, NefError> {
        let n = self.ensembles.len();
        let mut indegree = vec![0usize; n];
        for link in &self.links {
            if let Some((t, _)) = &link.target {
                indegree[*t] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        ready.reverse();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = ready.pop() {
            order.push(u);
            for link in self.links.iter().filter(|l| l.source == u) {
                if let Some((t, _)) = &link.target {
                    indegree[*t] -= 1;
                    if indegree[*t] == 0 {
                        ready.push(*t);
                    }
                }
            }
        }
        if order.len() != n {
            return Err(NefError::CyclicNetwork);
        }
        Ok(order)
    }

    fn accumulate_inputs(&self, target: usize, link_values: &[Vec<f64>], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        for l in self.input_links.iter().filter(|l| l.target == target) {
            add_transformed(&l.transform, &self.inputs[l.input], x);
        }
        for (k, l) in self.links.iter().enumerate() {
            if let Some((t, transform)) = &l.target {
                if *t == target {
                    add_transformed(transform, &link_values[k], x);
                }
            }
        }
    }
}

fn add_transformed(transform: &DMatrix<f64>, value: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        for (c, v) in value.iter().enumerate() {
            *o += transform[(r, c)] * v;
        }
    }
}

/// Decoded samples recorded from one connection.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Probe {
    /// `(time in s, decoded vector)`, strictly increasing in time.
    pub samples: Vec<(f64, Vec<f64>)>,
}

/// Simulates `network` for `sim.settle_time` and returns one record per probe,
/// in the order the probes were added.
pub fn run_network(network: &Network<'_>, sim: &SimConfig, mode: Mode) -> Result<Vec<Probe>, NefError> {
    sim.validate()?;
    let order = network.topological_order()?;
    match mode {
        Mode::Rate => run_rate(network, &order, sim),
        Mode::Spiking => run_spiking(network, &order, sim),
    }
}

fn probe_times(sim: &SimConfig) -> Vec<(usize, f64)> {
    let every = sim.probe_every();
    (1..=sim.total_steps())
        .filter(|s| s % every == 0)
        .map(|s| (s, s as f64 * sim.dt))
        .collect()
}

fn run_rate(network: &Network<'_>, order: &[usize], sim: &SimConfig) -> Result<Vec<Probe>, NefError> {
    let mut link_values: Vec<Vec<f64>> = network
        .links
        .iter()
        .map(|l| vec![0.0; l.connection.output_dimensions()])
        .collect();
    for &e in order {
        let ens = network.ensembles[e];
        let mut x = vec![0.0; ens.dimensions()];
        network.accumulate_inputs(e, &link_values, &mut x);
        let rates = ens.neuron_activities(&x)?;
        for (k, l) in network.links.iter().enumerate() {
            if l.source == e {
                link_values[k] = l.connection.decode_rates(rates.as_slice());
            }
        }
    }
    let times = probe_times(sim);
    Ok(network
        .probes
        .iter()
        .map(|&k| Probe {
            samples: times.iter().map(|&(_, t)| (t, link_values[k].clone())).collect(),
        })
        .collect())
}

fn run_spiking(network: &Network<'_>, order: &[usize], sim: &SimConfig) -> Result<Vec<Probe>, NefError> {
    let dt = sim.dt;
    let mut pops: Vec<LifPopulation> = network
        .ensembles
        .iter()
        .enumerate()
        .map(|(idx, ens)| {
            let params = LifParameters { dt, ..*ens.lif() };
            params.validate()?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(sim.master_seed, idx as u64));
            let v0 = (0..ens.n_neurons()).map(|_| rng.random::<f64>()).collect();
            Ok(LifPopulation::new(params, v0))
        })
        .collect::<Result<_, NefError>>()?;

    let mut link_values: Vec<Vec<f64>> = network
        .links
        .iter()
        .map(|l| vec![0.0; l.connection.output_dimensions()])
        .collect();
    let decay: Vec<f64> = network
        .links
        .iter()
        .map(|l| (-dt / l.connection.synapse_tau).exp())
        .collect();
    let outgoing: Vec<Vec<usize>> = (0..network.ensembles.len())
        .map(|e| (0..network.links.len()).filter(|&k| network.links[k].source == e).collect())
        .collect();

    let mut probes: Vec<Probe> = network.probes.iter().map(|_| Probe { samples: Vec::new() }).collect();
    let every = sim.probe_every();
    let mut currents: Vec<Vec<f64>> = network.ensembles.iter().map(|e| vec![0.0; e.n_neurons()]).collect();
    let mut xs: Vec<Vec<f64>> = network.ensembles.iter().map(|e| vec![0.0; e.dimensions()]).collect();
    let mut spiked = Vec::new();
    let mut raw = Vec::new();

    for step in 1..=sim.total_steps() {
        for &e in order {
            network.accumulate_inputs(e, &link_values, &mut xs[e]);
            network.ensembles[e].currents_into(&xs[e], &mut currents[e]);
            pops[e].step(&currents[e], &mut spiked);
            for &k in &outgoing[e] {
                let dec = network.links[k].connection.decoders();
                raw.clear();
                raw.resize(dec.ncols(), 0.0);
                for &i in &spiked {
                    for (d, r) in raw.iter_mut().enumerate() {
                        *r += dec[(i, d)] / dt;
                    }
                }
                let a = decay[k];
                for (v, r) in link_values[k].iter_mut().zip(&raw) {
                    *v = a * *v + (1.0 - a) * r;
                }
            }
        }
        if step % every == 0 {
            let t = step as f64 * dt;
            for (p, &k) in probes.iter_mut().zip(&network.probes) {
                p.samples.push((t, link_values[k].clone()));
            }
        }
    }
    Ok(probes)
}

/// Mean of the decoded samples inside the final `readout_window` of `settle_time`.
pub fn readout(probe: &Probe, sim: &SimConfig) -> Result<Vec<f64>, NefError> {
    let eps = 0.5 * sim.dt;
    let last = probe.samples.last().ok_or(NefError::InsufficientSamples)?;
    if last.0 < sim.settle_time - eps {
        return Err(NefError::InsufficientSamples);
    }
    let start = sim.settle_time - sim.readout_window + eps;
    let window: Vec<&Vec<f64>> = probe
        .samples
        .iter()
        .filter(|(t, _)| *t >= start && *t <= sim.settle_time + eps)
        .map(|(_, v)| v)
        .collect();
    if window.is_empty() {
        return Err(NefError::InsufficientSamples);
    }
    let dims = window[0].len();
    let mut mean = vec![0.0; dims];
    for v in &window {
        for (m, x) in mean.iter_mut().zip(v.iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= window.len() as f64);
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nef::ensemble::{build_ensemble, grid_eval_points, TuningRanges};

    fn identity_ensemble(n: usize, seed: u64) -> (Ensemble, DecodedConnection) {
        let e = build_ensemble(n, 1, 1.0, LifParameters::default(), seed, TuningRanges::default()).unwrap();
        let pts = grid_eval_points(1, -1.0, 1.0, 500).unwrap();
        let c = DecodedConnection::solve(&e, &pts, 1, |x| x.to_vec(), 0.1, 0.005, "x").unwrap();
        (e, c)
    }

    fn represent(value: f64, seed: u64) -> f64 {
        let (e, c) = identity_ensemble(300, 21);
        let mut net = Network::new();
        let id = net.add_ensemble(&e);
        let inp = net.add_input(vec![value]);
        net.connect_input(inp, id, None).unwrap();
        let p = net.probe(id, &c).unwrap();
        let sim = SimConfig::default().with_seed(seed);
        let rec = run_network(&net, &sim, Mode::Spiking).unwrap();
        readout(&rec[p.0], &sim).unwrap()[0]
    }

    #[test]
    fn spiking_representation_of_constant() {
        let v = represent(0.5, 1);
        assert!((v - 0.5).abs() < 0.05, "{v}");
        let z = represent(0.0, 1);
        assert!(z.abs() < 0.05, "{z}");
    }

    #[test]
    fn identical_seeds_identical_records() {
        let (e, c) = identity_ensemble(50, 3);
        let mut net = Network::new();
        let id = net.add_ensemble(&e);
        let inp = net.add_input(vec![0.3]);
        net.connect_input(inp, id, None).unwrap();
        net.probe(id, &c).unwrap();
        let sim = SimConfig::default().with_seed(77);
        let a = run_network(&net, &sim, Mode::Spiking).unwrap();
        let b = run_network(&net, &sim, Mode::Spiking).unwrap();
        assert_eq!(a, b);
        let other = run_network(&net, &sim.with_seed(78), Mode::Spiking).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn probe_timestamps_are_regular() {
        let (e, c) = identity_ensemble(20, 3);
        let mut net = Network::new();
        let id = net.add_ensemble(&e);
        net.probe(id, &c).unwrap();
        let sim = SimConfig::default();
        for mode in [Mode::Rate, Mode::Spiking] {
            let rec = run_network(&net, &sim, mode).unwrap();
            let ts: Vec<f64> = rec[0].samples.iter().map(|s| s.0).collect();
            assert_eq!(ts.len(), 20);
            for w in ts.windows(2) {
                assert!((w[1] - w[0] - 0.010).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn chained_ensembles_in_rate_mode() {
        let (a, ca) = identity_ensemble(100, 5);
        let (b, cb) = identity_ensemble(100, 6);
        let mut net = Network::new();
        let ia = net.add_ensemble(&a);
        let ib = net.add_ensemble(&b);
        let inp = net.add_input(vec![-0.4]);
        net.connect_input(inp, ia, None).unwrap();
        net.connect(ia, &ca, ib, None).unwrap();
        let p = net.probe(ib, &cb).unwrap();
        let sim = SimConfig::default();
        let rec = run_network(&net, &sim, Mode::Rate).unwrap();
        let v = readout(&rec[p.0], &sim).unwrap()[0];
        assert!((v + 0.4).abs() < 0.03, "{v}");
    }

    #[test]
    fn cycles_are_rejected() {
        let (a, ca) = identity_ensemble(10, 5);
        let (b, cb) = identity_ensemble(10, 6);
        let mut net = Network::new();
        let ia = net.add_ensemble(&a);
        let ib = net.add_ensemble(&b);
        net.connect(ia, &ca, ib, None).unwrap();
        net.connect(ib, &cb, ia, None).unwrap();
        assert!(matches!(
            run_network(&net, &SimConfig::default(), Mode::Rate),
            Err(NefError::CyclicNetwork)
        ));
    }

    #[test]
    fn readout_averages_final_window() {
        let sim = SimConfig::default();
        let samples = |vals: &[f64]| Probe {
            samples: vals
                .iter()
                .enumerate()
                .map(|(k, &v)| (0.2 - 0.01 * (vals.len() - 1 - k) as f64, vec![v]))
                .collect(),
        };
        assert!((readout(&samples(&[0.9, 0.9, 0.9]), &sim).unwrap()[0] - 0.9).abs() < 1e-12);
        assert!((readout(&samples(&[0.8, 1.0]), &sim).unwrap()[0] - 0.9).abs() < 1e-12);
        // samples before the window are ignored
        let mut p = samples(&[5.0, 5.0, 5.0, 5.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert!((readout(&p, &sim).unwrap()[0] - 1.0).abs() < 1e-12);
        p.samples.truncate(3);
        assert!(matches!(readout(&p, &sim), Err(NefError::InsufficientSamples)));
        assert!(readout(&Probe { samples: vec![] }, &sim).is_err());
    }

    #[test]
    fn invalid_sim_config() {
        let sim = SimConfig {
            readout_window: 0.3,
            ..Default::default()
        };
        assert!(sim.validate().is_err());
    }
}
