use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::lif::{lif_current_for_rate, lif_rate, LifParameters};
use super::NefError;

/// Sampling ranges for per-neuron tuning curves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TuningRanges {
    /// Firing rate (Hz) at the preferred edge of the represented range.
    pub max_rate: (f64, f64),
    /// Normalized represented value at which the neuron starts firing.
    pub intercept: (f64, f64),
}

impl Default for TuningRanges {
    fn default() -> Self {
        Self {
            max_rate: (200.0, 400.0),
            intercept: (-1.0, 1.0),
        }
    }
}

/// A population of LIF neurons jointly representing a vector of `dimensions`
/// values in roughly `[-radius, radius]`.
#[derive(Clone, Debug)]
pub struct Ensemble {
    radius: f64,
    /// `n_neurons x dimensions`, unit-norm rows.
    encoders: DMatrix<f64>,
    gains: DVector<f64>,
    biases: DVector<f64>,
    max_rates: DVector<f64>,
    intercepts: DVector<f64>,
    lif: LifParameters,
    seed: u64,
}

/// Builds an ensemble with encoders drawn uniformly from the unit hypersphere
/// and gains/biases solved from uniformly sampled `(max_rate, intercept)`
/// pairs. The same seed always yields the same ensemble.
pub fn build_ensemble(
    n_neurons: usize,
    dimensions: usize,
    radius: f64,
    lif: LifParameters,
    seed: u64,
    ranges: TuningRanges,
) -> Result<Ensemble, NefError> {
    if !(radius > 0.0) {
        return Err(NefError::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    if n_neurons == 0 || dimensions == 0 {
        return Err(NefError::InvalidParameter(
            "ensemble needs at least one neuron and one dimension".into(),
        ));
    }
    let (r_lo, r_hi) = ranges.max_rate;
    let (c_lo, c_hi) = ranges.intercept;
    if !(r_hi > r_lo && c_hi > c_lo) || c_hi > 1.0 || r_lo <= 0.0 {
        return Err(NefError::InvalidParameter(format!("degenerate tuning ranges {ranges:?}")));
    }
    lif.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut encoders = DMatrix::zeros(n_neurons, dimensions);
    for i in 0..n_neurons {
        loop {
            let row: Vec<f64> = (0..dimensions).map(|_| rng.sample(StandardNormal)).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                for (d, v) in row.iter().enumerate() {
                    encoders[(i, d)] = v / norm;
                }
                break;
            }
        }
    }

    let mut gains = DVector::zeros(n_neurons);
    let mut biases = DVector::zeros(n_neurons);
    let mut max_rates = DVector::zeros(n_neurons);
    let mut intercepts = DVector::zeros(n_neurons);
    for i in 0..n_neurons {
        let rate = rng.random_range(r_lo..r_hi);
        let intercept = rng.random_range(c_lo..c_hi);
        let j_max = lif_current_for_rate(rate, &lif)?;
        let threshold = lif.v_threshold;
        let gain = (j_max - threshold) / (1.0 - intercept);
        gains[i] = gain;
        biases[i] = threshold - gain * intercept;
        max_rates[i] = rate;
        intercepts[i] = intercept;
    }

    Ok(Ensemble {
        radius,
        encoders,
        gains,
        biases,
        max_rates,
        intercepts,
        lif,
        seed,
    })
}

impl Ensemble {
    pub fn n_neurons(&self) -> usize {
        self.encoders.nrows()
    }

    pub fn dimensions(&self) -> usize {
        self.encoders.ncols()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn encoders(&self) -> &DMatrix<f64> {
        &self.encoders
    }

    pub fn gains(&self) -> &DVector<f64> {
        &self.gains
    }

    pub fn biases(&self) -> &DVector<f64> {
        &self.biases
    }

    pub fn max_rates(&self) -> &DVector<f64> {
        &self.max_rates
    }

    pub fn intercepts(&self) -> &DVector<f64> {
        &self.intercepts
    }

    pub fn lif(&self) -> &LifParameters {
        &self.lif
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check_dims(&self, x: &[f64]) -> Result<(), NefError> {
        if x.len() != self.dimensions() {
            return Err(NefError::DimensionMismatch {
                expected: self.dimensions(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Input current of every neuron for represented value `x`: `αᵢ (eᵢ·x)/radius + bᵢ`.
    pub fn currents(&self, x: &[f64]) -> Result<Vec<f64>, NefError> {
        self.check_dims(x)?;
        let mut out = vec![0.0; self.n_neurons()];
        self.currents_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn currents_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut proj = 0.0;
            for (d, xv) in x.iter().enumerate() {
                proj += self.encoders[(i, d)] * xv;
            }
            *o = self.gains[i] * proj / self.radius + self.biases[i];
        }
    }

    /// Steady-state firing rates for represented value `x`.
    pub fn neuron_activities(&self, x: &[f64]) -> Result<DVector<f64>, NefError> {
        let j = self.currents(x)?;
        Ok(DVector::from_iterator(
            j.len(),
            j.iter().map(|&j| lif_rate(j, &self.lif)),
        ))
    }

    /// Activity matrix with one row per evaluation point (`points` is `m x dimensions`).
    pub fn activity_matrix(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>, NefError> {
        if points.ncols() != self.dimensions() {
            return Err(NefError::DimensionMismatch {
                expected: self.dimensions(),
                got: points.ncols(),
            });
        }
        let n = self.n_neurons();
        let mut a = DMatrix::zeros(points.nrows(), n);
        let mut x = vec![0.0; self.dimensions()];
        let mut j = vec![0.0; n];
        for p in 0..points.nrows() {
            for (d, xv) in x.iter_mut().enumerate() {
                *xv = points[(p, d)];
            }
            self.currents_into(&x, &mut j);
            for (i, &ji) in j.iter().enumerate() {
                a[(p, i)] = lif_rate(ji, &self.lif);
            }
        }
        Ok(a)
    }
}

/// Uniform evaluation grid: `per_dim` points per axis over `[lo, hi]`,
/// tensorized for two dimensions.
pub fn grid_eval_points(dimensions: usize, lo: f64, hi: f64, per_dim: usize) -> Result<DMatrix<f64>, NefError> {
    if per_dim < 1 || !(hi >= lo) {
        return Err(NefError::InvalidParameter(format!("bad grid [{lo}, {hi}] x {per_dim}")));
    }
    let axis: Vec<f64> = if per_dim == 1 {
        vec![0.5 * (lo + hi)]
    } else {
        (0..per_dim)
            .map(|k| lo + (hi - lo) * k as f64 / (per_dim - 1) as f64)
            .collect()
    };
    match dimensions {
        1 => Ok(DMatrix::from_column_slice(per_dim, 1, &axis)),
        2 => {
            let mut m = DMatrix::zeros(per_dim * per_dim, 2);
            for (a, &u) in axis.iter().enumerate() {
                for (b, &v) in axis.iter().enumerate() {
                    m[(a * per_dim + b, 0)] = u;
                    m[(a * per_dim + b, 1)] = v;
                }
            }
            Ok(m)
        }
        d => Err(NefError::InvalidParameter(format!(
            "grid evaluation points support 1 or 2 dimensions, got {d}"
        ))),
    }
}
