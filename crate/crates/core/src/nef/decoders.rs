use nalgebra::DMatrix;

use super::ensemble::Ensemble;
use super::NefError;

/// Linear readout from one ensemble's activity, approximating `target_function`.
#[derive(Clone, Debug)]
pub struct DecodedConnection {
    /// `n_neurons x output_dimensions`.
    decoders: DMatrix<f64>,
    /// Exponential synapse time constant (s).
    pub synapse_tau: f64,
    pub target_function: String,
}

impl DecodedConnection {
    pub fn new(
        source: &Ensemble,
        decoders: DMatrix<f64>,
        synapse_tau: f64,
        target_function: impl Into<String>,
    ) -> Result<Self, NefError> {
        if decoders.nrows() != source.n_neurons() || decoders.ncols() == 0 {
            return Err(NefError::DimensionMismatch {
                expected: source.n_neurons(),
                got: decoders.nrows(),
            });
        }
        if !(synapse_tau > 0.0) {
            return Err(NefError::InvalidParameter(format!("synapse tau {synapse_tau}")));
        }
        Ok(Self {
            decoders,
            synapse_tau,
            target_function: target_function.into(),
        })
    }

    /// Solves decoders for `function` over `eval_points` and wraps them.
    pub fn solve<F>(
        source: &Ensemble,
        eval_points: &DMatrix<f64>,
        output_dimensions: usize,
        function: F,
        regularization: f64,
        synapse_tau: f64,
        name: &str,
    ) -> Result<Self, NefError>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let m = eval_points.nrows();
        let mut targets = DMatrix::zeros(m, output_dimensions);
        for p in 0..m {
            let x: Vec<f64> = eval_points.row(p).iter().copied().collect();
            let y = function(&x);
            if y.len() != output_dimensions {
                return Err(NefError::DimensionMismatch {
                    expected: output_dimensions,
                    got: y.len(),
                });
            }
            for (d, v) in y.into_iter().enumerate() {
                targets[(p, d)] = v;
            }
        }
        let decoders = solve_decoders(source, eval_points, &targets, regularization)?;
        Self::new(source, decoders, synapse_tau, name)
    }

    pub fn decoders(&self) -> &DMatrix<f64> {
        &self.decoders
    }

    pub fn output_dimensions(&self) -> usize {
        self.decoders.ncols()
    }

    /// Rate-mode decode: `Σᵢ aᵢ dᵢ`.
    pub fn decode_rates(&self, activities: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dimensions()];
        for (i, &a) in activities.iter().enumerate() {
            if a != 0.0 {
                for (d, o) in out.iter_mut().enumerate() {
                    *o += a * self.decoders[(i, d)];
                }
            }
        }
        out
    }
}

/// Regularized least-squares decoders.
///
/// With `A` the `m x n` activity matrix over the evaluation points and
/// `σ = regularization · max(A)`, returns `D = (AᵀA + m σ² I)⁻¹ AᵀY`, i.e. the
/// minimizer of `‖Y − AD‖² + m σ² ‖D‖²`. Dividing through by `m` gives the
/// Gram matrix averaged over the evaluation set with `σ²` on its diagonal.
pub fn solve_decoders(
    ensemble: &Ensemble,
    eval_points: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    regularization: f64,
) -> Result<DMatrix<f64>, NefError> {
    let m = eval_points.nrows();
    if m == 0 {
        return Err(NefError::InvalidParameter("no evaluation points".into()));
    }
    if targets.nrows() != m {
        return Err(NefError::DimensionMismatch {
            expected: m,
            got: targets.nrows(),
        });
    }
    let a = ensemble.activity_matrix(eval_points)?;
    let sigma = regularization * a.max();
    let at = a.transpose();
    let mut gram = &at * &a;
    let ridge = m as f64 * sigma * sigma;
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let upsilon = &at * targets;
    let chol = gram.cholesky().ok_or(NefError::SingularGram)?;
    Ok(chol.solve(&upsilon))
}

/// `‖Y − AD‖² + m σ² ‖D‖²`, the quantity [`solve_decoders`] minimizes.
pub fn regularized_loss(
    ensemble: &Ensemble,
    eval_points: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    decoders: &DMatrix<f64>,
    regularization: f64,
) -> Result<f64, NefError> {
    let a = ensemble.activity_matrix(eval_points)?;
    let sigma = regularization * a.max();
    let resid = targets - &a * decoders;
    Ok(resid.norm_squared() + eval_points.nrows() as f64 * sigma * sigma * decoders.norm_squared())
}
