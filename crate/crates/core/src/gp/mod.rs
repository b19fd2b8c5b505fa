//! Gaussian-process regression for a single constraint response.
//!
//! Inputs are mapped to the unit hypercube using the problem bounds and
//! outputs are standardized before fitting; [`GpModel::predict`] reports
//! mean and standard deviation back in raw output units. Hyperparameters
//! (ARD lengthscales, signal and noise variance) maximize the log marginal
//! likelihood through a multi-start L-BFGS search over log-parameters.

mod io;
mod kernel;
mod lbfgs;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Bounds;

pub use io::GpModelFile;
pub use kernel::{kernel_matrix, matern52, KernelParams};

use kernel::{matern52_from_distance, matern52_lengthscale_factor};
use lbfgs::LbfgsOptions;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Design vectors with the responses of every constraint at each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dimension: usize,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl Dataset {
    /// An empty dataset for `dimension`-dimensional inputs and `num_outputs` responses.
    pub fn new(dimension: usize, num_outputs: usize) -> Result<Self> {
        if dimension == 0 || num_outputs == 0 {
            return Err(Error::input("dataset needs a positive dimension and output count"));
        }
        Ok(Dataset {
            dimension,
            inputs: Vec::new(),
            outputs: vec![Vec::new(); num_outputs],
        })
    }

    /// Builds a dataset from rows of inputs and the matching rows of responses.
    pub fn from_rows(inputs: Vec<Vec<f64>>, responses: Vec<Vec<f64>>) -> Result<Self> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::input("dataset needs at least one row"))?;
        let num_outputs = responses.first().map_or(0, Vec::len);
        let mut data = Dataset::new(first.len(), num_outputs)?;
        if inputs.len() != responses.len() {
            return Err(Error::input(format!(
                "{} input rows but {} response rows",
                inputs.len(),
                responses.len()
            )));
        }
        for (x, g) in inputs.into_iter().zip(responses) {
            data.push(x, &g)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, x: Vec<f64>, responses: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::input(format!(
                "row of dimension {} in a {}-dimensional dataset",
                x.len(),
                self.dimension
            )));
        }
        if responses.len() != self.outputs.len() {
            return Err(Error::input(format!(
                "{} responses for {} outputs",
                responses.len(),
                self.outputs.len()
            )));
        }
        if x.iter().chain(responses).any(|v| !v.is_finite()) {
            return Err(Error::input("dataset values must be finite"));
        }
        self.inputs.push(x);
        for (column, g) in self.outputs.iter_mut().zip(responses) {
            column.push(*g);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    /// Responses of output `l` in row order.
    pub fn output(&self, l: usize) -> &[f64] {
        &self.outputs[l]
    }
}

/// Affine maps between raw and model space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_lo: Vec<f64>,
    pub input_hi: Vec<f64>,
    pub output_mean: f64,
    pub output_std: f64,
}

impl Normalization {
    /// Input box from `bounds`; output mean and population standard deviation
    /// from `outputs` (a degenerate spread falls back to 1).
    pub fn from_data(bounds: &Bounds, outputs: &[f64]) -> Self {
        let m = outputs.len().max(1) as f64;
        let mean = outputs.iter().sum::<f64>() / m;
        let var = outputs.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / m;
        let std = var.sqrt();
        Normalization {
            input_lo: bounds.lower(),
            input_hi: bounds.upper(),
            output_mean: mean,
            output_std: if std > 1e-12 { std } else { 1.0 },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_lo.len() != self.input_hi.len() {
            return Err(Error::input("normalization bounds have different lengths"));
        }
        if self
            .input_lo
            .iter()
            .zip(&self.input_hi)
            .any(|(lo, hi)| hi <= lo || !lo.is_finite() || !hi.is_finite())
        {
            return Err(Error::input("normalization box must have lo < hi"));
        }
        if !(self.output_std > 0.0 && self.output_std.is_finite() && self.output_mean.is_finite())
        {
            return Err(Error::input("output scaling must be finite with positive std"));
        }
        Ok(())
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_lo.iter().zip(&self.input_hi))
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }
}

/// Hyperparameter search settings; bounds are in normalized space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub restarts: usize,
    pub seed: u64,
    pub lengthscale_bounds: (f64, f64),
    pub signal_variance_bounds: (f64, f64),
    pub noise_variance_bounds: (f64, f64),
    pub jitter_start: f64,
    pub jitter_max: f64,
    pub max_iters: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            restarts: 10,
            seed: 0,
            lengthscale_bounds: (1e-3, 10.0),
            signal_variance_bounds: (1e-3, 10.0),
            noise_variance_bounds: (1e-8, 1e-1),
            jitter_start: 1e-10,
            jitter_max: 1e-4,
            max_iters: 60,
        }
    }
}

impl FitConfig {
    pub fn with_seed(seed: u64) -> Self {
        FitConfig {
            seed,
            ..Default::default()
        }
    }
}

/// Gaussian predictive distribution at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub std: f64,
}

/// A trained single-output Gaussian process.
#[derive(Debug, Clone)]
pub struct GpModel {
    params: KernelParams,
    normalization: Normalization,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
    unit_inputs: Vec<Vec<f64>>,
    chol: DMatrix<f64>,
    // Row-major copy of the factor for allocation-light prediction.
    chol_rows: Vec<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpModel {
    /// Fits hyperparameters by maximizing the log marginal likelihood.
    pub fn fit(
        inputs: &[Vec<f64>],
        outputs: &[f64],
        bounds: &Bounds,
        config: &FitConfig,
    ) -> Result<GpModel> {
        check_training(inputs, outputs, bounds.dim())?;
        let distinct = {
            let mut rows: Vec<&Vec<f64>> = inputs.iter().collect();
            rows.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            rows.dedup();
            rows.len()
        };
        if distinct < 2 {
            return Err(Error::input(format!(
                "fitting needs at least 2 distinct inputs, got {distinct}"
            )));
        }

        let normalization = Normalization::from_data(bounds, outputs);
        let unit: Vec<Vec<f64>> = inputs.iter().map(|x| normalization.to_unit(x)).collect();
        let y = DVector::from_iterator(
            outputs.len(),
            outputs
                .iter()
                .map(|v| (v - normalization.output_mean) / normalization.output_std),
        );
        let objective = LikelihoodObjective::new(&unit, &y, config);

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dim = bounds.dim();
        let opts = LbfgsOptions {
            max_iters: config.max_iters,
            ..Default::default()
        };
        let mut best: Option<(Vec<f64>, f64)> = None;
        for restart in 0..config.restarts.max(1) {
            let start = if restart == 0 {
                let mut theta = vec![0.5f64.ln(); dim];
                theta.push(0.0);
                theta.push(1e-6f64.ln());
                theta
            } else {
                let mut theta: Vec<f64> = (0..dim)
                    .map(|_| rng.random_range(0.05f64.ln()..5.0f64.ln()))
                    .collect();
                theta.push(rng.random_range(0.3f64.ln()..3.0f64.ln()));
                theta.push(rng.random_range(1e-8f64.ln()..1e-3f64.ln()));
                theta
            };
            let u0 = objective.to_unconstrained(&start);
            if let Some((u, value)) = lbfgs::minimize(|u| objective.evaluate(u), u0, &opts) {
                if best.as_ref().is_none_or(|(_, b)| value < *b) {
                    best = Some((u, value));
                }
            }
        }
        let (u, _) = best.ok_or_else(|| {
            Error::numerical("covariance not positive definite for any hyperparameter start")
        })?;
        let theta = objective.to_constrained(&u);
        let params = KernelParams {
            lengthscales: theta[..dim].iter().map(|v| v.exp()).collect(),
            signal_variance: theta[dim].exp(),
            noise_variance: theta[dim + 1].exp(),
        };
        GpModel::build(
            params,
            normalization,
            inputs.to_vec(),
            outputs.to_vec(),
            config.jitter_start,
            config.jitter_max,
        )
    }

    /// Conditions a GP with fixed hyperparameters on the given data.
    pub fn from_parts(
        params: KernelParams,
        normalization: Normalization,
        inputs: Vec<Vec<f64>>,
        outputs: Vec<f64>,
    ) -> Result<GpModel> {
        let defaults = FitConfig::default();
        GpModel::build(
            params,
            normalization,
            inputs,
            outputs,
            defaults.jitter_start,
            defaults.jitter_max,
        )
    }

    fn build(
        params: KernelParams,
        normalization: Normalization,
        inputs: Vec<Vec<f64>>,
        outputs: Vec<f64>,
        jitter_start: f64,
        jitter_max: f64,
    ) -> Result<GpModel> {
        params.validate()?;
        normalization.validate()?;
        if normalization.input_lo.len() != params.dimension() {
            return Err(Error::input("normalization and kernel dimensions differ"));
        }
        check_training(&inputs, &outputs, params.dimension())?;
        let unit: Vec<Vec<f64>> = inputs.iter().map(|x| normalization.to_unit(x)).collect();
        let m = unit.len();
        let base = kernel_matrix(&unit, &params)?;
        let (chol, jitter) = factorize(base, params.noise_variance, jitter_start, jitter_max)?;
        let y = DVector::from_iterator(
            m,
            outputs
                .iter()
                .map(|v| (v - normalization.output_mean) / normalization.output_std),
        );
        let alpha = chol.solve(&y);
        let l = chol.l();
        let mut chol_rows = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                chol_rows[i * m + j] = l[(i, j)];
            }
        }
        Ok(GpModel {
            params,
            normalization,
            inputs,
            outputs,
            unit_inputs: unit,
            chol: l,
            chol_rows,
            alpha,
            jitter,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn training_inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn training_outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn dimension(&self) -> usize {
        self.params.dimension()
    }

    /// Lower-triangular factor of `K + (noise + jitter)·I` in normalized units.
    pub fn chol_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Diagonal jitter that made the training covariance factorizable.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Training covariance including noise and jitter, normalized units.
    pub fn training_covariance(&self) -> DMatrix<f64> {
        let mut k = kernel_matrix(&self.unit_inputs, &self.params)
            .expect("validated at construction");
        for i in 0..k.nrows() {
            k[(i, i)] += self.params.noise_variance + self.jitter;
        }
        k
    }

    /// Log marginal likelihood of the standardized outputs.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let m = self.outputs.len();
        let y = DVector::from_iterator(m, self.standardized_outputs());
        let log_det: f64 = (0..m).map(|i| self.chol[(i, i)].ln()).sum();
        -0.5 * y.dot(&self.alpha) - log_det - 0.5 * m as f64 * LN_2PI
    }

    /// Training outputs in standardized units.
    pub fn standardized_outputs(&self) -> impl Iterator<Item = f64> + '_ {
        self.outputs
            .iter()
            .map(|v| (v - self.normalization.output_mean) / self.normalization.output_std)
    }

    /// Predictive mean and standard deviation in raw output units.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let (mean, var) = self.predict_standardized_checked(x)?;
        Ok(Prediction {
            mean: self.normalization.output_mean + self.normalization.output_std * mean,
            std: self.normalization.output_std * var.sqrt(),
        })
    }

    /// Predictive mean and standard deviation in standardized output units.
    pub fn predict_standardized(&self, x: &[f64]) -> Result<Prediction> {
        let (mean, var) = self.predict_standardized_checked(x)?;
        Ok(Prediction {
            mean,
            std: var.sqrt(),
        })
    }

    fn predict_standardized_checked(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dimension() {
            return Err(Error::input(format!(
                "query of dimension {} for a {}-dimensional model",
                x.len(),
                self.dimension()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("query point must be finite"));
        }
        Ok(self.predict_raw(x))
    }

    /// Standardized (mean, variance) without validation.
    pub(crate) fn predict_raw(&self, x: &[f64]) -> (f64, f64) {
        let m = self.unit_inputs.len();
        let z = self.normalization.to_unit(x);
        let sf2 = self.params.signal_variance;
        let ls = &self.params.lengthscales;
        let mut v: Vec<f64> = self
            .unit_inputs
            .iter()
            .map(|xi| matern52_from_distance(kernel::scaled_distance(&z, xi, ls), sf2))
            .collect();
        let mean: f64 = v.iter().zip(self.alpha.iter()).map(|(k, a)| k * a).sum();
        // Forward substitution L·w = k*, in place.
        for i in 0..m {
            let row = &self.chol_rows[i * m..i * m + i];
            let s: f64 = row.iter().zip(&v[..i]).map(|(l, w)| l * w).sum();
            v[i] = (v[i] - s) / self.chol_rows[i * m + i];
        }
        let explained: f64 = v.iter().map(|w| w * w).sum();
        (mean, (sf2 - explained).max(0.0))
    }
}

fn check_training(inputs: &[Vec<f64>], outputs: &[f64], dim: usize) -> Result<()> {
    if inputs.len() != outputs.len() {
        return Err(Error::input(format!(
            "{} inputs but {} outputs",
            inputs.len(),
            outputs.len()
        )));
    }
    if inputs.len() < 2 {
        return Err(Error::input(format!(
            "a model needs at least 2 training points, got {}",
            inputs.len()
        )));
    }
    if inputs.iter().any(|x| x.len() != dim) {
        return Err(Error::input("training inputs have inconsistent dimension"));
    }
    if inputs.iter().flatten().chain(outputs).any(|v| !v.is_finite()) {
        return Err(Error::input("training data must be finite"));
    }
    Ok(())
}

/// Cholesky of `base + (noise + jitter)·I` with ×10 jitter escalation.
fn factorize(
    base: DMatrix<f64>,
    noise: f64,
    jitter_start: f64,
    jitter_max: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = jitter_start;
    loop {
        let mut k = base.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += noise + jitter;
        }
        if let Some(chol) = Cholesky::new(k) {
            return Ok((chol, jitter));
        }
        jitter *= 10.0;
        if jitter > jitter_max * (1.0 + 1e-9) {
            return Err(Error::numerical(format!(
                "training covariance not positive definite with jitter up to {jitter_max:e}"
            )));
        }
    }
}

/// Negative log marginal likelihood over sigmoid-squashed log-hyperparameters.
struct LikelihoodObjective<'a> {
    y: &'a DVector<f64>,
    m: usize,
    dim: usize,
    // Squared coordinate differences for every pair i > j, row-major by pair.
    pair_sq: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    jitter_start: f64,
    jitter_max: f64,
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

impl<'a> LikelihoodObjective<'a> {
    fn new(unit: &[Vec<f64>], y: &'a DVector<f64>, config: &FitConfig) -> Self {
        let m = unit.len();
        let dim = unit[0].len();
        let mut pair_sq = Vec::with_capacity(m * (m - 1) / 2 * dim);
        for i in 0..m {
            for j in 0..i {
                pair_sq.extend(unit[i].iter().zip(&unit[j]).map(|(a, b)| (a - b) * (a - b)));
            }
        }
        let mut lo = vec![config.lengthscale_bounds.0.ln(); dim];
        let mut hi = vec![config.lengthscale_bounds.1.ln(); dim];
        lo.push(config.signal_variance_bounds.0.ln());
        hi.push(config.signal_variance_bounds.1.ln());
        lo.push(config.noise_variance_bounds.0.ln());
        hi.push(config.noise_variance_bounds.1.ln());
        LikelihoodObjective {
            y,
            m,
            dim,
            pair_sq,
            lo,
            hi,
            jitter_start: config.jitter_start,
            jitter_max: config.jitter_max,
        }
    }

    fn to_constrained(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(u, (lo, hi))| lo + (hi - lo) * sigmoid(*u))
            .collect()
    }

    fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(t, (lo, hi))| {
                let p = ((t - lo) / (hi - lo)).clamp(1e-6, 1.0 - 1e-6);
                (p / (1.0 - p)).ln()
            })
            .collect()
    }

    fn evaluate(&self, u: &[f64]) -> Option<(f64, Vec<f64>)> {
        let theta = self.to_constrained(u);
        let (value, grad_theta) = self.neg_lml(&theta)?;
        let grad = grad_theta
            .iter()
            .zip(u)
            .zip(self.lo.iter().zip(&self.hi))
            .map(|((g, u), (lo, hi))| {
                let s = sigmoid(*u);
                g * (hi - lo) * s * (1.0 - s)
            })
            .collect();
        Some((value, grad))
    }

    /// Negative log marginal likelihood and its gradient in log-parameters.
    fn neg_lml(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (m, dim) = (self.m, self.dim);
        let inv_ls2: Vec<f64> = theta[..dim].iter().map(|t| (-2.0 * t).exp()).collect();
        let sf2 = theta[dim].exp();
        let noise = theta[dim + 1].exp();

        let mut base = DMatrix::zeros(m, m);
        let mut radii = Vec::with_capacity(m * (m - 1) / 2);
        let mut p = 0;
        for i in 0..m {
            base[(i, i)] = sf2;
            for j in 0..i {
                let sq = &self.pair_sq[p * dim..(p + 1) * dim];
                let r = sq.iter().zip(&inv_ls2).map(|(s, w)| s * w).sum::<f64>().sqrt();
                let k = matern52_from_distance(r, sf2);
                base[(i, j)] = k;
                base[(j, i)] = k;
                radii.push(r);
                p += 1;
            }
        }
        let (chol, _) = factorize(base.clone(), noise, self.jitter_start, self.jitter_max).ok()?;
        let alpha = chol.solve(self.y);
        let log_det: f64 = (0..m).map(|i| chol.l_dirty()[(i, i)].ln()).sum();
        let lml = -0.5 * self.y.dot(&alpha) - log_det - 0.5 * m as f64 * LN_2PI;
        if !lml.is_finite() {
            return None;
        }

        // W = ααᵀ − K⁻¹; ∂lml/∂θ = ½ tr(W ∂K/∂θ).
        let k_inv = chol.inverse();
        let mut grad = vec![0.0; dim + 2];
        let mut p = 0;
        for i in 0..m {
            let w_ii = alpha[i] * alpha[i] - k_inv[(i, i)];
            grad[dim] += 0.5 * w_ii * sf2;
            grad[dim + 1] += 0.5 * w_ii * noise;
            for j in 0..i {
                let w = alpha[i] * alpha[j] - k_inv[(i, j)];
                // Off-diagonal pairs appear twice in the trace.
                grad[dim] += w * base[(i, j)];
                let factor = w * matern52_lengthscale_factor(radii[p], sf2);
                let sq = &self.pair_sq[p * dim..(p + 1) * dim];
                for d in 0..dim {
                    grad[d] += factor * sq[d] * inv_ls2[d];
                }
                p += 1;
            }
        }
        Some((-lml, grad.into_iter().map(|g| -g).collect()))
    }
}
