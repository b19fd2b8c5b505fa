//! Box-constrained maximization with BIPOP-CMA-ES.
//!
//! The search runs in the unit hypercube and maps candidates into the
//! caller's bounds before evaluation. Every objective call counts against
//! `max_evals`, including those spent by restarts.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Bounds;

const RESAMPLE_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_evals: usize,
    pub bounds: Bounds,
    pub seed: u64,
    /// Initial step size as a fraction of the box width.
    pub initial_sigma: f64,
    /// Cap on the number of large-population restarts.
    pub max_restarts: usize,
    pub population_growth: f64,
}

impl OptimizerConfig {
    /// Defaults: `5000·n` evaluations, step 0.3, population doubling.
    pub fn new(bounds: Bounds, seed: u64) -> Self {
        OptimizerConfig {
            max_evals: 5000 * bounds.dim(),
            bounds,
            seed,
            initial_sigma: 0.3,
            max_restarts: 9,
            population_growth: 2.0,
        }
    }

    pub fn with_max_evals(mut self, max_evals: usize) -> Self {
        self.max_evals = max_evals;
        self
    }

    pub fn default_population(&self) -> usize {
        default_population(self.bounds.dim())
    }
}

pub fn default_population(dim: usize) -> usize {
    4 + (3.0 * (dim as f64).ln()).floor() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

struct Incumbent {
    x: Vec<f64>,
    value: f64,
    evals: usize,
}

/// Evaluation wrapper: maps unit-cube points to the box, counts calls and
/// tracks the best point seen.
struct Budgeted<'a, F> {
    f: F,
    bounds: &'a Bounds,
    max_evals: usize,
    best: Incumbent,
}

impl<F: FnMut(&[f64]) -> f64> Budgeted<'_, F> {
    fn remaining(&self) -> usize {
        self.max_evals - self.best.evals
    }

    fn eval_unit(&mut self, u: &[f64]) -> f64 {
        let x = self.bounds.from_unit(u);
        let v = (self.f)(&x);
        let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
        self.best.evals += 1;
        if v > self.best.value || self.best.x.is_empty() {
            self.best.value = v;
            self.best.x = x;
        }
        v
    }
}

/// Maximizes `f` over `config.bounds`.
pub fn maximize<F>(f: F, config: &OptimizerConfig) -> Result<OptimizerResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = config.bounds.dim();
    let lambda0 = config.default_population();
    if config.max_evals < lambda0 {
        return Err(Error::input(format!(
            "evaluation budget {} is below the population size {lambda0}",
            config.max_evals
        )));
    }
    if config.initial_sigma.is_nan() || config.initial_sigma <= 0.0 {
        return Err(Error::input("initial step size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut budget = Budgeted {
        f,
        bounds: &config.bounds,
        max_evals: config.max_evals,
        best: Incumbent {
            x: Vec::new(),
            value: f64::NEG_INFINITY,
            evals: 0,
        },
    };

    // First run with the default population, then BIPOP alternation.
    let used = run_cmaes(&mut budget, &mut rng, dim, lambda0, config.initial_sigma);
    let mut large_evals = used;
    let mut small_evals = 0usize;
    let mut large_restarts = 0usize;
    while budget.remaining() >= lambda0 {
        if small_evals < large_evals || large_restarts >= config.max_restarts {
            let u: f64 = rng.random();
            let large_lambda =
                lambda0 as f64 * config.population_growth.powi(large_restarts.max(1) as i32);
            let lambda = ((lambda0 as f64) * (0.5 * large_lambda / lambda0 as f64).powf(u * u))
                .floor()
                .max(lambda0 as f64) as usize;
            let sigma = config.initial_sigma * 10f64.powf(-2.0 * rng.random::<f64>());
            small_evals += run_cmaes(&mut budget, &mut rng, dim, lambda, sigma);
        } else {
            large_restarts += 1;
            let lambda = (lambda0 as f64 * config.population_growth.powi(large_restarts as i32))
                .round() as usize;
            let lambda = lambda.min(budget.remaining()).max(lambda0);
            large_evals += run_cmaes(&mut budget, &mut rng, dim, lambda, config.initial_sigma);
        }
    }

    let best = budget.best;
    Ok(OptimizerResult {
        x: best.x,
        value: best.value,
        evals: best.evals,
    })
}

/// One CMA-ES run in the unit cube. Returns the evaluations it consumed.
fn run_cmaes<F: FnMut(&[f64]) -> f64>(
    budget: &mut Budgeted<'_, F>,
    rng: &mut ChaCha8Rng,
    n: usize,
    lambda: usize,
    sigma0: f64,
) -> usize {
    let start_evals = budget.best.evals;
    if budget.remaining() < lambda {
        return 0;
    }
    let nf = n as f64;
    let mu = lambda / 2;
    let raw: Vec<f64> = (0..mu)
        .map(|i| (mu as f64 + 0.5).ln() - ((i + 1) as f64).ln())
        .collect();
    let wsum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / wsum).collect();
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
    let c_mu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut mean = DVector::from_fn(n, |_, _| rng.random::<f64>());
    let mut sigma = sigma0;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut basis = DMatrix::<f64>::identity(n, n);
    let mut scales = DVector::from_element(n, 1.0);
    let mut p_sigma = DVector::zeros(n);
    let mut p_c = DVector::zeros(n);

    let history_len = 10 + (30.0 * nf / lambda as f64).ceil() as usize;
    let mut best_history: Vec<f64> = Vec::new();
    let max_generations = 100 + (50.0 * (nf + 3.0).powi(2) / (lambda as f64).sqrt()) as usize;

    for generation in 0..max_generations {
        if budget.remaining() < lambda {
            break;
        }
        let mut offspring: Vec<(f64, DVector<f64>)> = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            let mut candidate = None;
            for _ in 0..RESAMPLE_ATTEMPTS {
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = &mean + sigma * (&basis * scales.component_mul(&z));
                if x.iter().all(|v| (0.0..=1.0).contains(v)) {
                    candidate = Some(x);
                    break;
                }
                candidate = Some(x);
            }
            let mut x = candidate.expect("at least one attempt");
            x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            let value = budget.eval_unit(x.as_slice());
            offspring.push((value, x));
        }
        // Maximization: best first.
        offspring.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));

        let old_mean = mean.clone();
        mean = DVector::zeros(n);
        for (w, (_, x)) in weights.iter().zip(&offspring) {
            mean += *w * x;
        }
        let step = (&mean - &old_mean) / sigma;

        // C^{-1/2} · step
        let inv_sqrt_step = &basis * (basis.transpose() * &step).component_div(&scales);
        p_sigma = (1.0 - c_sigma) * &p_sigma
            + (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt() * inv_sqrt_step;
        let ps_norm = p_sigma.norm();
        let h_sigma = ps_norm
            / (1.0 - (1.0 - c_sigma).powi(2 * (generation as i32 + 1))).sqrt()
            / chi_n
            < 1.4 + 2.0 / (nf + 1.0);
        let h = if h_sigma { 1.0 } else { 0.0 };
        p_c = (1.0 - c_c) * &p_c + h * (c_c * (2.0 - c_c) * mu_eff).sqrt() * &step;

        let mut rank_mu = DMatrix::zeros(n, n);
        for (w, (_, x)) in weights.iter().zip(&offspring) {
            let y = (x - &old_mean) / sigma;
            rank_mu += *w * &y * y.transpose();
        }
        let delta_h = (1.0 - h) * c_c * (2.0 - c_c);
        cov = (1.0 - c1 - c_mu + c1 * delta_h) * &cov
            + c1 * &p_c * p_c.transpose()
            + c_mu * rank_mu;
        cov = 0.5 * (&cov + cov.transpose());

        sigma *= ((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0)).min(1.0).exp();

        let eig = SymmetricEigen::new(cov.clone());
        basis = eig.eigenvectors;
        scales = eig.eigenvalues.map(|v| v.max(1e-300).sqrt());

        best_history.push(offspring[0].0);
        let spread = offspring[0].0 - offspring[lambda - 1].0;
        let max_scale = scales.max();
        let min_scale = scales.min();
        let stalled = best_history.len() >= history_len && {
            let recent = &best_history[best_history.len() - history_len..];
            let hi = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = recent.iter().cloned().fold(f64::INFINITY, f64::min);
            (hi - lo).abs() < 1e-12 && spread.abs() < 1e-12
        };
        if stalled
            || sigma * max_scale < 1e-12
            || max_scale / min_scale > 1e7
            || !sigma.is_finite()
        {
            break;
        }
    }
    budget.best.evals - start_evals
}
