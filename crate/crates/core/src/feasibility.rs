//! Independent per-constraint surrogates combined into a feasibility classifier.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{Dataset, FitConfig, GpModel, GpModelFile};
use crate::normal;
use crate::Bounds;

/// Below this standard deviation a prediction is treated as exact.
pub const DEGENERATE_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Feasible,
    Infeasible,
}

impl Label {
    pub fn is_feasible(self) -> bool {
        self == Label::Feasible
    }
}

/// Stacked predictions of all constraint models at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPrediction {
    pub means: Vec<f64>,
    /// Raw-unit standard deviations.
    pub stds: Vec<f64>,
    /// `(t_l − μ_l) / σ_l`, infinite for degenerate σ.
    pub taus: Vec<f64>,
    /// Standard deviations in each model's standardized output units.
    pub standardized_stds: Vec<f64>,
}

impl JointPrediction {
    /// Assembles a prediction from raw means, deviations and thresholds.
    pub fn new(means: Vec<f64>, stds: Vec<f64>, thresholds: &[f64]) -> Self {
        let taus = means
            .iter()
            .zip(&stds)
            .zip(thresholds)
            .map(|((m, s), t)| tau(*m, *s, *t))
            .collect();
        JointPrediction {
            standardized_stds: stds.clone(),
            means,
            stds,
            taus,
        }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

/// Standardized distance to the threshold, with certainty mapped to ±∞.
pub fn tau(mean: f64, std: f64, threshold: f64) -> f64 {
    if std < DEGENERATE_STD {
        if mean <= threshold {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    } else {
        (threshold - mean) / std
    }
}

/// `Σ ln Φ(τ_l)`.
pub fn log_prob_feasible_from_taus(taus: &[f64]) -> f64 {
    taus.iter().map(|t| normal::log_cdf(*t)).sum()
}

/// `∏ Φ(τ_l)`, accumulated in the log domain.
pub fn prob_feasible_from_taus(taus: &[f64]) -> f64 {
    log_prob_feasible_from_taus(taus).exp()
}

pub fn prob_feasible(jp: &JointPrediction) -> f64 {
    prob_feasible_from_taus(&jp.taus)
}

/// Feasible only when `p(F) > p(I) = 1 − p(F)`; an exact tie is infeasible.
pub fn classify_probability(p_feasible: f64) -> Label {
    if p_feasible > 1.0 - p_feasible {
        Label::Feasible
    } else {
        Label::Infeasible
    }
}

/// One fitted model per constraint plus the threshold vector.
#[derive(Debug, Clone)]
pub struct MultiSurrogate {
    models: Vec<GpModel>,
    thresholds: Vec<f64>,
}

impl MultiSurrogate {
    pub fn new(models: Vec<GpModel>, thresholds: Vec<f64>) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::input("a multi-surrogate needs at least one model"))?;
        if models.len() != thresholds.len() {
            return Err(Error::input(format!(
                "{} models but {} thresholds",
                models.len(),
                thresholds.len()
            )));
        }
        if models.iter().any(|m| m.dimension() != first.dimension()) {
            return Err(Error::input("constraint models disagree on input dimension"));
        }
        if thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::input("thresholds must be finite"));
        }
        Ok(MultiSurrogate { models, thresholds })
    }

    /// Fits every constraint independently; model `l` uses seed `seed + l`.
    pub fn fit(
        data: &Dataset,
        bounds: &Bounds,
        thresholds: Vec<f64>,
        config: &FitConfig,
    ) -> Result<Self> {
        if data.num_outputs() != thresholds.len() {
            return Err(Error::input(format!(
                "{} outputs but {} thresholds",
                data.num_outputs(),
                thresholds.len()
            )));
        }
        let models = (0..data.num_outputs())
            .into_par_iter()
            .map(|l| {
                let cfg = FitConfig {
                    seed: config.seed.wrapping_add(l as u64),
                    ..config.clone()
                };
                GpModel::fit(data.inputs(), data.output(l), bounds, &cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        MultiSurrogate::new(models, thresholds)
    }

    pub fn models(&self) -> &[GpModel] {
        &self.models
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn num_constraints(&self) -> usize {
        self.models.len()
    }

    pub fn dimension(&self) -> usize {
        self.models[0].dimension()
    }

    pub fn joint_predict(&self, x: &[f64]) -> Result<JointPrediction> {
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
        Ok(self.joint_predict_unchecked(x))
    }

    pub(crate) fn joint_predict_unchecked(&self, x: &[f64]) -> JointPrediction {
        let l = self.models.len();
        let mut means = Vec::with_capacity(l);
        let mut stds = Vec::with_capacity(l);
        let mut taus = Vec::with_capacity(l);
        let mut standardized = Vec::with_capacity(l);
        for (model, t) in self.models.iter().zip(&self.thresholds) {
            let (m, v) = model.predict_raw(x);
            let norm = model.normalization();
            let sd = v.sqrt();
            let mean = norm.output_mean + norm.output_std * m;
            let std = norm.output_std * sd;
            means.push(mean);
            stds.push(std);
            taus.push(tau(mean, std, *t));
            standardized.push(sd);
        }
        JointPrediction {
            means,
            stds,
            taus,
            standardized_stds: standardized,
        }
    }

    pub fn prob_feasible_at(&self, x: &[f64]) -> Result<f64> {
        Ok(prob_feasible(&self.joint_predict(x)?))
    }

    pub fn classify(&self, x: &[f64]) -> Result<Label> {
        Ok(classify_probability(self.prob_feasible_at(x)?))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MultiSurrogateFile::from(self))
            .expect("model is serializable")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: MultiSurrogateFile =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        file.into_surrogate()
    }
}

/// A list of model files plus the threshold vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSurrogateFile {
    pub thresholds: Vec<f64>,
    pub models: Vec<GpModelFile>,
}

impl From<&MultiSurrogate> for MultiSurrogateFile {
    fn from(s: &MultiSurrogate) -> Self {
        MultiSurrogateFile {
            thresholds: s.thresholds.clone(),
            models: s.models.iter().map(GpModelFile::from).collect(),
        }
    }
}

impl MultiSurrogateFile {
    pub fn into_surrogate(self) -> Result<MultiSurrogate> {
        let models = self
            .models
            .into_iter()
            .map(GpModelFile::into_model)
            .collect::<Result<Vec<_>>>()?;
        MultiSurrogate::new(models, self.thresholds)
    }
}
