use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GpModel, KernelParams, Normalization};
use crate::error::{Error, Result};

/// On-disk form of a [`GpModel`]. Only the data needed to rebuild the
/// factorization is stored; the factor itself is recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModelFile {
    pub kernel: String,
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub normalization: Normalization,
    pub training_inputs: Vec<Vec<f64>>,
    pub training_outputs: Vec<f64>,
}

pub(crate) const KERNEL_NAME: &str = "matern52";

impl From<&GpModel> for GpModelFile {
    fn from(model: &GpModel) -> Self {
        GpModelFile {
            kernel: KERNEL_NAME.to_string(),
            lengthscales: model.params.lengthscales.clone(),
            signal_variance: model.params.signal_variance,
            noise_variance: model.params.noise_variance,
            normalization: model.normalization.clone(),
            training_inputs: model.inputs.clone(),
            training_outputs: model.outputs.clone(),
        }
    }
}

impl GpModelFile {
    pub fn into_model(self) -> Result<GpModel> {
        if self.kernel != KERNEL_NAME {
            return Err(Error::input(format!("unsupported kernel {:?}", self.kernel)));
        }
        let params = KernelParams::new(self.signal_variance, self.lengthscales, self.noise_variance)?;
        GpModel::from_parts(
            params,
            self.normalization,
            self.training_inputs,
            self.training_outputs,
        )
    }
}

impl GpModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GpModelFile::from(self)).expect("model is serializable")
    }

    pub fn from_json(text: &str) -> Result<GpModel> {
        let file: GpModelFile =
            serde_json::from_str(text).map_err(|e| Error::format("<model json>", e))?;
        file.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GpModel> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: GpModelFile = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        file.into_model()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::FitConfig;
    use crate::Bounds;

    #[test]
    fn json_reload_predicts_identically() {
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![0.1 + i as f64 * 0.31, (i as f64).sqrt()]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0].cos() * x[1]).collect();
        let bounds = Bounds::new(vec![(0.0, 2.0), (0.0, 3.0)]).unwrap();
        let model = GpModel::fit(&xs, &ys, &bounds, &FitConfig::default()).unwrap();
        let reloaded = GpModel::from_json(&model.to_json()).unwrap();
        assert_eq!(reloaded.params(), model.params());
        for q in [[0.3, 0.4], [1.7, 2.9]] {
            assert_eq!(reloaded.predict(&q).unwrap(), model.predict(&q).unwrap());
        }
        assert!(model.to_json().contains("\"kernel\": \"matern52\""));
    }

    #[test]
    fn rejects_unknown_kernel() {
        let mut file = GpModelFile {
            kernel: "rbf".into(),
            lengthscales: vec![1.0],
            signal_variance: 1.0,
            noise_variance: 0.0,
            normalization: Normalization {
                input_lo: vec![0.0],
                input_hi: vec![1.0],
                output_mean: 0.0,
                output_std: 1.0,
            },
            training_inputs: vec![vec![0.0], vec![1.0]],
            training_outputs: vec![0.0, 1.0],
        };
        assert!(file.clone().into_model().is_err());
        file.kernel = KERNEL_NAME.into();
        assert!(file.into_model().is_ok());
    }
}
