//! JSON scenario documents: a Gaussian prior over named blocks plus a list
//! of candidate actions built from linear-Gaussian models.
//!
//! ```json
//! {
//!   "blocks": [{"id": "x", "dim": 1}],
//!   "prior": {"mean": [0.0], "covariance": [1.0]},
//!   "actions": [{
//!     "id": "a",
//!     "transitions": [{"output": "x1", "inputs": ["x"], "matrix": [1.0], "noise_cov": [1.0]}],
//!     "observations": [{"step": 1, "output": "z", "inputs": ["x1"], "matrix": [1.0], "noise_cov": [1.0]}]
//!   }]
//! }
//! ```
//!
//! Matrices are row-major. A model's output dimension is the square root of
//! its `noise_cov` length. Omitted outputs default to `<action>.new<j>` and
//! `<action>.z<k>`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::row_major;
use crate::scalar::Real;
use crate::state::{Action, GaussianDensity, LinearGaussianModel, Observation, StateLayout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDoc {
    pub id: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorDoc {
    pub mean: Vec<f64>,
    pub covariance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub inputs: Vec<String>,
    pub matrix: Vec<f64>,
    pub noise_cov: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationDoc {
    pub step: usize,
    #[serde(flatten)]
    pub model: ModelDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionDoc {
    pub id: String,
    #[serde(default)]
    pub transitions: Vec<ModelDoc>,
    #[serde(default)]
    pub observations: Vec<ObservationDoc>,
}

/// Serialized form of a [`Scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub blocks: Vec<BlockDoc>,
    pub prior: PriorDoc,
    pub actions: Vec<ActionDoc>,
}

#[derive(Debug, Clone)]
pub struct Scenario<T: Real> {
    pub prior: GaussianDensity<T>,
    pub actions: Vec<Action<T>>,
}

fn cast<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|x| T::lit(*x)).collect()
}

fn model_from_doc<T: Real>(doc: &ModelDoc, default_output: String) -> Result<LinearGaussianModel<T>> {
    let k = (doc.noise_cov.len() as f64).sqrt().round() as usize;
    if k * k != doc.noise_cov.len() || k == 0 {
        return Err(Error::Scenario(format!(
            "noise_cov of `{}` has {} entries, not a non-empty square",
            doc.output.as_deref().unwrap_or(&default_output),
            doc.noise_cov.len()
        )));
    }
    if !doc.matrix.len().is_multiple_of(k) {
        return Err(Error::Scenario(format!(
            "matrix of `{}` has {} entries, not a multiple of {k} rows",
            doc.output.as_deref().unwrap_or(&default_output),
            doc.matrix.len()
        )));
    }
    let inputs: Vec<&str> = doc.inputs.iter().map(String::as_str).collect();
    let matrix: Vec<T> = cast(&doc.matrix);
    let noise: Vec<T> = cast(&doc.noise_cov);
    let cols = doc.matrix.len() / k;
    LinearGaussianModel::new(
        doc.output.clone().unwrap_or(default_output),
        inputs.iter().map(|s| (*s).into()).collect(),
        nalgebra::DMatrix::from_row_slice(k, cols, &matrix),
        nalgebra::DMatrix::from_row_slice(k, k, &noise),
    )
}

fn model_to_doc<T: Real>(m: &LinearGaussianModel<T>) -> ModelDoc {
    ModelDoc {
        output: Some(m.output().to_string()),
        inputs: m.inputs().iter().map(|b| b.to_string()).collect(),
        matrix: row_major(m.matrix()).iter().map(|v| v.as_f64()).collect(),
        noise_cov: row_major(m.noise_cov()).iter().map(|v| v.as_f64()).collect(),
    }
}

impl ScenarioDoc {
    pub fn build<T: Real>(&self) -> Result<Scenario<T>> {
        let layout = StateLayout::new(self.blocks.iter().map(|b| (b.id.clone(), b.dim)))?;
        let prior = GaussianDensity::from_row_major(layout, cast(&self.prior.mean), cast(&self.prior.covariance))?;
        let mut actions = Vec::with_capacity(self.actions.len());
        for a in &self.actions {
            let transitions = a
                .transitions
                .iter()
                .enumerate()
                .map(|(j, t)| model_from_doc(t, format!("{}.new{j}", a.id)))
                .collect::<Result<Vec<_>>>()?;
            let observations = a
                .observations
                .iter()
                .enumerate()
                .map(|(k, o)| {
                    Ok(Observation {
                        step: o.step,
                        model: model_from_doc(&o.model, format!("{}.z{k}", a.id))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let action = Action::new(a.id.clone(), transitions, observations)?;
            action.resolve(prior.layout())?;
            actions.push(action);
        }
        Ok(Scenario { prior, actions })
    }
}

impl<T: Real> Scenario<T> {
    pub fn action(&self, id: &str) -> Option<&Action<T>> {
        self.actions.iter().find(|a| a.id() == id)
    }

    pub fn to_doc(&self) -> ScenarioDoc {
        ScenarioDoc {
            blocks: self
                .prior
                .layout()
                .blocks()
                .iter()
                .map(|b| BlockDoc {
                    id: b.id.to_string(),
                    dim: b.dim,
                })
                .collect(),
            prior: PriorDoc {
                mean: self.prior.mean().iter().map(|v| v.as_f64()).collect(),
                covariance: row_major(self.prior.covariance()).iter().map(|v| v.as_f64()).collect(),
            },
            actions: self
                .actions
                .iter()
                .map(|a| ActionDoc {
                    id: a.id().to_string(),
                    transitions: a.transitions().iter().map(model_to_doc).collect(),
                    observations: a
                        .observations()
                        .iter()
                        .map(|o| ObservationDoc {
                            step: o.step,
                            model: model_to_doc(&o.model),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ScenarioDoc>(text)?.build()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))
    }
}
