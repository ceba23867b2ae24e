//! Ordination scores, Procrustes comparison, dissimilarities and NMDS.

mod dissimilarity;
mod export;
mod nmds;
mod procrustes;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{GllvmError, Result};
use crate::estimator::FittedModel;

pub use dissimilarity::{dissimilarity, DissimilarityMatrix, Metric};
pub use export::{scores_svg, write_scores_csv};
pub use nmds::{isotonic_regression, nmds, NmdsFit, NmdsOptions};
pub use procrustes::{procrustes_align, procrustes_error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreSource {
    ModelVariationalMeans,
    Nmds,
}

/// Site coordinates in a low-dimensional ordination space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinationScores {
    pub site_names: Vec<String>,
    pub coords: Array2<f64>,
    pub source: ScoreSource,
    pub stress: Option<f64>,
}

impl OrdinationScores {
    pub fn new(site_names: Vec<String>, coords: Array2<f64>, source: ScoreSource, stress: Option<f64>) -> Result<Self> {
        if coords.ncols() == 0 {
            return Err(GllvmError::Dimension("ordination needs at least one dimension".into()));
        }
        if site_names.len() != coords.nrows() {
            return Err(GllvmError::Dimension("site names do not match coordinates".into()));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(GllvmError::Validation("ordination coordinates must be finite".into()));
        }
        Ok(OrdinationScores { site_names, coords, source, stress })
    }

    /// Variational means of a fitted model, one row per latent unit.
    pub fn from_model(model: &FittedModel) -> Result<Self> {
        OrdinationScores::new(
            model.units.names().to_vec(),
            model.vstate.means.clone(),
            ScoreSource::ModelVariationalMeans,
            None,
        )
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }
}
