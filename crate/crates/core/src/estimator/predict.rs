//! Plug-in predictions at the fitted variational means.

use ndarray::{Array2, Axis};

use super::fit::FittedModel;
use crate::distributions::{mean_response, presence_probability, CellParams};
use crate::error::{GllvmError, Result};
use crate::model::{linear_predictor, CovariateMatrix, ParameterSet};

/// Map from each training row to its latent unit.
pub fn training_site_map(model: &FittedModel) -> Vec<usize> {
    model.units.unit_of_row().to_vec()
}

/// Linear predictors of every part (indexed by [`Part::index`]) for new rows,
/// each mapped to a fitted latent unit.
pub fn predict_linear(
    model: &FittedModel,
    covariates: &CovariateMatrix,
    site_map: &[usize],
) -> Result<[Option<Array2<f64>>; 3]> {
    let n = covariates.n_rows();
    if site_map.len() != n {
        return Err(GllvmError::Dimension(format!("{n} rows but {} site assignments", site_map.len())));
    }
    if covariates.names() != model.covariate_names.as_slice() {
        return Err(GllvmError::Validation(format!(
            "covariates {:?} differ from the fitted {:?}",
            covariates.names(),
            model.covariate_names
        )));
    }
    let n_units = model.vstate.n_units();
    if let Some(bad) = site_map.iter().find(|&&u| u >= n_units) {
        return Err(GllvmError::Validation(format!("site index {bad} has no estimated latent score")));
    }
    let scores = model.vstate.means.select(Axis(0), site_map);
    let alpha = model.params.row_effects.as_ref().map(|a| a.select(Axis(0), site_map));
    let params = ParameterSet { row_effects: alpha, ..model.params.clone() };
    let mut out: [Option<Array2<f64>>; 3] = [None, None, None];
    for coef in &model.params.parts {
        out[coef.part.index()] = Some(linear_predictor(&params, covariates, scores.view(), coef.part)?);
    }
    Ok(out)
}

fn map_cells(
    model: &FittedModel,
    covariates: &CovariateMatrix,
    site_map: &[usize],
    f: impl Fn(&CellParams) -> Result<f64>,
) -> Result<Array2<f64>> {
    let etas = predict_linear(model, covariates, site_map)?;
    let mean = etas[0].as_ref().expect("mean part always present");
    let (n, m) = mean.dim();
    let mut out = Array2::zeros((n, m));
    let mut buf = Vec::new();
    for j in 0..m {
        model.params.thresholds.for_species(j, &mut buf);
        let phi = model.params.phi(j);
        for i in 0..n {
            let p = CellParams {
                eta: mean[(i, j)],
                eta0: etas[1].as_ref().map_or(0.0, |e| e[(i, j)]),
                eta1: etas[2].as_ref().map_or(0.0, |e| e[(i, j)]),
                phi,
                cutoffs: &buf,
            };
            out[(i, j)] = f(&p)?;
        }
    }
    Ok(out)
}

/// Expected cover for each new row and species.
pub fn predict_expected(model: &FittedModel, covariates: &CovariateMatrix, site_map: &[usize]) -> Result<Array2<f64>> {
    map_cells(model, covariates, site_map, |p| mean_response(model.spec.family, p, model.spec.hurdle_parts))
}

/// Probability of a nonzero response for each new row and species.
pub fn predict_presence(model: &FittedModel, covariates: &CovariateMatrix, site_map: &[usize]) -> Result<Array2<f64>> {
    map_cells(model, covariates, site_map, |p| presence_probability(model.spec.family, p))
}
