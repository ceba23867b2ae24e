use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::objective::{FitData, Problem};
use super::optim::{self, StopRule};
use crate::distributions::{logit_unchecked, shift_transform, Family, Part};
use crate::error::{GllvmError, Result};
use crate::exec::Execution;
use crate::model::{
    n_classes, validate, CutoffMode, Dims, LatentUnits, ModelSpec, ParameterSet, Thresholds, VariationalCov,
    VariationalState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceForm {
    #[default]
    Diagonal,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    #[default]
    QuasiNewton,
    FirstOrderAdaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub elbo_rel_tol: f64,
    pub grad_inf_tol: f64,
    pub n_restarts: usize,
    pub seed: u64,
    pub variational_cov: CovarianceForm,
    pub optimizer: OptimizerKind,
    pub execution: Execution,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 3000,
            elbo_rel_tol: 1e-8,
            grad_inf_tol: 1e-5,
            n_restarts: 3,
            seed: 0,
            variational_cov: CovarianceForm::Diagonal,
            optimizer: OptimizerKind::QuasiNewton,
            execution: Execution::Parallel,
        }
    }
}

impl FitOptions {
    pub fn check(&self) -> Result<()> {
        if !(self.elbo_rel_tol > 0.0 && self.grad_inf_tol > 0.0) {
            return Err(GllvmError::Parameter("tolerances must be positive".into()));
        }
        if self.n_restarts == 0 || self.max_iterations == 0 {
            return Err(GllvmError::Parameter("restarts and iterations must be at least 1".into()));
        }
        Ok(())
    }

    fn stop_rule(&self) -> StopRule {
        StopRule { max_iterations: self.max_iterations, rel_tol: self.elbo_rel_tol, grad_tol: self.grad_inf_tol }
    }
}

// JSON has no infinities: diverged restarts are written as null and read
// back as NaN.
fn nullable_f64<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    #[serde(deserialize_with = "nullable_f64")]
    pub elbo: f64,
    pub iterations: usize,
    #[serde(deserialize_with = "nullable_f64")]
    pub grad_inf_norm: f64,
    pub converged: bool,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub final_elbo: f64,
    pub iterations: usize,
    #[serde(deserialize_with = "nullable_f64")]
    pub grad_inf_norm: f64,
    pub best_restart: usize,
    pub converged: bool,
    pub restarts: Vec<RestartSummary>,
    pub warnings: Vec<String>,
}

/// Result of [`fit`]. The spec stored here is the effective one (for
/// instance with precision pooling switched on by validation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub dims: Dims,
    pub params: ParameterSet,
    pub vstate: VariationalState,
    pub diagnostics: FitDiagnostics,
    pub species_names: Vec<String>,
    pub covariate_names: Vec<String>,
    pub units: LatentUnits,
    /// Number of training rows, which fixes the shifted-beta N.
    pub n_train_rows: usize,
}

/// Deterministic starting values; `seed` draws the loadings.
fn initial_values(problem: &Problem, data: FitData, seed: u64) -> (ParameterSet, VariationalState) {
    let spec = &problem.spec;
    let y = data.responses;
    let m = y.n_species();
    let shift_n = super::objective::effective_shift_n(spec, y.n_sites());
    let mut params = problem.layout.template();
    let smooth = |count: usize, total: usize| (count as f64 + 0.5) / (total as f64 + 1.0);

    let mut lower = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut ordinal_rows: Vec<Vec<f64>> = Vec::new();
    let k = problem.layout.dims.n_cutoffs;
    for j in 0..m {
        let col: Vec<f64> = y.observed_column(j).collect();
        let n_obs = col.len();
        let interior: Vec<f64> = col.iter().copied().filter(|v| *v > 0.0 && *v < 1.0).collect();
        let interior_mean = if interior.is_empty() {
            0.5
        } else {
            interior.iter().sum::<f64>() / interior.len() as f64
        };
        let zeros = col.iter().filter(|v| **v == 0.0).count();
        let ones = col.iter().filter(|v| **v == 1.0).count();
        match spec.family {
            Family::BetaShifted => {
                let mean = col.iter().map(|v| shift_transform(*v, shift_n)).sum::<f64>() / n_obs.max(1) as f64;
                params.parts[0].intercepts[j] = logit_unchecked(mean.clamp(1e-3, 1.0 - 1e-3));
            }
            Family::HurdleBeta => {
                params.parts[0].intercepts[j] = logit_unchecked(interior_mean.clamp(1e-3, 1.0 - 1e-3));
                params.parts[1].intercepts[j] = logit_unchecked(smooth(zeros, n_obs));
                if params.parts.len() > 2 {
                    params.parts[2].intercepts[j] = logit_unchecked(smooth(ones, n_obs - zeros));
                }
            }
            Family::OrderedBeta => {
                let b0 = logit_unchecked(interior_mean.clamp(1e-3, 1.0 - 1e-3));
                params.parts[0].intercepts[j] = b0;
                lower[j] = b0 + logit_unchecked(smooth(zeros, n_obs));
                upper[j] = (b0 + logit_unchecked(1.0 - smooth(ones, n_obs))).max(lower[j] + 0.1);
            }
            Family::Bernoulli => {
                let present = col.iter().filter(|v| **v > 0.0).count();
                params.parts[0].intercepts[j] = logit_unchecked(smooth(present, n_obs));
            }
            Family::CumulativeLogit => {
                let mut cum = 0usize;
                let mut cuts = Vec::with_capacity(k);
                for c in 1..=k {
                    cum += col.iter().filter(|v| **v as usize == c).count();
                    cuts.push(logit_unchecked(smooth(cum, n_obs)));
                }
                for i in 1..cuts.len() {
                    if cuts[i] < cuts[i - 1] + 0.05 {
                        cuts[i] = cuts[i - 1] + 0.05;
                    }
                }
                if spec.cutoff_mode == CutoffMode::Common {
                    // Intercepts absorb the species shift; c_1 is pinned at 0.
                    params.parts[0].intercepts[j] = -cuts[0];
                }
                ordinal_rows.push(cuts);
            }
        }
    }
    match &mut params.thresholds {
        Thresholds::Ordered { lower: l, upper: u } => {
            if u.len() == 1 {
                u[0] = upper.iter().sum::<f64>() / m as f64;
                for j in 0..m {
                    lower[j] = lower[j].min(u[0] - 0.1);
                }
            } else {
                u.copy_from_slice(&upper);
            }
            l.copy_from_slice(&lower);
        }
        Thresholds::Ordinal(rows) => {
            if rows.len() == 1 {
                // Common cutoffs: pooled spacing, shifted so c_1 = 0.
                let mut pooled = vec![0.0; k];
                for r in &ordinal_rows {
                    for (p, c) in pooled.iter_mut().zip(r) {
                        *p += (c - r[0]) / m as f64;
                    }
                }
                rows[0] = pooled;
            } else {
                rows.clone_from(&ordinal_rows);
            }
        }
        Thresholds::None => {}
    }
    for v in params.log_precisions.iter_mut() {
        *v = 0.0;
    }

    let d = spec.latent_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.1).expect("valid sd");
    for (kp, coef) in params.parts.iter_mut().enumerate() {
        for j in 0..m {
            for l in 0..d {
                let draw = normal.sample(&mut rng);
                coef.loadings[(j, l)] = if kp > 0 || l < j {
                    draw
                } else if l == j {
                    draw.abs().max(1e-3)
                } else {
                    0.0
                };
            }
        }
    }
    let vstate = VariationalState::prior(problem.n_units(), d, problem.is_full());
    (params, vstate)
}

fn run_optimizer(problem: &Problem, x0: Vec<f64>, opts: &FitOptions) -> optim::Outcome {
    let objective = |x: &[f64], g: &mut [f64]| {
        let (v, grad) = problem.value_and_gradient(x);
        for (gi, v) in g.iter_mut().zip(grad) {
            *gi = -v;
        }
        -v
    };
    match opts.optimizer {
        OptimizerKind::QuasiNewton => optim::lbfgs(objective, x0, opts.stop_rule(), 10),
        OptimizerKind::FirstOrderAdaptive => optim::adam(objective, x0, opts.stop_rule(), 0.01),
    }
}

/// Spec with the adjustments validation asks for, plus the warnings.
pub fn effective_spec(data: FitData, spec: &ModelSpec) -> Result<(ModelSpec, Vec<String>)> {
    let report = validate(data.responses, spec);
    if report.is_fatal() {
        return Err(GllvmError::Validation(report.summary()));
    }
    let mut spec = spec.clone();
    if report.requires_pooled_precision() && spec.family.has_precision() {
        spec.pooled_precision = true;
    }
    if spec.family == Family::CumulativeLogit && n_classes(data.responses, &spec) < 2 {
        return Err(GllvmError::Validation("ordinal responses need at least two classes".into()));
    }
    Ok((spec, report.warnings().map(|f| f.message.clone()).collect()))
}

/// Maximize the variational objective jointly over model and variational
/// parameters, keeping the best of `n_restarts` runs.
pub fn fit(data: FitData, spec: &ModelSpec, opts: &FitOptions) -> Result<FittedModel> {
    opts.check()?;
    let (spec, warnings) = effective_spec(data, spec)?;
    let full = opts.variational_cov == CovarianceForm::Full && spec.latent_dim > 0;
    let problem = Problem::new(data, &spec, full, opts.execution)?;

    let outcomes = opts.execution.map_indexed(opts.n_restarts, |r| {
        let (p0, v0) = initial_values(&problem, data, opts.seed.wrapping_add(r as u64));
        let x0 = problem.pack(&p0, &v0).expect("initial values satisfy the layout");
        run_optimizer(&problem, x0, opts)
    });
    let restarts: Vec<RestartSummary> = outcomes
        .iter()
        .map(|o| RestartSummary {
            elbo: -o.value,
            iterations: o.iterations,
            grad_inf_norm: o.grad_inf,
            converged: o.status.converged(),
            status: format!("{:?}", o.status),
        })
        .collect();
    let best = outcomes
        .iter()
        .enumerate()
        .filter(|(_, o)| o.value.is_finite())
        .min_by(|(ia, a), (ib, b)| a.value.total_cmp(&b.value).then(ia.cmp(ib)))
        .map(|(i, _)| i);
    let Some(best) = best else {
        let detail = restarts.iter().map(|r| r.status.clone()).collect::<Vec<_>>().join(", ");
        return Err(GllvmError::FitFailure(format!("every restart diverged: {detail}")));
    };
    let outcome = &outcomes[best];
    let (params, vstate) = problem.unpack(&outcome.x)?;
    // Re-evaluate at the decoded parameters so the report matches `elbo`.
    let final_elbo = super::objective::elbo(&params, &vstate, data, &spec)?;
    let mut warnings = warnings;
    if !outcome.status.converged() {
        warnings.push(format!("best restart stopped without converging ({:?})", outcome.status));
    }
    Ok(FittedModel {
        dims: problem.layout.dims,
        spec,
        params,
        vstate,
        diagnostics: FitDiagnostics {
            final_elbo,
            iterations: outcome.iterations,
            grad_inf_norm: outcome.grad_inf,
            best_restart: best,
            converged: outcome.status.converged(),
            restarts,
            warnings,
        },
        species_names: data.responses.species_names().to_vec(),
        covariate_names: data.covariates.names().to_vec(),
        units: data.units.clone(),
        n_train_rows: data.responses.n_sites(),
    })
}

/// Optimize only the variational parameters with the model held fixed.
/// Returns the state and the objective value.
pub fn fit_variational(
    params: &ParameterSet,
    data: FitData,
    spec: &ModelSpec,
    opts: &FitOptions,
) -> Result<(VariationalState, f64)> {
    opts.check()?;
    let full = opts.variational_cov == CovarianceForm::Full && spec.latent_dim > 0;
    let problem = Problem::new(data, spec, full, opts.execution)?;
    let model = problem.layout.pack(params)?;
    let k = model.len();
    let v0 = VariationalState::prior(problem.n_units(), spec.latent_dim, full);
    let x0 = problem.pack_variational(&v0)?;
    let mut theta = model.clone();
    theta.extend(&x0);
    let objective = |x: &[f64], g: &mut [f64]| {
        let mut t = model.clone();
        t.extend_from_slice(x);
        let (v, grad) = problem.value_and_gradient(&t);
        for (gi, v) in g.iter_mut().zip(&grad[k..]) {
            *gi = -v;
        }
        -v
    };
    let out = match opts.optimizer {
        OptimizerKind::QuasiNewton => optim::lbfgs(objective, x0, opts.stop_rule(), 10),
        OptimizerKind::FirstOrderAdaptive => optim::adam(objective, x0, opts.stop_rule(), 0.01),
    };
    if !out.value.is_finite() {
        return Err(GllvmError::FitFailure(format!("variational optimization failed: {:?}", out.status)));
    }
    let vstate = problem.unpack_variational(&out.x);
    let value = super::objective::elbo(params, &vstate, data, spec)?;
    Ok((vstate, value))
}

impl FittedModel {
    /// Latent scores as an n_units × d matrix (variational means).
    pub fn scores(&self) -> &Array2<f64> {
        &self.vstate.means
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn mean_loadings(&self) -> &Array2<f64> {
        &self.params.coefficients(Part::Mean).expect("mean part always present").loadings
    }

    pub fn is_full_covariance(&self) -> bool {
        matches!(self.vstate.cov, VariationalCov::Full(_))
    }
}
