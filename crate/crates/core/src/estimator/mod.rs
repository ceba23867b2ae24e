//! Extended variational approximation: objective, gradient, fitting,
//! prediction, and a quadrature oracle.

mod fit;
mod objective;
pub mod optim;
mod predict;
mod quadrature;

pub use fit::{
    effective_spec, fit, fit_variational, CovarianceForm, FitDiagnostics, FitOptions, FittedModel, OptimizerKind,
    RestartSummary,
};
pub use objective::{elbo, elbo_at, elbo_gradient, encode, FitData};
pub use predict::{predict_expected, predict_linear, predict_presence, training_site_map};
pub use quadrature::{gauss_hermite, marginal_loglik_quadrature};
