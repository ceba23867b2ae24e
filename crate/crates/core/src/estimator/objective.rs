//! Extended variational objective and its analytic gradient.
//!
//! For a Gaussian variational density q(u_i) = N(a_i, A_i) every log-density
//! branch is expanded to second order around the predictor evaluated at
//! a_i:
//!
//! ```text
//! ELBO = Σ_ij Σ_t [ ℓ_t(y_ij; η̃_t) + ½ γ_tᵀ A_i γ_t · ℓ_t''(η̃_t) ] − Σ_i KL(q_i ‖ N(0, I))
//! ```
//!
//! Each branch term depends on a single predictor part, so no cross-part
//! covariance terms appear. The gradient needs ℓ''' (through η̃ in the
//! curvature term) and the derivative of ℓ'' with respect to the auxiliary
//! parameters; both are supplied by the distribution kernels.

use ndarray::Array2;

use crate::distributions::{log_density_unchecked, shift_transform, CellParams, Family, HurdleParts, Part};
use crate::error::{GllvmError, Result};
use crate::exec::{tree_reduce, Execution, Merge};
use crate::model::{
    n_classes, CovariateMatrix, CutoffMode, Dims, LatentUnits, ModelSpec, ParameterLayout, ParameterSet,
    ResponseKind, ResponseMatrix, Thresholds, VariationalCov, VariationalState,
};

/// Units per parallel task. Fixed so the reduction tree never depends on
/// the thread count.
const UNITS_PER_TASK: usize = 4;

/// Borrowed inputs of a fit.
#[derive(Debug, Clone, Copy)]
pub struct FitData<'a> {
    pub responses: &'a ResponseMatrix,
    pub covariates: &'a CovariateMatrix,
    pub units: &'a LatentUnits,
}

/// Dimensions and data preprocessed once per fit.
#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub spec: ModelSpec,
    pub layout: ParameterLayout,
    family: Family,
    hurdle: HurdleParts,
    m: usize,
    q: usize,
    d: usize,
    n_units: usize,
    full_cov: bool,
    /// Row-major n_rows × m responses on the family's working scale.
    targets: Vec<f64>,
    observed: Vec<bool>,
    x: Array2<f64>,
    rows_by_unit: Vec<Vec<usize>>,
    pub exec: Execution,
}

/// Shifted-beta N when the spec leaves it open.
pub(crate) fn effective_shift_n(spec: &ModelSpec, n_rows: usize) -> u32 {
    spec.shift_n.unwrap_or(n_rows.max(2) as u32)
}

impl Problem {
    pub fn new(data: FitData, spec: &ModelSpec, full_cov: bool, exec: Execution) -> Result<Self> {
        let y = data.responses;
        let (n, m) = (y.n_sites(), y.n_species());
        if data.covariates.n_rows() != n || data.units.n_rows() != n {
            return Err(GllvmError::Dimension(format!(
                "{n} response rows, {} covariate rows, {} unit assignments",
                data.covariates.n_rows(),
                data.units.n_rows()
            )));
        }
        let k = if spec.family == Family::CumulativeLogit { n_classes(y, spec).saturating_sub(1) } else { 0 };
        let dims = Dims { n_rows: data.units.n_units(), n_species: m, n_covariates: data.covariates.n_covariates(), n_cutoffs: k };
        let layout = ParameterLayout::new(spec, dims)?;
        let shift_n = effective_shift_n(spec, n);
        let mut targets = Vec::with_capacity(n * m);
        let mut observed = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                let v = y.get(i, j);
                observed.push(v.is_some());
                let v = v.unwrap_or(0.0);
                targets.push(match spec.family {
                    Family::BetaShifted => shift_transform(v, shift_n),
                    _ => v,
                });
            }
        }
        if (spec.family == Family::CumulativeLogit) != (y.kind() == ResponseKind::Ordinal) {
            return Err(GllvmError::Validation(format!("family {} does not match {:?} data", spec.family, y.kind())));
        }
        Ok(Problem {
            spec: spec.clone(),
            layout,
            family: spec.family,
            hurdle: spec.hurdle_parts,
            m,
            q: data.covariates.n_covariates(),
            d: spec.latent_dim,
            n_units: data.units.n_units(),
            full_cov,
            targets,
            observed,
            x: data.covariates.values().clone(),
            rows_by_unit: data.units.rows_by_unit(),
            exec,
        })
    }

    pub fn n_model(&self) -> usize {
        self.layout.n_free()
    }

    pub fn per_unit(&self) -> usize {
        let d = self.d;
        d + if self.full_cov { d * (d + 1) / 2 } else { d }
    }

    pub fn n_free(&self) -> usize {
        self.n_model() + self.n_units * self.per_unit()
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn is_full(&self) -> bool {
        self.full_cov
    }

    /// Free-vector encoding of a variational state.
    pub fn pack_variational(&self, v: &VariationalState) -> Result<Vec<f64>> {
        if v.n_units() != self.n_units || v.dim() != self.d {
            return Err(GllvmError::Dimension("variational state does not match the data".into()));
        }
        v.validate()?;
        let mut out = Vec::with_capacity(self.n_units * self.per_unit());
        for i in 0..self.n_units {
            out.extend(v.means.row(i).iter());
            match (&v.cov, self.full_cov) {
                (VariationalCov::Diagonal(var), false) => out.extend(var.row(i).iter().map(|s| 0.5 * s.ln())),
                (VariationalCov::Full(ls), true) => {
                    for r in 0..self.d {
                        for c in 0..=r {
                            let v = ls[i][(r, c)];
                            out.push(if r == c { v.ln() } else { v });
                        }
                    }
                }
                _ => return Err(GllvmError::Dimension("covariance form differs from the fit options".into())),
            }
        }
        Ok(out)
    }

    pub fn unpack_variational(&self, free: &[f64]) -> VariationalState {
        let d = self.d;
        let mut means = Array2::zeros((self.n_units, d));
        let mut diag = Array2::zeros((self.n_units, d));
        let mut full = Vec::new();
        for i in 0..self.n_units {
            let block = &free[i * self.per_unit()..(i + 1) * self.per_unit()];
            for k in 0..d {
                means[(i, k)] = block[k];
            }
            if self.full_cov {
                full.push(lower_factor(&block[d..], d));
            } else {
                for k in 0..d {
                    diag[(i, k)] = (2.0 * block[d + k]).exp();
                }
            }
        }
        let cov = if self.full_cov { VariationalCov::Full(full) } else { VariationalCov::Diagonal(diag) };
        VariationalState { means, cov }
    }

    pub fn pack(&self, params: &ParameterSet, v: &VariationalState) -> Result<Vec<f64>> {
        let mut theta = self.layout.pack(params)?;
        theta.extend(self.pack_variational(v)?);
        Ok(theta)
    }

    pub fn unpack(&self, theta: &[f64]) -> Result<(ParameterSet, VariationalState)> {
        let (model, var) = theta.split_at(self.n_model());
        Ok((self.layout.unpack(model)?, self.unpack_variational(var)))
    }

    /// Objective value only.
    pub fn value(&self, theta: &[f64]) -> f64 {
        self.evaluate(theta, false).0
    }

    /// Objective value and its gradient with respect to the free vector.
    pub fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (v, g) = self.evaluate(theta, true);
        (v, g.expect("gradient requested"))
    }

    fn evaluate(&self, theta: &[f64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
        let Ok(params) = self.layout.unpack(&theta[..self.n_model()]) else {
            return (f64::NAN, want_grad.then(|| vec![f64::NAN; theta.len()]));
        };
        let (value, grad) = self.evaluate_natural(&params, &theta[self.n_model()..], want_grad);
        let grad = grad.map(|(nat, units)| {
            let mut g = self.layout.pull_back(&params, &nat);
            g.extend(units);
            g
        });
        (value, grad)
    }

    /// Objective at natural model parameters and an encoded variational
    /// block; the gradient is returned on the natural model scale.
    fn evaluate_natural(
        &self,
        params: &ParameterSet,
        var_free: &[f64],
        want_grad: bool,
    ) -> (f64, Option<(ParameterSet, Vec<f64>)>) {
        let ctx = CellContext::new(self, params);
        let n_tasks = self.n_units.div_ceil(UNITS_PER_TASK).max(1);
        let partials = self.exec.map_indexed(n_tasks, |t| {
            let start = t * UNITS_PER_TASK;
            let end = ((t + 1) * UNITS_PER_TASK).min(self.n_units);
            let mut acc = Partial::new(params, want_grad);
            for unit in start..end {
                let block = &var_free[unit * self.per_unit()..(unit + 1) * self.per_unit()];
                self.unit_contribution(unit, block, params, &ctx, &mut acc);
            }
            acc
        });
        let total = tree_reduce(partials).expect("at least one task");
        let grad = total.grad.map(|g| (g, total.unit_grads));
        (total.value, grad)
    }

    fn unit_contribution(
        &self,
        unit: usize,
        block: &[f64],
        params: &ParameterSet,
        ctx: &CellContext,
        acc: &mut Partial,
    ) {
        let d = self.d;
        let a = &block[..d];
        // Covariance A (d × d) and, for the full form, its factor.
        let mut cov = vec![0.0; d * d];
        let mut factor = vec![0.0; d * d];
        if self.full_cov {
            let l = lower_factor(&block[d..], d);
            for r in 0..d {
                for c in 0..d {
                    factor[r * d + c] = l[(r, c)];
                }
            }
            for r in 0..d {
                for c in 0..d {
                    cov[r * d + c] = (0..d).map(|k| factor[r * d + k] * factor[c * d + k]).sum();
                }
            }
        } else {
            for k in 0..d {
                cov[k * d + k] = (2.0 * block[d + k]).exp();
            }
        }

        let mut value = 0.0;
        let mut grad_a = vec![0.0; d];
        // G = ∂ELBO/∂A as a symmetric matrix.
        let mut g_cov = vec![0.0; d * d];
        let parts = self.spec.parts();
        let mut a_gamma = [[0.0f64; 8]; 3];
        let mut eta = [0.0f64; 3];
        let mut var = [0.0f64; 3];
        let want_grad = acc.grad.is_some();

        for &row in &self.rows_by_unit[unit] {
            let alpha = params.row_effects.as_ref().map_or(0.0, |r| r[unit]);
            let xrow = self.x.row(row);
            for j in 0..self.m {
                let cell = row * self.m + j;
                if !self.observed[cell] {
                    continue;
                }
                for (k, part) in parts.iter().enumerate() {
                    let c = &params.parts[k];
                    let mut e = c.intercepts[j];
                    for l in 0..self.q {
                        e += xrow[l] * c.slopes[(j, l)];
                    }
                    for l in 0..d {
                        e += a[l] * c.loadings[(j, l)];
                    }
                    if *part == Part::Mean {
                        e += alpha;
                    }
                    eta[part.index()] = e;
                    // Aγ and γᵀAγ
                    let mut v = 0.0;
                    for r in 0..d {
                        let mut s = 0.0;
                        for l in 0..d {
                            s += cov[r * d + l] * c.loadings[(j, l)];
                        }
                        a_gamma[k][r] = s;
                        v += c.loadings[(j, r)] * s;
                    }
                    var[part.index()] = v;
                }
                let cp = CellParams {
                    eta: eta[0],
                    eta0: eta[1],
                    eta1: eta[2],
                    phi: ctx.phi[j],
                    cutoffs: &ctx.cutoffs[j],
                };
                let b = log_density_unchecked(self.family, self.targets[cell], &cp, self.hurdle);
                value += b.value;
                for part in parts {
                    value += 0.5 * var[part.index()] * b.d2[part.index()];
                }
                if !want_grad {
                    continue;
                }
                let grad = acc.grad.as_mut().expect("checked");
                for (k, part) in parts.iter().enumerate() {
                    let pi = part.index();
                    let eff = b.d1[pi] + 0.5 * var[pi] * b.d3[pi];
                    let curv = b.d2[pi];
                    let c = &params.parts[k];
                    let gc = &mut grad.parts[k];
                    gc.intercepts[j] += eff;
                    for l in 0..self.q {
                        gc.slopes[(j, l)] += eff * xrow[l];
                    }
                    for l in 0..d {
                        gc.loadings[(j, l)] += eff * a[l] + curv * a_gamma[k][l];
                        grad_a[l] += eff * c.loadings[(j, l)];
                    }
                    for r in 0..d {
                        for l in 0..d {
                            g_cov[r * d + l] += 0.5 * curv * c.loadings[(j, r)] * c.loadings[(j, l)];
                        }
                    }
                    if *part == Part::Mean {
                        if let Some(ga) = grad.row_effects.as_mut() {
                            ga[unit] += eff;
                        }
                    }
                }
                let v_mean = var[Part::Mean.index()];
                for (s, (&da, &d2a)) in b.d_aux.iter().zip(b.d2_aux.iter()).enumerate() {
                    let g = da + 0.5 * v_mean * d2a;
                    if g != 0.0 {
                        ctx.scatter_aux(grad, j, s, g);
                    }
                }
            }
        }

        // KL(N(a, A) ‖ N(0, I))
        let trace: f64 = (0..d).map(|k| cov[k * d + k]).sum();
        let a2: f64 = a.iter().map(|v| v * v).sum();
        let logdet: f64 = if self.full_cov {
            (0..d).map(|k| 2.0 * factor[k * d + k].ln()).sum()
        } else {
            (0..d).map(|k| 2.0 * block[d + k]).sum()
        };
        value -= 0.5 * (trace + a2 - d as f64 - logdet);
        acc.value += value;

        if !want_grad {
            return;
        }
        for k in 0..d {
            grad_a[k] -= a[k];
            g_cov[k * d + k] -= 0.5;
        }
        let out = &mut acc.unit_grads;
        out.extend(grad_a);
        if self.full_cov {
            // ∂/∂L = 2 G L, plus ∂(½ log det A)/∂L_kk = 1/L_kk; diagonal is log-encoded.
            for r in 0..d {
                for c in 0..=r {
                    let mut g: f64 = (0..d).map(|l| 2.0 * g_cov[r * d + l] * factor[l * d + c]).sum();
                    if r == c {
                        let lrr = factor[r * d + r];
                        g = g * lrr + 1.0;
                    }
                    out.push(g);
                }
            }
        } else {
            for k in 0..d {
                out.push(g_cov[k * d + k] * 2.0 * cov[k * d + k] + 1.0);
            }
        }
    }
}

fn lower_factor(raw: &[f64], d: usize) -> Array2<f64> {
    let mut l = Array2::zeros((d, d));
    let mut idx = 0;
    for r in 0..d {
        for c in 0..=r {
            l[(r, c)] = if r == c { raw[idx].exp() } else { raw[idx] };
            idx += 1;
        }
    }
    l
}

/// Per-species quantities shared by all cells in one evaluation.
struct CellContext {
    phi: Vec<f64>,
    cutoffs: Vec<Vec<f64>>,
    family: Family,
    common_upper: bool,
    common_ordinal: bool,
}

impl CellContext {
    fn new(problem: &Problem, params: &ParameterSet) -> Self {
        let m = problem.m;
        let phi = (0..m).map(|j| params.phi(j)).collect();
        let mut buf = Vec::new();
        let cutoffs = (0..m)
            .map(|j| {
                params.thresholds.for_species(j, &mut buf);
                buf.clone()
            })
            .collect();
        let common = problem.spec.cutoff_mode == CutoffMode::Common;
        CellContext {
            phi,
            cutoffs,
            family: problem.family,
            common_upper: common && problem.family == Family::OrderedBeta,
            common_ordinal: common && problem.family == Family::CumulativeLogit,
        }
    }

    /// Route an auxiliary-slot derivative of species `j` to its parameter.
    fn scatter_aux(&self, grad: &mut ParameterSet, j: usize, slot: usize, g: f64) {
        let pooled = grad.log_precisions.len() == 1;
        let phi_index = if pooled { 0 } else { j };
        match self.family {
            Family::BetaShifted | Family::HurdleBeta => grad.log_precisions[phi_index] += g,
            Family::OrderedBeta => match slot {
                0 => grad.log_precisions[phi_index] += g,
                1 => {
                    if let Thresholds::Ordered { lower, .. } = &mut grad.thresholds {
                        lower[j] += g;
                    }
                }
                _ => {
                    if let Thresholds::Ordered { upper, .. } = &mut grad.thresholds {
                        upper[if self.common_upper { 0 } else { j }] += g;
                    }
                }
            },
            Family::CumulativeLogit => {
                if let Thresholds::Ordinal(rows) = &mut grad.thresholds {
                    rows[if self.common_ordinal { 0 } else { j }][slot] += g;
                }
            }
            Family::Bernoulli => {}
        }
    }
}

/// Partial sums produced by one task.
struct Partial {
    value: f64,
    grad: Option<ParameterSet>,
    /// Free-vector gradient of the variational block, in unit order.
    unit_grads: Vec<f64>,
}

impl Partial {
    fn new(params: &ParameterSet, want_grad: bool) -> Self {
        Partial { value: 0.0, grad: want_grad.then(|| params.zeros_like()), unit_grads: Vec::new() }
    }
}

impl Merge for Partial {
    fn merge(&mut self, other: Self) {
        self.value += other.value;
        if let (Some(a), Some(b)) = (self.grad.as_mut(), other.grad) {
            add_assign(a, &b);
        }
        self.unit_grads.extend(other.unit_grads);
    }
}

fn add_assign(a: &mut ParameterSet, b: &ParameterSet) {
    for (x, y) in a.parts.iter_mut().zip(&b.parts) {
        x.intercepts += &y.intercepts;
        x.slopes += &y.slopes;
        x.loadings += &y.loadings;
    }
    for (x, y) in a.log_precisions.iter_mut().zip(&b.log_precisions) {
        *x += y;
    }
    match (&mut a.thresholds, &b.thresholds) {
        (Thresholds::Ordinal(x), Thresholds::Ordinal(y)) => {
            for (rx, ry) in x.iter_mut().zip(y) {
                for (u, v) in rx.iter_mut().zip(ry) {
                    *u += v;
                }
            }
        }
        (Thresholds::Ordered { lower, upper }, Thresholds::Ordered { lower: l2, upper: u2 }) => {
            for (u, v) in lower.iter_mut().zip(l2) {
                *u += v;
            }
            for (u, v) in upper.iter_mut().zip(u2) {
                *u += v;
            }
        }
        _ => {}
    }
    if let (Some(x), Some(y)) = (a.row_effects.as_mut(), b.row_effects.as_ref()) {
        *x += y;
    }
}

/// Variational objective at the given model and variational parameters.
pub fn elbo(
    params: &ParameterSet,
    vstate: &VariationalState,
    data: FitData,
    spec: &ModelSpec,
) -> Result<f64> {
    let full = matches!(vstate.cov, VariationalCov::Full(_));
    let problem = Problem::new(data, spec, full, Execution::Sequential)?;
    problem.layout.check_shape(params)?;
    let var = problem.pack_variational(vstate)?;
    let v = problem.evaluate_natural(params, &var, false).0;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(GllvmError::FitFailure("objective is not finite".into()))
    }
}

/// Gradient of [`elbo`] with respect to the free vector: the model block in
/// [`ParameterLayout`] order followed by, for each latent unit, the means
/// and the encoded covariance (log standard deviations, or the lower factor
/// row by row with a log diagonal).
pub fn elbo_gradient(
    params: &ParameterSet,
    vstate: &VariationalState,
    data: FitData,
    spec: &ModelSpec,
) -> Result<Vec<f64>> {
    let full = matches!(vstate.cov, VariationalCov::Full(_));
    let problem = Problem::new(data, spec, full, Execution::Sequential)?;
    let theta = problem.pack(params, vstate)?;
    Ok(problem.value_and_gradient(&theta).1)
}

/// Free-vector encoding used by [`elbo_gradient`], for finite-difference checks.
pub fn encode(
    params: &ParameterSet,
    vstate: &VariationalState,
    data: FitData,
    spec: &ModelSpec,
) -> Result<Vec<f64>> {
    let full = matches!(vstate.cov, VariationalCov::Full(_));
    Problem::new(data, spec, full, Execution::Sequential)?.pack(params, vstate)
}

/// Objective at a free vector (inverse of [`encode`]).
pub fn elbo_at(theta: &[f64], data: FitData, spec: &ModelSpec, full_cov: bool) -> Result<f64> {
    let problem = Problem::new(data, spec, full_cov, Execution::Sequential)?;
    if theta.len() != problem.n_free() {
        return Err(GllvmError::Dimension("free vector length".into()));
    }
    Ok(problem.value(theta))
}
