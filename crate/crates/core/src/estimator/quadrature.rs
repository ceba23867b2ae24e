//! Adaptive Gauss–Hermite marginal likelihood, used as an oracle for the
//! variational objective on small problems.

use nalgebra::{DMatrix, DVector};

use super::objective::{effective_shift_n, FitData};
use crate::distributions::{log_density, shift_transform, CellParams, Family};
use crate::error::{GllvmError, Result};
use crate::model::{ModelSpec, ParameterSet};

/// Nodes and weights for ∫ e^{-x²} f(x) dx, by Newton iteration on the
/// orthonormal Hermite recurrence. Nodes are returned in decreasing order.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = (j + 1) as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Σ_units log ∫ Π f(y | u) φ_d(u) du with `n_nodes` adaptive Gauss–Hermite
/// nodes per dimension (tensor product, d ≤ 2).
pub fn marginal_loglik_quadrature(
    params: &ParameterSet,
    data: FitData,
    spec: &ModelSpec,
    n_nodes: usize,
) -> Result<f64> {
    let d = spec.latent_dim;
    if d > 2 {
        return Err(GllvmError::Unsupported("quadrature is limited to d ≤ 2".into()));
    }
    if n_nodes == 0 {
        return Err(GllvmError::Parameter("at least one node is required".into()));
    }
    let y = data.responses;
    let (n, m) = (y.n_sites(), y.n_species());
    let q = data.covariates.n_covariates();
    let shift_n = effective_shift_n(spec, n);
    let parts = spec.parts();
    for c in &params.parts {
        if c.loadings.ncols() != d || c.intercepts.len() != m || c.slopes.ncols() != q {
            return Err(GllvmError::Dimension("parameters do not match the data".into()));
        }
    }
    let mut cutoffs: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut buf = Vec::new();
    for j in 0..m {
        params.thresholds.for_species(j, &mut buf);
        cutoffs.push(buf.clone());
    }
    let x = data.covariates.values();

    // Conditional log-likelihood of one unit at u, with gradient and Hessian.
    let unit_terms = |rows: &[usize], unit: usize, u: &[f64], want: bool| -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let mut value = 0.0;
        let mut g = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        let alpha = params.row_effects.as_ref().map_or(0.0, |a| a[unit]);
        for &i in rows {
            for j in 0..m {
                let Some(obs) = y.get(i, j) else { continue };
                let mut eta = [0.0; 3];
                for (k, part) in parts.iter().enumerate() {
                    let c = &params.parts[k];
                    let mut e = c.intercepts[j];
                    for l in 0..q {
                        e += x[(i, l)] * c.slopes[(j, l)];
                    }
                    for l in 0..d {
                        e += u[l] * c.loadings[(j, l)];
                    }
                    if k == 0 {
                        e += alpha;
                    }
                    eta[part.index()] = e;
                }
                let target = if spec.family == Family::BetaShifted { shift_transform(obs, shift_n) } else { obs };
                let cp = CellParams { eta: eta[0], eta0: eta[1], eta1: eta[2], phi: params.phi(j), cutoffs: &cutoffs[j] };
                let b = log_density(spec.family, target, &cp, spec.hurdle_parts)?;
                value += b.value;
                if want {
                    for (k, part) in parts.iter().enumerate() {
                        let gamma = params.parts[k].loadings.row(j);
                        for r in 0..d {
                            g[r] += b.d1[part.index()] * gamma[r];
                            for s in 0..d {
                                h[(r, s)] += b.d2[part.index()] * gamma[r] * gamma[s];
                            }
                        }
                    }
                }
            }
        }
        Ok((value, g, h))
    };

    if d == 0 {
        let mut total = 0.0;
        for (unit, rows) in data.units.rows_by_unit().iter().enumerate() {
            total += unit_terms(rows, unit, &[], false)?.0;
        }
        return Ok(total);
    }

    let (nodes, weights) = gauss_hermite(n_nodes);
    let log_prior = |u: &[f64]| -> f64 {
        -0.5 * u.iter().map(|v| v * v).sum::<f64>() - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln()
    };
    let mut total = 0.0;
    for (unit, rows) in data.units.rows_by_unit().iter().enumerate() {
        // Mode of the integrand by damped Newton.
        let mut u = vec![0.0; d];
        let objective = |u: &[f64]| -> Result<f64> { Ok(unit_terms(rows, unit, u, false)?.0 + log_prior(u)) };
        let mut current = objective(&u)?;
        for _ in 0..100 {
            let (_, mut g, mut h) = unit_terms(rows, unit, &u, true)?;
            for r in 0..d {
                g[r] -= u[r];
                h[(r, r)] -= 1.0;
            }
            let neg = -h.clone();
            let step = match neg.clone().cholesky() {
                Some(ch) => ch.solve(&g),
                None => g.clone(),
            };
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-10 {
                let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
                let v = objective(&trial)?;
                if v >= current {
                    moved = (v - current).abs() > 0.0;
                    u = trial;
                    current = v;
                    break;
                }
                t *= 0.5;
            }
            if !moved || g.amax() < 1e-12 {
                break;
            }
        }
        let (_, _, mut h) = unit_terms(rows, unit, &u, true)?;
        for r in 0..d {
            h[(r, r)] -= 1.0;
        }
        let neg = -h;
        let cov = neg
            .clone()
            .try_inverse()
            .filter(|c| c.clone().cholesky().is_some())
            .unwrap_or_else(|| DMatrix::identity(d, d));
        let l = cov.clone().cholesky().expect("positive definite").l();
        let log_det_l: f64 = (0..d).map(|k| l[(k, k)].ln()).sum();
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut terms = Vec::with_capacity(n_nodes.pow(d as u32));
        let mut idx = vec![0usize; d];
        loop {
            let z = DVector::from_iterator(d, idx.iter().map(|&k| nodes[k]));
            let point = &l * &z * sqrt2;
            let uu: Vec<f64> = (0..d).map(|r| u[r] + point[r]).collect();
            let lw: f64 = idx.iter().map(|&k| weights[k].ln() + nodes[k] * nodes[k]).sum();
            terms.push(lw + objective(&uu)?);
            // advance the multi-index
            let mut pos = 0;
            while pos < d {
                idx[pos] += 1;
                if idx[pos] < n_nodes {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == d {
                break;
            }
        }
        total += log_sum_exp(&terms) + log_det_l + 0.5 * d as f64 * 2f64.ln();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_rule_integrates_moments() {
        let (x, w) = gauss_hermite(20);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let m0: f64 = w.iter().sum();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m0 - sqrt_pi).abs() < 1e-13);
        assert!((m2 - sqrt_pi / 2.0).abs() < 1e-13);
        assert!((m4 - 0.75 * sqrt_pi).abs() < 1e-12);
    }

    #[test]
    fn hermite_rule_large_n() {
        let (x, w) = gauss_hermite(100);
        let m0: f64 = w.iter().sum();
        assert!((m0 - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert!(x.windows(2).all(|p| p[0] > p[1]));
    }
}
