//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use covergllvm::distributions::{log_density, CellParams, DerivativeBundle, Family, HurdleParts, Part};
use covergllvm::estimator::{elbo_at, elbo_gradient, encode, FitData};
use covergllvm::model::{
    n_classes, CutoffMode, CovariateMatrix, Dims, LatentUnits, ModelSpec, ParameterLayout, ParameterSet, ResponseKind,
    ResponseMatrix, VariationalCov, VariationalState,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central difference of a scalar function.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// |a − b| within `rel` of the larger magnitude (floored at 1e-3).
pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    let scale = a.abs().max(b.abs()).max(1e-3);
    (a - b).abs() <= rel * scale
}

/// Adaptive Simpson quadrature on [a, b].
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 50)
}

pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Random valid cell parameters for a family (predictors in [-2, 2],
/// precision in [1, 30], cutoffs at least 0.2 apart).
pub fn random_cell<R: Rng>(family: Family, rng: &mut R, cut_buf: &mut Vec<f64>) -> (f64, f64, f64, f64) {
    let eta = rng.random_range(-2.0..2.0);
    let eta0 = rng.random_range(-2.0..2.0);
    let eta1 = rng.random_range(-2.0..2.0);
    let phi = rng.random_range(1.0..30.0);
    cut_buf.clear();
    match family {
        Family::OrderedBeta => {
            let z0 = rng.random_range(-2.0..1.0);
            cut_buf.push(z0);
            cut_buf.push(z0 + rng.random_range(0.2..3.0));
        }
        Family::CumulativeLogit => {
            let mut c = rng.random_range(-3.0..0.0);
            for _ in 0..4 {
                cut_buf.push(c);
                c += rng.random_range(0.2..1.5);
            }
        }
        _ => {}
    }
    (eta, eta0, eta1, phi)
}

/// Total probability: boundary masses plus the interior integral computed
/// by adaptive Simpson in logit space (y = σ(t)).
pub fn total_mass(family: Family, p: &CellParams, parts: HurdleParts) -> f64 {
    let dens = |y: f64| log_density(family, y, p, parts).unwrap().value.exp();
    let interior = |t: f64| {
        let y = sigmoid(t);
        if y <= 0.0 || y >= 1.0 {
            return 0.0;
        }
        dens(y) * y * (1.0 - y)
    };
    // y = σ(t) loses 1 − y to rounding as t grows, so beyond |t| = 20 the
    // density is extrapolated as c·z^s in the distance z to the boundary,
    // with s read off two nearby points: tail mass f(y_e)·z_e/(s + 1).
    let tail = |t_end: f64, t_near: f64| {
        let point = |t: f64| {
            let y = sigmoid(t);
            let z = if t < 0.0 { y } else { 1.0 - y };
            (z, dens(y))
        };
        let (z_e, f_e) = point(t_end);
        let (z_n, f_n) = point(t_near);
        if f_e == 0.0 {
            return 0.0;
        }
        let s = (f_e.ln() - f_n.ln()) / (z_e.ln() - z_n.ln());
        f_e * z_e / (s + 1.0)
    };
    let integral = || adaptive_simpson(&interior, -20.0, 20.0, 1e-12) + tail(-20.0, -18.0) + tail(20.0, 18.0);
    match family {
        Family::Bernoulli => dens(0.0) + dens(1.0),
        Family::CumulativeLogit => (1..=p.cutoffs.len() + 1).map(|c| dens(c as f64)).sum(),
        Family::BetaShifted => integral(),
        Family::HurdleBeta => {
            let ones = if parts == HurdleParts::ZerosAndOnes { dens(1.0) } else { 0.0 };
            dens(0.0) + ones + integral()
        }
        Family::OrderedBeta => dens(0.0) + dens(1.0) + integral(),
    }
}

/// Compare every derivative slot of `bundle` against central differences.
/// Returns a list of mismatches as strings.
pub fn check_bundle_fd(family: Family, y: f64, p: &CellParams, parts: HurdleParts, h: f64, rel: f64) -> Vec<String> {
    let eval = |q: &CellParams| log_density(family, y, q, parts).unwrap();
    let base: DerivativeBundle = eval(p);
    let mut bad = Vec::new();
    let shift = |q: &CellParams, part: Part, dx: f64| -> (f64, f64, f64) {
        let mut r = *q;
        match part {
            Part::Mean => r.eta += dx,
            Part::Zero => r.eta0 += dx,
            Part::One => r.eta1 += dx,
        }
        let b = eval(&r);
        (b.value, b.d1[part.index()], b.d2[part.index()])
    };
    for part in family.parts(parts) {
        let k = part.index();
        let (vp, d1p, d2p) = shift(p, *part, h);
        let (vm, d1m, d2m) = shift(p, *part, -h);
        let fd1 = (vp - vm) / (2.0 * h);
        let fd2 = (d1p - d1m) / (2.0 * h);
        let fd3 = (d2p - d2m) / (2.0 * h);
        for (name, an, fd) in [("d1", base.d1[k], fd1), ("d2", base.d2[k], fd2), ("d3", base.d3[k], fd3)] {
            if !rel_close(an, fd, rel) {
                bad.push(format!("{family} y={y} {part:?} {name}: analytic {an} vs fd {fd}"));
            }
        }
    }
    // Auxiliary parameters.
    let n_aux = base.d_aux.len();
    for a in 0..n_aux {
        let perturb = |dx: f64| -> (f64, f64) {
            let mut cuts = p.cutoffs.to_vec();
            let mut q = *p;
            let phi_slot = family.has_precision();
            if phi_slot && a == 0 {
                q.phi = (p.phi.ln() + dx).exp();
            } else {
                let idx = if phi_slot { a - 1 } else { a };
                cuts[idx] += dx;
            }
            let q = CellParams { cutoffs: &cuts, ..q };
            let b = eval(&q);
            (b.value, b.d2[Part::Mean.index()])
        };
        let (vp, cp) = perturb(h);
        let (vm, cm) = perturb(-h);
        let fdv = (vp - vm) / (2.0 * h);
        let fdc = (cp - cm) / (2.0 * h);
        if !rel_close(base.d_aux[a], fdv, rel) {
            bad.push(format!("{family} y={y} aux{a}: analytic {} vs fd {fdv}", base.d_aux[a]));
        }
        if !rel_close(base.d2_aux[a], fdc, rel) {
            bad.push(format!("{family} y={y} aux{a} curvature: analytic {} vs fd {fdc}", base.d2_aux[a]));
        }
    }
    bad
}

/// Responses to probe for each family: boundary values plus interior draws.
pub fn probe_responses<R: Rng>(family: Family, p: &CellParams, parts: HurdleParts, rng: &mut R) -> Vec<f64> {
    let mut ys = Vec::new();
    match family {
        Family::Bernoulli => ys.extend([0.0, 1.0]),
        Family::CumulativeLogit => ys.extend((1..=p.cutoffs.len() + 1).map(|c| c as f64)),
        Family::BetaShifted => {}
        Family::HurdleBeta => {
            ys.push(0.0);
            if parts == HurdleParts::ZerosAndOnes {
                ys.push(1.0);
            }
        }
        Family::OrderedBeta => ys.extend([0.0, 1.0]),
    }
    if family.has_precision() {
        for _ in 0..3 {
            ys.push(rng.random_range(0.02..0.98));
        }
    }
    ys
}

/// O(n²) pairwise AUC with ties counted ½.
pub fn auc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            den += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / den
}

/// Weighted least squares onto the monotone cone, solved as a QP by an
/// active-set search over block partitions: every partition of the index
/// range into contiguous blocks gives the block weighted means; the QP
/// optimum is the feasible (non-decreasing) candidate with least loss.
/// Exhaustive over 2^(n-1) partitions, so only for n ≤ 12.
pub fn monotone_qp(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let n = values.len();
    assert!(n <= 12);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1u32 << (n.saturating_sub(1))) {
        let mut fit = vec![0.0; n];
        let mut start = 0;
        let mut means = Vec::new();
        for i in 0..n {
            let cut = i == n - 1 || mask & (1 << i) != 0;
            if cut {
                let w: f64 = weights[start..=i].iter().sum();
                let s: f64 = (start..=i).map(|k| weights[k] * values[k]).sum();
                let mean = s / w;
                fit[start..=i].iter_mut().for_each(|v| *v = mean);
                means.push(mean);
                start = i + 1;
            }
        }
        if means.windows(2).any(|w| w[1] < w[0] - 1e-15) {
            continue;
        }
        let loss: f64 = (0..n).map(|k| weights[k] * (values[k] - fit[k]).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, fit));
        }
    }
    best.unwrap().1
}

/// Small random dataset from `family` with known scores, for gradient and
/// recovery checks. Returns responses and the true (n × m) mean predictor.
pub fn random_dataset<R: Rng>(
    family: Family,
    n: usize,
    m: usize,
    d: usize,
    loading_scale: f64,
    rng: &mut R,
) -> (covergllvm::model::ResponseMatrix, ndarray::Array2<f64>, ndarray::Array2<f64>) {
    use covergllvm::distributions::sample;
    use covergllvm::model::{ResponseKind, ResponseMatrix};
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};
    let u = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(rng));
    let mut draw = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let beta: Vec<[f64; 3]> = (0..m).map(|_| [draw(-1.0, 1.0), draw(-1.5, 0.0), draw(-2.5, -1.0)]).collect();
    let gamma: Vec<Vec<[f64; 3]>> = (0..m)
        .map(|_| (0..d).map(|_| [0; 3].map(|_: i32| draw(-loading_scale, loading_scale))).collect())
        .collect();
    let cuts_ordinal = [-1.5, -0.5, 0.5, 1.5];
    let mut eta_true = Array2::zeros((n, m));
    let mut y = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut eta = beta[j];
            for l in 0..d {
                for k in 0..3 {
                    eta[k] += u[(i, l)] * gamma[j][l][k];
                }
            }
            eta_true[(i, j)] = eta[0];
            let cutoffs: &[f64] = match family {
                Family::OrderedBeta => &[-1.0, 1.5],
                Family::CumulativeLogit => &cuts_ordinal,
                _ => &[],
            };
            let p = CellParams { eta: eta[0], eta0: eta[1], eta1: eta[2], phi: 5.0, cutoffs };
            y[(i, j)] = sample(family, &p, HurdleParts::ZerosAndOnes, rng);
        }
    }
    let kind = if family == Family::CumulativeLogit { ResponseKind::Ordinal } else { ResponseKind::Cover };
    (ResponseMatrix::from_values(y, kind).unwrap(), eta_true, u)
}

/// Pearson correlation of two equally sized slices.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

pub struct Case {
    pub spec: ModelSpec,
    pub responses: ResponseMatrix,
    pub covariates: CovariateMatrix,
    pub units: LatentUnits,
}

/// Random n=10, m=5, d=2 instance with `q` covariates.
pub fn case(family: Family, configure: impl Fn(&mut ModelSpec), q: usize, seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (responses, _, _) = random_dataset(family, 10, 5, 2, 1.0, &mut rng);
    let mut spec = ModelSpec::new(family, 2);
    configure(&mut spec);
    let responses = if spec.hurdle_parts == HurdleParts::ZerosOnly {
        let values = responses.values().mapv(|v| if v == 1.0 { 0.999 } else { v });
        ResponseMatrix::from_values(values, ResponseKind::Cover).unwrap()
    } else {
        responses
    };
    let x = Array2::from_shape_fn((10, q), |_| rng.random_range(-1.0..1.0));
    let names = (0..q).map(|k| format!("x{k}")).collect();
    let covariates = CovariateMatrix::new(x, names).unwrap();
    let units = LatentUnits::identity(responses.site_names());
    Case { spec, responses, covariates, units }
}

impl Case {
    pub fn data(&self) -> FitData<'_> {
        FitData { responses: &self.responses, covariates: &self.covariates, units: &self.units }
    }

    pub fn layout(&self) -> ParameterLayout {
        let k = if self.spec.family == Family::CumulativeLogit {
            n_classes(&self.responses, &self.spec) - 1
        } else {
            0
        };
        let dims = Dims {
            n_rows: self.units.n_units(),
            n_species: self.responses.n_species(),
            n_covariates: self.covariates.n_covariates(),
            n_cutoffs: k,
        };
        ParameterLayout::new(&self.spec, dims).unwrap()
    }

    pub fn random_state(&self, rng: &mut ChaCha8Rng, full: bool) -> (ParameterSet, VariationalState) {
        let layout = self.layout();
        let free: Vec<f64> = (0..layout.n_free()).map(|_| rng.random_range(-0.8..0.8)).collect();
        let params = layout.unpack(&free).unwrap();
        let (n, d) = (self.units.n_units(), self.spec.latent_dim);
        let means = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let cov = if full {
            VariationalCov::Full(
                (0..n)
                    .map(|_| {
                        Array2::from_shape_fn((d, d), |(r, c)| match r.cmp(&c) {
                            std::cmp::Ordering::Equal => rng.random_range(0.3..1.2),
                            std::cmp::Ordering::Greater => rng.random_range(-0.5..0.5),
                            std::cmp::Ordering::Less => 0.0,
                        })
                    })
                    .collect(),
            )
        } else {
            VariationalCov::Diagonal(Array2::from_shape_fn((n, d), |_| rng.random_range(0.2..1.5)))
        };
        (params, VariationalState { means, cov })
    }
}

pub fn all_cases() -> Vec<(&'static str, Case)> {
    vec![
        ("beta-shifted", case(Family::BetaShifted, |_| {}, 1, 1)),
        ("hurdle-beta", case(Family::HurdleBeta, |_| {}, 1, 2)),
        ("hurdle-beta zeros-only", case(Family::HurdleBeta, |s| s.hurdle_parts = HurdleParts::ZerosOnly, 0, 3)),
        ("ordered-beta", case(Family::OrderedBeta, |_| {}, 1, 4)),
        ("ordered-beta common", case(Family::OrderedBeta, |s| s.cutoff_mode = CutoffMode::Common, 0, 5)),
        ("cumulative-logit", case(Family::CumulativeLogit, |_| {}, 1, 6)),
        ("cumulative-logit common", case(Family::CumulativeLogit, |s| s.cutoff_mode = CutoffMode::Common, 1, 7)),
        ("bernoulli", case(Family::Bernoulli, |_| {}, 2, 8)),
        ("bernoulli row effects", case(Family::Bernoulli, |s| s.row_effects = true, 0, 9)),
        ("beta-shifted pooled", case(Family::BetaShifted, |s| s.pooled_precision = true, 0, 10)),
    ]
}

pub fn fd_mismatches(c: &Case, full: bool, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (params, vstate) = c.random_state(&mut rng, full);
    let theta = encode(&params, &vstate, c.data(), &c.spec).unwrap();
    let grad = elbo_gradient(&params, &vstate, c.data(), &c.spec).unwrap();
    assert_eq!(grad.len(), theta.len());
    let mut bad = Vec::new();
    for k in 0..theta.len() {
        let f = |x: f64| {
            let mut t = theta.clone();
            t[k] = x;
            elbo_at(&t, c.data(), &c.spec, full).unwrap()
        };
        let fd = central_diff(f, theta[k], 1e-5);
        if !rel_close(grad[k], fd, 1e-4) {
            bad.push(format!("coordinate {k}: analytic {} vs fd {fd}", grad[k]));
        }
    }
    bad
}

pub fn gaussian_matrix<R: Rng>(n: usize, d: usize, rng: &mut R) -> Array2<f64> {
    use rand_distr::{Distribution, StandardNormal};
    Array2::from_shape_fn((n, d), |_| StandardNormal.sample(rng))
}

/// Haar-ish orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal<R: Rng>(d: usize, rng: &mut R) -> Array2<f64> {
    let g = gaussian_matrix(d, d, rng);
    let q = nalgebra::DMatrix::from_fn(d, d, |i, j| g[(i, j)]).qr().q();
    Array2::from_shape_fn((d, d), |(i, j)| q[(i, j)])
}
