use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dissimilarity::DissimilarityMatrix;
use super::{OrdinationScores, ScoreSource};
use crate::error::{GllvmError, Result};
use crate::exec::Execution;

/// Weighted least-squares monotone (non-decreasing) fit by pool adjacent
/// violators.
pub fn isotonic_regression(values: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if values.len() != weights.len() {
        return Err(GllvmError::Dimension("values and weights differ in length".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(GllvmError::Parameter("weights must be positive".into()));
    }
    Ok(pava(values, weights))
}

fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // Blocks as (weighted mean, total weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let mut cur = (v, w, 1usize);
        while let Some(&(m, bw, len)) = blocks.last() {
            if m <= cur.0 {
                break;
            }
            blocks.pop();
            let tw = bw + cur.1;
            cur = ((m * bw + cur.0 * cur.1) / tw, tw, len + cur.2);
        }
        blocks.push(cur);
    }
    let mut out = Vec::with_capacity(values.len());
    for (m, _, len) in blocks {
        out.extend(std::iter::repeat_n(m, len));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmdsOptions {
    pub dim: usize,
    pub n_restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop when stress-1 falls by less than this between iterations.
    pub tol: f64,
    pub execution: Execution,
}

impl Default for NmdsOptions {
    fn default() -> Self {
        NmdsOptions { dim: 2, n_restarts: 10, seed: 0, max_iter: 500, tol: 1e-9, execution: Execution::Parallel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmdsFit {
    pub scores: OrdinationScores,
    /// Stress-1 of every accepted configuration of the best restart.
    pub stress_trace: Vec<f64>,
    pub converged: bool,
    pub best_restart: usize,
}

struct Pairs {
    /// (a, b) with a > b.
    index: Vec<(usize, usize)>,
    /// Pair positions sorted by dissimilarity, and the tie blocks within it.
    order: Vec<usize>,
    ties: Vec<(usize, usize)>,
}

impl Pairs {
    fn new(diss: &DissimilarityMatrix) -> Self {
        let n = diss.len();
        let v = diss.values();
        let index: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..a).map(move |b| (a, b))).collect();
        let delta: Vec<f64> = index.iter().map(|&(a, b)| v[(a, b)]).collect();
        let mut order: Vec<usize> = (0..index.len()).collect();
        order.sort_by(|&x, &y| delta[x].total_cmp(&delta[y]).then(x.cmp(&y)));
        let mut ties = Vec::new();
        let mut start = 0;
        for k in 1..=order.len() {
            if k == order.len() || delta[order[k]] != delta[order[start]] {
                if k - start > 1 {
                    ties.push((start, k));
                }
                start = k;
            }
        }
        Pairs { index, order, ties }
    }
}

fn distances(x: &DMatrix<f64>, pairs: &Pairs) -> Vec<f64> {
    pairs
        .index
        .iter()
        .map(|&(a, b)| (x.row(a) - x.row(b)).norm())
        .collect()
}

/// Disparities by monotone regression of distances on dissimilarity ranks,
/// with tied dissimilarities free to take any order (primary approach).
fn disparities(dist: &[f64], pairs: &Pairs) -> Vec<f64> {
    let mut order = pairs.order.clone();
    for &(s, e) in &pairs.ties {
        order[s..e].sort_by(|&x, &y| dist[x].total_cmp(&dist[y]).then(x.cmp(&y)));
    }
    let seq: Vec<f64> = order.iter().map(|&p| dist[p]).collect();
    let fitted = pava(&seq, &vec![1.0; seq.len()]);
    let mut out = vec![0.0; dist.len()];
    for (&p, v) in order.iter().zip(fitted) {
        out[p] = v;
    }
    out
}

fn stress1(dist: &[f64], disp: &[f64]) -> f64 {
    let num: f64 = dist.iter().zip(disp).map(|(d, h)| (d - h).powi(2)).sum();
    let den: f64 = dist.iter().map(|d| d * d).sum();
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        f64::INFINITY
    }
}

/// Rescale so that Σ d² equals the number of pairs.
fn normalise(x: &mut DMatrix<f64>, dist: &mut [f64]) {
    let ss: f64 = dist.iter().map(|d| d * d).sum();
    if ss > 0.0 {
        let c = (dist.len() as f64 / ss).sqrt();
        *x *= c;
        dist.iter_mut().for_each(|d| *d *= c);
    }
}

fn classical_start(diss: &DissimilarityMatrix, dim: usize) -> DMatrix<f64> {
    let n = diss.len();
    let v = diss.values();
    let sq = DMatrix::from_fn(n, n, |a, b| v[(a, b)] * v[(a, b)]);
    let row_means: Vec<f64> = (0..n).map(|a| sq.row(a).mean()).collect();
    let total = sq.mean();
    let b = DMatrix::from_fn(n, n, |a, c| -0.5 * (sq[(a, c)] - row_means[a] - row_means[c] + total));
    let eig = SymmetricEigen::new(b);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    DMatrix::from_fn(n, dim, |a, k| {
        let i = idx[k.min(n - 1)];
        eig.eigenvectors[(a, i)] * eig.eigenvalues[i].max(0.0).sqrt()
    })
}

struct Run {
    x: DMatrix<f64>,
    trace: Vec<f64>,
    converged: bool,
}

fn run(diss: &DissimilarityMatrix, pairs: &Pairs, opts: &NmdsOptions, restart: usize) -> Run {
    let n = diss.len();
    let random = |salt: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(restart as u64 + salt);
        DMatrix::from_fn(n, opts.dim, |_, _| StandardNormal.sample(&mut rng))
    };
    let mut x = if restart == 0 { classical_start(diss, opts.dim) } else { random(0) };
    let mut dist = distances(&x, pairs);
    if dist.iter().all(|d| *d <= 0.0) {
        x = random(1 << 32);
        dist = distances(&x, pairs);
    }
    normalise(&mut x, &mut dist);
    let mut disp = disparities(&dist, pairs);
    let mut stress = stress1(&dist, &disp);
    let mut trace = vec![stress];
    let mut converged = false;
    for _ in 0..opts.max_iter {
        if stress < 1e-12 {
            converged = true;
            break;
        }
        // Guttman transform X⁺ = B(X) X / n with unit weights.
        let mut bmat = DMatrix::zeros(n, n);
        for (p, &(a, b)) in pairs.index.iter().enumerate() {
            let v = if dist[p] > 0.0 { -disp[p] / dist[p] } else { 0.0 };
            bmat[(a, b)] = v;
            bmat[(b, a)] = v;
        }
        for a in 0..n {
            let s: f64 = (0..n).filter(|&b| b != a).map(|b| bmat[(a, b)]).sum();
            bmat[(a, a)] = -s;
        }
        let mut next = bmat * &x / n as f64;
        let mut next_dist = distances(&next, pairs);
        normalise(&mut next, &mut next_dist);
        let next_disp = disparities(&next_dist, pairs);
        let next_stress = stress1(&next_dist, &next_disp);
        if !(next_stress <= stress) {
            // Only rounding can get here; keep the better configuration.
            converged = true;
            break;
        }
        let gain = stress - next_stress;
        x = next;
        dist = next_dist;
        disp = next_disp;
        stress = next_stress;
        trace.push(stress);
        if gain < opts.tol {
            converged = true;
            break;
        }
    }
    Run { x, trace, converged }
}

/// Non-metric multidimensional scaling by majorization with monotone
/// regression. Restart 0 starts from classical scaling, the rest from
/// seeded Gaussian configurations; the lowest stress wins (ties by index).
pub fn nmds(diss: &DissimilarityMatrix, site_names: &[String], opts: &NmdsOptions) -> Result<NmdsFit> {
    let n = diss.len();
    if opts.dim == 0 || n < opts.dim + 1 {
        return Err(GllvmError::Dimension(format!("cannot embed {n} points in {} dimensions", opts.dim)));
    }
    if site_names.len() != n {
        return Err(GllvmError::Dimension("site names do not match the dissimilarities".into()));
    }
    if opts.n_restarts == 0 || opts.max_iter == 0 {
        return Err(GllvmError::Parameter("restarts and iterations must be at least 1".into()));
    }
    let pairs = Pairs::new(diss);
    let runs = opts.execution.map_indexed(opts.n_restarts, |r| run(diss, &pairs, opts, r));
    let best = runs
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| {
            let (sa, sb) = (a.trace.last().expect("non-empty"), b.trace.last().expect("non-empty"));
            sa.total_cmp(sb).then(i.cmp(j))
        })
        .map(|(i, _)| i)
        .expect("at least one restart");
    let r = &runs[best];
    let mut coords = Array2::from_shape_fn((n, opts.dim), |(a, k)| r.x[(a, k)]);
    for mut col in coords.columns_mut() {
        let mean = col.mean().unwrap_or(0.0);
        col -= mean;
    }
    let stress = *r.trace.last().expect("non-empty");
    let scores = OrdinationScores::new(site_names.to_vec(), coords, ScoreSource::Nmds, Some(stress))?;
    Ok(NmdsFit { scores, stress_trace: r.trace.clone(), converged: r.converged, best_restart: best })
}
