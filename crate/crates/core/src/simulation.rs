//! Synthetic cover data, boundary-mass calibration, derived data views and
//! the method-comparison sweep.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::distributions::{logistic, sample, CellParams, Family, HurdleParts, Part};
use crate::error::{GllvmError, Result};
use crate::estimator::{fit, FitData, FitOptions};
use crate::exec::Execution;
use crate::model::{
    linear_predictor, Coefficients, CovariateMatrix, CutoffMode, LatentUnits, ModelSpec, ParameterSet,
    ResponseKind, ResponseMatrix, Thresholds,
};
use crate::ordination::{dissimilarity, nmds, procrustes_error, Metric, NmdsOptions};

/// Upper bounds of the seven cover classes: {0}, (0,.05], (.05,.25],
/// (.25,.5], (.5,.75], (.75,.95], (.95,1].
pub const DAUBENMIRE_BOUNDS: [f64; 7] = [0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    OrderedBeta,
    HurdleBeta,
}

impl Generator {
    pub fn family(self) -> Family {
        match self {
            Generator::OrderedBeta => Family::OrderedBeta,
            Generator::HurdleBeta => Family::HurdleBeta,
        }
    }
}

impl FromStr for Generator {
    type Err = GllvmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ordered-beta" => Ok(Generator::OrderedBeta),
            "hurdle-beta" => Ok(Generator::HurdleBeta),
            _ => Err(GllvmError::Parse(format!("unknown generator '{s}'"))),
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.family().name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub generator: Generator,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub zero_prop: f64,
    pub one_prop: f64,
    pub n_replicates: usize,
    pub seed: u64,
    pub intercept_range: (f64, f64),
    pub loading_range: (f64, f64),
    pub phi_value: f64,
    /// Monte Carlo cells used by the calibration.
    pub calibration_cells: usize,
}

impl SimDesign {
    /// Desk-scale design: 60 units, 40 species, 30 replicates.
    pub fn desk(generator: Generator, zero_prop: f64) -> Self {
        SimDesign {
            generator,
            n: 60,
            m: 40,
            d: 2,
            zero_prop,
            one_prop: 0.05,
            n_replicates: 30,
            seed: 0,
            intercept_range: (-1.0, 1.0),
            loading_range: (-2.0, 2.0),
            phi_value: 4.0,
            calibration_cells: 200_000,
        }
    }

    /// 180 units, 240 species, 1500 replicates.
    pub fn full_scale(generator: Generator, zero_prop: f64) -> Self {
        SimDesign { n: 180, m: 240, n_replicates: 1500, ..Self::desk(generator, zero_prop) }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(GllvmError::Parameter(msg));
        if !(self.zero_prop > 0.0 && self.zero_prop < 1.0) {
            return bad(format!("zero proportion {} outside (0,1)", self.zero_prop));
        }
        if !(self.one_prop > 0.0 && self.zero_prop + self.one_prop < 1.0) {
            return bad(format!("one proportion {} infeasible with zero proportion {}", self.one_prop, self.zero_prop));
        }
        if self.n == 0 || self.m == 0 || self.d == 0 || self.d > self.m {
            return bad(format!("invalid dimensions n={}, m={}, d={}", self.n, self.m, self.d));
        }
        for (name, (lo, hi)) in [("intercept", self.intercept_range), ("loading", self.loading_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("{name} range ({lo}, {hi}) is empty"));
            }
        }
        if !(self.phi_value > 0.0 && self.phi_value.is_finite()) {
            return bad(format!("precision {} must be positive", self.phi_value));
        }
        if self.calibration_cells == 0 {
            return bad("calibration needs at least one Monte Carlo cell".into());
        }
        Ok(())
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec::new(self.generator.family(), self.d)
    }
}

/// A generating model and its latent scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub spec: ModelSpec,
    pub params: ParameterSet,
    /// n × d
    pub scores: Array2<f64>,
}

fn uniform_array<R: Rng + ?Sized>(shape: (usize, usize), range: (f64, f64), rng: &mut R) -> Array2<f64> {
    let dist = Uniform::new(range.0, range.1).expect("checked range");
    Array2::from_shape_simple_fn(shape, || dist.sample(rng))
}

fn uniform_vec<R: Rng + ?Sized>(len: usize, range: (f64, f64), rng: &mut R) -> Array1<f64> {
    let dist = Uniform::new(range.0, range.1).expect("checked range");
    Array1::from_shape_simple_fn(len, || dist.sample(rng))
}

/// Uniform intercepts and loadings, standard normal scores. Boundary offsets
/// start at zero and are set by [`calibrate_boundary_mass`].
pub fn draw_true_model<R: Rng + ?Sized>(design: &SimDesign, rng: &mut R) -> Result<TrueModel> {
    design.check()?;
    let (n, m, d) = (design.n, design.m, design.d);
    let spec = design.spec();
    let coef = |part: Part, rng: &mut R| Coefficients {
        part,
        intercepts: uniform_vec(m, design.intercept_range, rng),
        slopes: Array2::zeros((m, 0)),
        loadings: uniform_array((m, d), design.loading_range, rng),
    };
    let (parts, thresholds) = match design.generator {
        Generator::OrderedBeta => {
            (vec![coef(Part::Mean, rng)], Thresholds::Ordered { lower: vec![0.0; m], upper: vec![0.0; m] })
        }
        Generator::HurdleBeta => {
            let parts = vec![coef(Part::Mean, rng), coef(Part::Zero, rng), coef(Part::One, rng)];
            (parts, Thresholds::None)
        }
    };
    let scores = Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal));
    let params = ParameterSet { parts, log_precisions: vec![design.phi_value.ln(); m], thresholds, row_effects: None };
    Ok(TrueModel { spec, params, scores })
}

/// Offsets found by calibration and the expected proportions they give.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub zero_offset: f64,
    pub one_offset: f64,
    pub zero_prop: f64,
    pub one_prop: f64,
}

const CALIBRATION_TOL: f64 = 1e-5;

/// Bisection for a monotone `f(δ) = target` on [−10, 10], widened twice.
fn bisect(f: impl Fn(f64) -> f64, target: f64, what: &str) -> Result<f64> {
    let mut half = 10.0;
    for _ in 0..3 {
        let (mut lo, mut hi) = (-half, half);
        let (f_lo, f_hi) = (f(lo), f(hi));
        let increasing = f_hi >= f_lo;
        let (min, max) = if increasing { (f_lo, f_hi) } else { (f_hi, f_lo) };
        if (min..=max).contains(&target) {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let v = f(mid);
                if (v - target).abs() < CALIBRATION_TOL || hi - lo < 1e-12 {
                    return Ok(mid);
                }
                if (v < target) == increasing {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        half *= 2.0;
    }
    Err(GllvmError::Calibration(format!("no offset in [-{half}, {half}] reaches the {what} proportion {target}", half = half / 2.0)))
}

/// Set common boundary offsets so the expected zero and one proportions
/// match the design, using Monte Carlo scores shared by every trial offset.
pub fn calibrate_boundary_mass<R: Rng + ?Sized>(
    model: &mut TrueModel,
    design: &SimDesign,
    rng: &mut R,
) -> Result<Calibration> {
    design.check()?;
    let m = design.m;
    let n_mc = design.calibration_cells.div_ceil(m);
    let u = Array2::from_shape_simple_fn((n_mc, design.d), || rng.sample(StandardNormal));
    let empty = CovariateMatrix::empty(n_mc);
    let base = |part: Part| -> Result<Vec<f64>> {
        let coef = model.params.coefficients(part).expect("generator part").clone();
        let mut p = model.params.clone();
        p.parts = vec![coef];
        p.parts[0].part = Part::Mean;
        Ok(linear_predictor(&p, &empty, u.view(), Part::Mean)?.into_iter().collect())
    };
    let mean = |f: &dyn Fn(usize) -> f64, len: usize| (0..len).map(f).sum::<f64>() / len as f64;

    let cal = match design.generator {
        Generator::OrderedBeta => {
            let eta = base(Part::Mean)?;
            let zero = |d0: f64| mean(&|c| logistic(d0 - eta[c]), eta.len());
            let one = |d1: f64| mean(&|c| 1.0 - logistic(d1 - eta[c]), eta.len());
            let d0 = bisect(zero, design.zero_prop, "zero")?;
            let d1 = bisect(one, design.one_prop, "one")?;
            if d1 <= d0 {
                return Err(GllvmError::Calibration("upper cutoff fell below the lower cutoff".into()));
            }
            model.params.thresholds = Thresholds::Ordered { lower: vec![d0; m], upper: vec![d1; m] };
            Calibration { zero_offset: d0, one_offset: d1, zero_prop: zero(d0), one_prop: one(d1) }
        }
        Generator::HurdleBeta => {
            let eta0 = base(Part::Zero)?;
            let eta1 = base(Part::One)?;
            let zero = |d0: f64| mean(&|c| logistic(eta0[c] + d0), eta0.len());
            let d0 = bisect(zero, design.zero_prop, "zero")?;
            let p0: Vec<f64> = eta0.iter().map(|e| logistic(e + d0)).collect();
            let one = |d1: f64| mean(&|c| (1.0 - p0[c]) * logistic(eta1[c] + d1), eta1.len());
            let d1 = bisect(one, design.one_prop, "one")?;
            for (part, delta) in [(Part::Zero, d0), (Part::One, d1)] {
                let coef = model.params.parts.iter_mut().find(|c| c.part == part).expect("hurdle part");
                coef.intercepts += delta;
            }
            Calibration { zero_offset: d0, one_offset: d1, zero_prop: zero(d0), one_prop: one(d1) }
        }
    };
    Ok(cal)
}

/// Draw a cover matrix from a generating model.
pub fn simulate_responses<R: Rng + ?Sized>(model: &TrueModel, rng: &mut R) -> Result<ResponseMatrix> {
    let n = model.scores.nrows();
    let empty = CovariateMatrix::empty(n);
    let mut eta = [None, None, None];
    for part in model.spec.parts() {
        eta[part.index()] = Some(linear_predictor(&model.params, &empty, model.scores.view(), *part)?);
    }
    let mean = eta[0].as_ref().expect("mean part");
    let m = mean.ncols();
    let mut y = Array2::zeros((n, m));
    let mut buf = Vec::new();
    for j in 0..m {
        model.params.thresholds.for_species(j, &mut buf);
        for i in 0..n {
            let at = |k: usize| eta[k].as_ref().map_or(0.0, |e| e[(i, j)]);
            let cp = CellParams { eta: at(0), eta0: at(1), eta1: at(2), phi: model.params.phi(j), cutoffs: &buf };
            y[(i, j)] = sample(model.spec.family, &cp, HurdleParts::ZerosAndOnes, rng);
        }
    }
    ResponseMatrix::from_values(y, ResponseKind::Cover)
}

fn require_cover(data: &ResponseMatrix) -> Result<()> {
    if data.kind() != ResponseKind::Cover {
        return Err(GllvmError::Validation("conversion needs cover responses".into()));
    }
    Ok(())
}

/// Cover → Daubenmire class 1..7. Masked cells stay masked.
pub fn to_daubenmire(data: &ResponseMatrix) -> Result<ResponseMatrix> {
    require_cover(data)?;
    let classes = data.values().mapv(|y| (DAUBENMIRE_BOUNDS.iter().position(|&b| y <= b).unwrap_or(6) + 1) as f64);
    data.with_values(classes, ResponseKind::Ordinal)
}

/// Cover → 1 where y > 0, else 0.
pub fn to_presence_absence(data: &ResponseMatrix) -> Result<ResponseMatrix> {
    require_cover(data)?;
    data.with_values(data.values().mapv(|y| f64::from(u8::from(y > 0.0))), ResponseKind::Cover)
}

/// Relabel ordinal classes so the observed ones are 1..K' in order. Classes
/// nobody falls into carry no information about their cutoffs.
pub fn compact_classes(data: &ResponseMatrix) -> Result<ResponseMatrix> {
    if data.kind() != ResponseKind::Ordinal {
        return Err(GllvmError::Validation("class compaction needs ordinal responses".into()));
    }
    let mut present = vec![false; data.max_label() + 1];
    for j in 0..data.n_species() {
        for v in data.observed_column(j) {
            present[v as usize] = true;
        }
    }
    let mut rank = vec![0.0; present.len()];
    let mut next = 0.0;
    for (c, &p) in present.iter().enumerate() {
        if p {
            next += 1.0;
            rank[c] = next;
        }
    }
    let values = ndarray::Zip::from(data.values())
        .and(data.mask())
        .map_collect(|&v, &m| if m { rank[v as usize] } else { 1.0 });
    data.with_values(values, ResponseKind::Ordinal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    BetaShifted,
    HurdleBeta,
    OrderedBeta,
    CumulativeLogit,
    Bernoulli,
    NmdsBray,
    NmdsJaccard,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::BetaShifted,
        Method::HurdleBeta,
        Method::OrderedBeta,
        Method::CumulativeLogit,
        Method::Bernoulli,
        Method::NmdsBray,
        Method::NmdsJaccard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::BetaShifted => "beta-shifted",
            Method::HurdleBeta => "hurdle-beta",
            Method::OrderedBeta => "ordered-beta",
            Method::CumulativeLogit => "cumulative-logit",
            Method::Bernoulli => "bernoulli",
            Method::NmdsBray => "nmds-bray",
            Method::NmdsJaccard => "nmds-jaccard",
        }
    }
}

impl FromStr for Method {
    type Err = GllvmError;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| GllvmError::Parse(format!("unknown method '{s}'")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub fit: FitOptions,
    pub nmds: NmdsOptions,
    /// Strategy over replicates. Fits inside a replicate run sequentially.
    pub execution: Execution,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            fit: FitOptions { n_restarts: 2, execution: Execution::Sequential, ..FitOptions::default() },
            nmds: NmdsOptions { execution: Execution::Sequential, ..NmdsOptions::default() },
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub method: Method,
    pub p: f64,
    pub replicate: usize,
    /// `None` when the fit failed.
    pub error: Option<f64>,
    pub converged: bool,
    pub status: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub p: f64,
    pub mean_error: Option<f64>,
    pub sd_error: Option<f64>,
    pub n_kept: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub design: SimDesign,
    pub records: Vec<SweepRecord>,
}

/// Generator stream for replicate `rep` at zero-proportion index `p_index`.
pub fn replicate_rng(seed: u64, p_index: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((p_index as u64) << 32) | rep as u64);
    rng
}

/// One simulated replicate: true model, calibration and cover data.
pub fn simulate_replicate(design: &SimDesign, rng: &mut ChaCha8Rng) -> Result<(TrueModel, Calibration, ResponseMatrix)> {
    let mut model = draw_true_model(design, rng)?;
    let cal = calibrate_boundary_mass(&mut model, design, rng)?;
    let data = simulate_responses(&model, rng)?;
    Ok((model, cal, data))
}

fn fit_method(
    method: Method,
    cover: &ResponseMatrix,
    d: usize,
    opts: &SweepOptions,
    seed: u64,
) -> Result<(ndarray::Array2<f64>, bool)> {
    let units = LatentUnits::identity(cover.site_names());
    let covariates = CovariateMatrix::empty(cover.n_sites());
    let model_fit = |responses: &ResponseMatrix, spec: ModelSpec| -> Result<(Array2<f64>, bool)> {
        let data = FitData { responses, covariates: &covariates, units: &units };
        let fitted = fit(data, &spec, &FitOptions { seed, ..opts.fit.clone() })?;
        let converged = fitted.diagnostics.converged;
        Ok((fitted.scores().clone(), converged))
    };
    let nmds_fit = |responses: &ResponseMatrix, metric: Metric| -> Result<(Array2<f64>, bool)> {
        let diss = dissimilarity(responses, metric, Execution::Sequential)?;
        let out = nmds(&diss, responses.site_names(), &NmdsOptions { dim: d, seed, ..opts.nmds.clone() })?;
        Ok((out.scores.coords, out.converged))
    };
    match method {
        Method::BetaShifted => model_fit(cover, ModelSpec::new(Family::BetaShifted, d)),
        Method::HurdleBeta => model_fit(cover, ModelSpec::new(Family::HurdleBeta, d)),
        Method::OrderedBeta => model_fit(cover, ModelSpec::new(Family::OrderedBeta, d)),
        Method::CumulativeLogit => {
            let spec = ModelSpec { cutoff_mode: CutoffMode::Common, ..ModelSpec::new(Family::CumulativeLogit, d) };
            model_fit(&compact_classes(&to_daubenmire(cover)?)?, spec)
        }
        Method::Bernoulli => model_fit(&to_presence_absence(cover)?, ModelSpec::new(Family::Bernoulli, d)),
        Method::NmdsBray => nmds_fit(cover, Metric::BrayCurtis),
        Method::NmdsJaccard => nmds_fit(&to_presence_absence(cover)?, Metric::Jaccard),
    }
}

/// Simulate every replicate at every zero proportion and score each method
/// by the Procrustes error of its ordination against the true scores.
/// Failed fits are recorded, not propagated.
pub fn run_sweep(design: &SimDesign, zero_props: &[f64], methods: &[Method], opts: &SweepOptions) -> Result<SweepResult> {
    if methods.is_empty() || zero_props.is_empty() {
        return Err(GllvmError::Parameter("sweep needs at least one method and one zero proportion".into()));
    }
    for &p in zero_props {
        SimDesign { zero_prop: p, ..design.clone() }.check()?;
    }
    let reps = design.n_replicates;
    let jobs = zero_props.len() * reps;
    let per_job = opts.execution.map_indexed(jobs, |job| -> Result<Vec<SweepRecord>> {
        let (p_index, rep) = (job / reps, job % reps);
        let p = zero_props[p_index];
        let local = SimDesign { zero_prop: p, ..design.clone() };
        let mut rng = replicate_rng(design.seed, p_index, rep);
        let (truth, _, cover) = simulate_replicate(&local, &mut rng)?;
        let fit_seed: u64 = rng.random();
        Ok(methods
            .iter()
            .map(|&method| {
                let start = Instant::now();
                let outcome = fit_method(method, &cover, design.d, opts, fit_seed)
                    .and_then(|(scores, converged)| Ok((procrustes_error(truth.scores.view(), scores.view())?, converged)));
                let seconds = start.elapsed().as_secs_f64();
                match outcome {
                    Ok((error, converged)) => SweepRecord {
                        method,
                        p,
                        replicate: rep,
                        error: Some(error),
                        converged,
                        status: "ok".into(),
                        seconds,
                    },
                    Err(e) => {
                        log::warn!("{method} failed at p={p}, replicate {rep}: {e}");
                        SweepRecord { method, p, replicate: rep, error: None, converged: false, status: e.to_string(), seconds }
                    }
                }
            })
            .collect())
    });
    let mut records = Vec::with_capacity(jobs * methods.len());
    for r in per_job {
        records.extend(r?);
    }
    Ok(SweepResult { design: design.clone(), records })
}

/// Mean and sample sd after dropping the ⌈0.05·R⌉ largest errors of each
/// (method, p) cell, failed fits counting as largest.
pub fn summarize(result: &SweepResult) -> Vec<CellSummary> {
    let mut keys: Vec<(Method, f64)> = Vec::new();
    for r in &result.records {
        if !keys.iter().any(|&(m, p)| m == r.method && p == r.p) {
            keys.push((r.method, r.p));
        }
    }
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.into_iter()
        .map(|(method, p)| {
            let mut errors: Vec<f64> = result
                .records
                .iter()
                .filter(|r| r.method == method && r.p == p)
                .map(|r| r.error.unwrap_or(f64::INFINITY))
                .collect();
            errors.sort_by(f64::total_cmp);
            let trim = trim_count(errors.len());
            errors.truncate(errors.len() - trim);
            errors.retain(|e| e.is_finite());
            let k = errors.len();
            let mean = (k > 0).then(|| errors.iter().sum::<f64>() / k as f64);
            let sd = mean.filter(|_| k > 1).map(|mu| {
                (errors.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
            });
            CellSummary { method, p, mean_error: mean, sd_error: sd, n_kept: k }
        })
        .collect()
}

/// Number of errors trimmed from a cell of `r` records.
pub fn trim_count(r: usize) -> usize {
    (r * 5).div_ceil(100)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn write_summary_csv<W: Write>(summary: &[CellSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "p", "mean_error", "sd_error", "n_kept"])?;
    for s in summary {
        w.write_record([s.method.name().to_string(), s.p.to_string(), opt(s.mean_error), opt(s.sd_error), s.n_kept.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Raw records without timings, so identical seeds give identical files.
pub fn write_records_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "p", "replicate", "error", "converged", "status"])?;
    for r in records {
        w.write_record([
            r.method.name().to_string(),
            r.p.to_string(),
            r.replicate.to_string(),
            opt(r.error),
            r.converged.to_string(),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "p", "replicate", "seconds"])?;
    for r in records {
        w.write_record([r.method.name().to_string(), r.p.to_string(), r.replicate.to_string(), r.seconds.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
