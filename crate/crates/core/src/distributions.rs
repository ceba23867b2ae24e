//! Response families for percent-cover data.
//!
//! Every log-density is returned as a [`DerivativeBundle`] holding the value
//! plus first, second and third derivatives with respect to each linear
//! predictor part, and the derivatives of the value and of the mean-part
//! curvature with respect to the auxiliary parameters (log precision and
//! cutoffs). The variational objective needs all of them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use smallvec::{smallvec, SmallVec};

use crate::error::{GllvmError, Result};
use crate::special::{digamma, ln_gamma, tetragamma, trigamma};

/// Floor used when a sampled beta value underflows to an exact boundary.
pub const SAMPLE_INTERIOR_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Beta regression on boundary-shifted responses.
    BetaShifted,
    /// Zero/one hurdle with a beta interior, one predictor per part.
    HurdleBeta,
    /// Ordered beta: logistic cutoffs around a beta interior.
    OrderedBeta,
    /// Proportional-odds model on ordinal cover classes.
    CumulativeLogit,
    /// Presence/absence.
    Bernoulli,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::BetaShifted,
        Family::HurdleBeta,
        Family::OrderedBeta,
        Family::CumulativeLogit,
        Family::Bernoulli,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::BetaShifted => "beta-shifted",
            Family::HurdleBeta => "hurdle-beta",
            Family::OrderedBeta => "ordered-beta",
            Family::CumulativeLogit => "cumulative-logit",
            Family::Bernoulli => "bernoulli",
        }
    }

    /// Linear predictor parts used by the family, in parameter order.
    pub fn parts(self, hurdle: HurdleParts) -> &'static [Part] {
        match (self, hurdle) {
            (Family::HurdleBeta, HurdleParts::ZerosOnly) => &[Part::Mean, Part::Zero],
            (Family::HurdleBeta, HurdleParts::ZerosAndOnes) => &[Part::Mean, Part::Zero, Part::One],
            _ => &[Part::Mean],
        }
    }

    pub fn has_precision(self) -> bool {
        matches!(self, Family::BetaShifted | Family::HurdleBeta | Family::OrderedBeta)
    }

    /// Number of auxiliary slots in a [`DerivativeBundle`] for this family.
    pub fn aux_len(self, n_cutoffs: usize) -> usize {
        match self {
            Family::BetaShifted | Family::HurdleBeta => 1,
            Family::OrderedBeta => 3,
            Family::CumulativeLogit => n_cutoffs,
            Family::Bernoulli => 0,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = GllvmError;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| GllvmError::Parse(format!("unknown family '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HurdleParts {
    ZerosOnly,
    #[default]
    ZerosAndOnes,
}

/// Linear predictor part. `Mean` drives the beta mean (or the single
/// predictor of the one-predictor families); `Zero` and `One` are the hurdle
/// boundary parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Part {
    Mean,
    Zero,
    One,
}

impl Part {
    pub fn index(self) -> usize {
        match self {
            Part::Mean => 0,
            Part::Zero => 1,
            Part::One => 2,
        }
    }
}

pub const MAX_PARTS: usize = 3;

/// Cell-level parameters shared by all families.
#[derive(Debug, Clone, Copy)]
pub struct CellParams<'a> {
    pub eta: f64,
    pub eta0: f64,
    pub eta1: f64,
    pub phi: f64,
    pub cutoffs: &'a [f64],
}

impl<'a> CellParams<'a> {
    pub fn mean(eta: f64) -> Self {
        CellParams { eta, eta0: 0.0, eta1: 0.0, phi: 1.0, cutoffs: &[] }
    }
}

pub type AuxVec = SmallVec<[f64; 8]>;

/// Log-density and its derivatives for one cell.
///
/// `d1`, `d2`, `d3` are indexed by [`Part::index`]. `d_aux` holds the
/// derivative of the value with respect to each auxiliary parameter and
/// `d2_aux` the derivative of `d2[Mean]` with respect to the same
/// parameters. Auxiliary layout: `[log φ]` for beta-shifted and hurdle,
/// `[log φ, ζ0, ζ1]` for ordered beta, `[c_1 .. c_K]` for cumulative logit.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub value: f64,
    pub d1: [f64; MAX_PARTS],
    pub d2: [f64; MAX_PARTS],
    pub d3: [f64; MAX_PARTS],
    pub d_aux: AuxVec,
    pub d2_aux: AuxVec,
}

impl DerivativeBundle {
    fn zeros(aux: usize) -> Self {
        DerivativeBundle {
            value: 0.0,
            d1: [0.0; MAX_PARTS],
            d2: [0.0; MAX_PARTS],
            d3: [0.0; MAX_PARTS],
            d_aux: smallvec![0.0; aux],
            d2_aux: smallvec![0.0; aux],
        }
    }

    fn add_part(&mut self, part: Part, t: &ScalarTerms) {
        let k = part.index();
        self.value += t.value;
        self.d1[k] += t.d1;
        self.d2[k] += t.d2;
        self.d3[k] += t.d3;
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ScalarTerms {
    value: f64,
    d1: f64,
    d2: f64,
    d3: f64,
}

// ---------------------------------------------------------------------------
// Logistic helpers
// ---------------------------------------------------------------------------

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(GllvmError::Domain(format!("logit requires 0 < p < 1, got {p}")));
    }
    Ok(logit_unchecked(p))
}

pub(crate) fn logit_unchecked(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// log(1 + e^x) without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// log σ(x).
pub fn log_logistic(x: f64) -> f64 {
    -softplus(-x)
}

/// Smithson–Verkuilen boundary shift into the open unit interval.
pub fn shift_transform(y: f64, n: u32) -> f64 {
    let n = n as f64;
    (y * (n - 1.0) + 0.5) / n
}

/// Derivatives of log σ(s·η) with respect to η for s = ±1.
fn log_logistic_terms(eta: f64, sign: f64) -> ScalarTerms {
    let x = sign * eta;
    let p = logistic(x);
    let w = p * (1.0 - p);
    ScalarTerms {
        value: log_logistic(x),
        d1: sign * (1.0 - p),
        d2: -w,
        d3: -sign * w * (1.0 - 2.0 * p),
    }
}

// ---------------------------------------------------------------------------
// Beta interior
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct BetaTerms {
    s: ScalarTerms,
    d_logphi: f64,
    d2_logphi: f64,
}

fn beta_terms(y: f64, eta: f64, phi: f64) -> BetaTerms {
    let mu = logistic(eta);
    let w = mu * (1.0 - mu);
    let a = mu * phi;
    let b = (1.0 - mu) * phi;
    let ly = y.ln();
    let l1y = (-y).ln_1p();
    let (psi_a, psi_b) = (digamma(a), digamma(b));
    let (t1a, t1b) = (trigamma(a), trigamma(b));
    let (t2a, t2b) = (tetragamma(a), tetragamma(b));

    let value = ln_gamma(phi) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * ly + (b - 1.0) * l1y;
    let t = (ly - l1y) - (psi_a - psi_b);
    let s = t1a + t1b;
    let w1 = w * (1.0 - 2.0 * mu);
    let w2 = w * (1.0 - 2.0 * mu).powi(2) - 2.0 * w * w;

    let d1 = phi * w * t;
    let d2 = phi * w1 * t - phi * phi * w * w * s;
    let d3 = phi * w2 * t - 3.0 * phi * phi * w * w1 * s - phi.powi(3) * w.powi(3) * (t2a - t2b);

    let dvalue_dphi = digamma(phi) - mu * psi_a - (1.0 - mu) * psi_b + mu * ly + (1.0 - mu) * l1y;
    let dt_dphi = -(mu * t1a - (1.0 - mu) * t1b);
    let ds_dphi = mu * t2a + (1.0 - mu) * t2b;
    let dd2_dphi =
        w1 * t + phi * w1 * dt_dphi - 2.0 * phi * w * w * s - phi * phi * w * w * ds_dphi;

    BetaTerms {
        s: ScalarTerms { value, d1, d2, d3 },
        d_logphi: phi * dvalue_dphi,
        d2_logphi: phi * dd2_dphi,
    }
}

fn check_open_unit(y: f64, what: &str) -> Result<()> {
    if y > 0.0 && y < 1.0 {
        Ok(())
    } else {
        Err(GllvmError::Domain(format!("{what} must lie in (0,1), got {y}")))
    }
}

fn check_phi(phi: f64) -> Result<()> {
    if phi > 0.0 && phi.is_finite() {
        Ok(())
    } else {
        Err(GllvmError::Parameter(format!("precision must be positive, got {phi}")))
    }
}

fn check_increasing(cutoffs: &[f64]) -> Result<()> {
    if cutoffs.iter().any(|c| !c.is_finite()) || cutoffs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(GllvmError::Parameter(format!(
            "cutoffs must be finite and strictly increasing, got {cutoffs:?}"
        )));
    }
    Ok(())
}

/// Beta log-density of `y` with mean logistic(`eta`) and precision `phi`.
/// Auxiliary slot 0 is log φ.
pub fn beta_logpdf(y: f64, eta: f64, phi: f64) -> Result<DerivativeBundle> {
    check_open_unit(y, "beta response")?;
    check_phi(phi)?;
    Ok(beta_bundle(y, eta, phi))
}

fn beta_bundle(y: f64, eta: f64, phi: f64) -> DerivativeBundle {
    let bt = beta_terms(y, eta, phi);
    let mut out = DerivativeBundle::zeros(1);
    out.add_part(Part::Mean, &bt.s);
    out.d_aux[0] = bt.d_logphi;
    out.d2_aux[0] = bt.d2_logphi;
    out
}

// ---------------------------------------------------------------------------
// Interval probabilities P = σ(c_hi − η) − σ(c_lo − η)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct IntervalTerms {
    s: ScalarTerms,
    /// ∂ log P / ∂ c_hi, ∂ ℓ'' / ∂ c_hi
    d_hi: f64,
    d2_hi: f64,
    d_lo: f64,
    d2_lo: f64,
}

/// Log-probability that a logistic latent variable centred at `eta` falls
/// between `lo` and `hi` (either may be absent for an open end).
///
/// P is factored as σ(u)·σ(−l)·(1 − e^{l−u}) with u = hi − η, l = lo − η, so
/// the log never suffers cancellation even when the cutoffs are close.
fn interval_terms(hi: Option<f64>, lo: Option<f64>, eta: f64) -> IntervalTerms {
    let u = hi.map(|c| c - eta);
    let l = lo.map(|c| c - eta);
    let (log_p, r_hi, r_lo) = match (u, l) {
        (Some(u), Some(l)) => {
            let log_d = (-(l - u).exp_m1()).ln();
            let log_p = log_logistic(u) + log_logistic(-l) + log_d;
            let r_hi = (log_logistic(-u) - log_logistic(-l) - log_d).exp();
            let r_lo = (log_logistic(l) - log_logistic(u) - log_d).exp();
            (log_p, r_hi, r_lo)
        }
        (Some(u), None) => (log_logistic(u), logistic(-u), 0.0),
        (None, Some(l)) => (log_logistic(-l), 0.0, logistic(l)),
        (None, None) => (0.0, 0.0, 0.0),
    };
    // f'(x)/f(x) = 1 − 2F(x); f''(x)/f(x) = (1 − 2F)² − 2F(1 − F)
    let slope = |x: Option<f64>| x.map_or(0.0, |x| 1.0 - 2.0 * logistic(x));
    let curv = |x: Option<f64>| {
        x.map_or(0.0, |x| {
            let f = logistic(x);
            (1.0 - 2.0 * f).powi(2) - 2.0 * f * (1.0 - f)
        })
    };
    let (s_hi, s_lo) = (slope(u), slope(l));
    let (g_hi, g_lo) = (curv(u), curv(l));

    // Ratios P^{(k)}/P with respect to η.
    let h1 = -(r_hi - r_lo);
    let h2 = r_hi * s_hi - r_lo * s_lo;
    let h3 = -(r_hi * g_hi - r_lo * g_lo);

    let d1 = h1;
    let d2 = h2 - h1 * h1;
    let d3 = h3 - 3.0 * h2 * h1 + 2.0 * h1.powi(3);

    // ∂ℓ''/∂c from (P_c, P'_c, P''_c)/P.
    let dcurv = |q: f64, q1: f64, q2: f64| q2 - h2 * q - 2.0 * h1 * q1 + 2.0 * h1 * h1 * q;
    let d2_hi = dcurv(r_hi, -r_hi * s_hi, r_hi * g_hi);
    let d2_lo = dcurv(-r_lo, r_lo * s_lo, -r_lo * g_lo);

    IntervalTerms {
        s: ScalarTerms { value: log_p, d1, d2, d3 },
        d_hi: r_hi,
        d2_hi,
        d_lo: -r_lo,
        d2_lo,
    }
}

// ---------------------------------------------------------------------------
// Families
// ---------------------------------------------------------------------------

/// Zero/one hurdle with beta interior. Auxiliary slot 0 is log φ.
pub fn hurdle_beta_logpdf(y: f64, p: &CellParams, parts: HurdleParts) -> Result<DerivativeBundle> {
    if !(0.0..=1.0).contains(&y) {
        return Err(GllvmError::Domain(format!("cover must lie in [0,1], got {y}")));
    }
    if y == 1.0 && parts == HurdleParts::ZerosOnly {
        return Err(GllvmError::Domain("y = 1 is not supported by a zeros-only hurdle".into()));
    }
    check_phi(p.phi)?;
    Ok(hurdle_bundle(y, p, parts))
}

fn hurdle_bundle(y: f64, p: &CellParams, parts: HurdleParts) -> DerivativeBundle {
    let mut out = DerivativeBundle::zeros(1);
    if y == 0.0 {
        out.add_part(Part::Zero, &log_logistic_terms(p.eta0, 1.0));
        return out;
    }
    out.add_part(Part::Zero, &log_logistic_terms(p.eta0, -1.0));
    if y == 1.0 {
        out.add_part(Part::One, &log_logistic_terms(p.eta1, 1.0));
        return out;
    }
    if parts == HurdleParts::ZerosAndOnes {
        out.add_part(Part::One, &log_logistic_terms(p.eta1, -1.0));
    }
    let bt = beta_terms(y, p.eta, p.phi);
    out.add_part(Part::Mean, &bt.s);
    out.d_aux[0] = bt.d_logphi;
    out.d2_aux[0] = bt.d2_logphi;
    out
}

/// Ordered beta. Auxiliary slots: log φ, ζ0, ζ1.
pub fn ordered_beta_logpdf(y: f64, p: &CellParams) -> Result<DerivativeBundle> {
    if !(0.0..=1.0).contains(&y) {
        return Err(GllvmError::Domain(format!("cover must lie in [0,1], got {y}")));
    }
    if p.cutoffs.len() != 2 {
        return Err(GllvmError::Parameter("ordered beta needs exactly two cutoffs".into()));
    }
    check_increasing(p.cutoffs)?;
    check_phi(p.phi)?;
    Ok(ordered_bundle(y, p))
}

fn ordered_bundle(y: f64, p: &CellParams) -> DerivativeBundle {
    let (z0, z1) = (p.cutoffs[0], p.cutoffs[1]);
    let mut out = DerivativeBundle::zeros(3);
    if y == 0.0 {
        let it = interval_terms(Some(z0), None, p.eta);
        out.add_part(Part::Mean, &it.s);
        out.d_aux[1] = it.d_hi;
        out.d2_aux[1] = it.d2_hi;
    } else if y == 1.0 {
        let it = interval_terms(None, Some(z1), p.eta);
        out.add_part(Part::Mean, &it.s);
        out.d_aux[2] = it.d_lo;
        out.d2_aux[2] = it.d2_lo;
    } else {
        let it = interval_terms(Some(z1), Some(z0), p.eta);
        out.add_part(Part::Mean, &it.s);
        out.d_aux[1] = it.d_lo;
        out.d2_aux[1] = it.d2_lo;
        out.d_aux[2] = it.d_hi;
        out.d2_aux[2] = it.d2_hi;
        let bt = beta_terms(y, p.eta, p.phi);
        out.add_part(Part::Mean, &bt.s);
        out.d_aux[0] = bt.d_logphi;
        out.d2_aux[0] = bt.d2_logphi;
    }
    out
}

/// Cumulative logit for class labels 1..=K+1 where K = `p.cutoffs.len()`.
pub fn cumulative_logit_logpmf(class: usize, p: &CellParams) -> Result<DerivativeBundle> {
    let k = p.cutoffs.len();
    if class < 1 || class > k + 1 {
        return Err(GllvmError::Domain(format!("class {class} outside 1..={}", k + 1)));
    }
    check_increasing(p.cutoffs)?;
    Ok(cumulative_bundle(class, p))
}

fn cumulative_bundle(class: usize, p: &CellParams) -> DerivativeBundle {
    let k = p.cutoffs.len();
    let hi = (class <= k).then(|| p.cutoffs[class - 1]);
    let lo = (class >= 2).then(|| p.cutoffs[class - 2]);
    let it = interval_terms(hi, lo, p.eta);
    let mut out = DerivativeBundle::zeros(k);
    out.add_part(Part::Mean, &it.s);
    if hi.is_some() {
        out.d_aux[class - 1] = it.d_hi;
        out.d2_aux[class - 1] = it.d2_hi;
    }
    if lo.is_some() {
        out.d_aux[class - 2] = it.d_lo;
        out.d2_aux[class - 2] = it.d2_lo;
    }
    out
}

/// Bernoulli with logit link.
pub fn bernoulli_logpmf(y: f64, eta: f64) -> Result<DerivativeBundle> {
    if y != 0.0 && y != 1.0 {
        return Err(GllvmError::Domain(format!("bernoulli response must be 0 or 1, got {y}")));
    }
    Ok(bernoulli_bundle(y, eta))
}

fn bernoulli_bundle(y: f64, eta: f64) -> DerivativeBundle {
    let sign = if y == 1.0 { 1.0 } else { -1.0 };
    let mut out = DerivativeBundle::zeros(0);
    out.add_part(Part::Mean, &log_logistic_terms(eta, sign));
    out
}

/// Unchecked dispatch used on validated data inside the estimator. Ordinal
/// labels are passed as their integral `f64` value.
pub(crate) fn log_density_unchecked(
    family: Family,
    y: f64,
    p: &CellParams,
    parts: HurdleParts,
) -> DerivativeBundle {
    match family {
        Family::BetaShifted => beta_bundle(y, p.eta, p.phi),
        Family::HurdleBeta => hurdle_bundle(y, p, parts),
        Family::OrderedBeta => ordered_bundle(y, p),
        Family::CumulativeLogit => cumulative_bundle(y as usize, p),
        Family::Bernoulli => bernoulli_bundle(y, p.eta),
    }
}

/// Checked dispatch over all families.
pub fn log_density(family: Family, y: f64, p: &CellParams, parts: HurdleParts) -> Result<DerivativeBundle> {
    match family {
        Family::BetaShifted => beta_logpdf(y, p.eta, p.phi),
        Family::HurdleBeta => hurdle_beta_logpdf(y, p, parts),
        Family::OrderedBeta => ordered_beta_logpdf(y, p),
        Family::CumulativeLogit => {
            if y.fract() != 0.0 || y < 1.0 {
                return Err(GllvmError::Domain(format!("class label must be a positive integer, got {y}")));
            }
            cumulative_logit_logpmf(y as usize, p)
        }
        Family::Bernoulli => bernoulli_logpmf(y, p.eta),
    }
}

/// Expected response on the cover scale.
pub fn mean_response(family: Family, p: &CellParams, parts: HurdleParts) -> Result<f64> {
    let mu = logistic(p.eta);
    match family {
        Family::BetaShifted | Family::Bernoulli => Ok(mu),
        Family::HurdleBeta => {
            let mu0 = logistic(p.eta0);
            Ok(match parts {
                HurdleParts::ZerosOnly => (1.0 - mu0) * mu,
                HurdleParts::ZerosAndOnes => {
                    let mu1 = logistic(p.eta1);
                    (1.0 - mu0) * (mu1 + (1.0 - mu1) * mu)
                }
            })
        }
        Family::OrderedBeta => {
            let (r0, r1) = ordered_masses(p)?;
            Ok((r1 - r0) * mu + (1.0 - r1))
        }
        Family::CumulativeLogit => Err(GllvmError::Unsupported(
            "expected cover is not defined for ordinal classes".into(),
        )),
    }
}

fn ordered_masses(p: &CellParams) -> Result<(f64, f64)> {
    if p.cutoffs.len() != 2 {
        return Err(GllvmError::Parameter("ordered beta needs exactly two cutoffs".into()));
    }
    Ok((logistic(p.cutoffs[0] - p.eta), logistic(p.cutoffs[1] - p.eta)))
}

/// Probability that the response is nonzero (present).
pub fn presence_probability(family: Family, p: &CellParams) -> Result<f64> {
    match family {
        Family::HurdleBeta => Ok(1.0 - logistic(p.eta0)),
        Family::OrderedBeta => Ok(logistic(p.eta - p.cutoffs[0])),
        Family::CumulativeLogit => {
            let c1 = *p
                .cutoffs
                .first()
                .ok_or_else(|| GllvmError::Parameter("cumulative logit needs cutoffs".into()))?;
            Ok(logistic(p.eta - c1))
        }
        Family::Bernoulli => Ok(logistic(p.eta)),
        Family::BetaShifted => Err(GllvmError::Unsupported(
            "presence probability is undefined for the shifted beta family".into(),
        )),
    }
}

fn sample_beta<R: Rng + ?Sized>(mu: f64, phi: f64, rng: &mut R) -> f64 {
    let a = (mu * phi).max(f64::MIN_POSITIVE);
    let b = ((1.0 - mu) * phi).max(f64::MIN_POSITIVE);
    let x = Gamma::new(a, 1.0).expect("positive shape").sample(rng);
    let z = Gamma::new(b, 1.0).expect("positive shape").sample(rng);
    let y = if x + z > 0.0 { x / (x + z) } else if a >= b { 1.0 } else { 0.0 };
    y.clamp(SAMPLE_INTERIOR_EPS, 1.0 - SAMPLE_INTERIOR_EPS)
}

/// Draw one response. Cumulative-logit draws are class labels.
pub fn sample<R: Rng + ?Sized>(family: Family, p: &CellParams, parts: HurdleParts, rng: &mut R) -> f64 {
    match family {
        Family::BetaShifted => sample_beta(logistic(p.eta), p.phi, rng),
        Family::Bernoulli => f64::from(u8::from(rng.random::<f64>() < logistic(p.eta))),
        Family::HurdleBeta => {
            if rng.random::<f64>() < logistic(p.eta0) {
                0.0
            } else if parts == HurdleParts::ZerosAndOnes && rng.random::<f64>() < logistic(p.eta1) {
                1.0
            } else {
                sample_beta(logistic(p.eta), p.phi, rng)
            }
        }
        Family::OrderedBeta => {
            let r0 = logistic(p.cutoffs[0] - p.eta);
            let r1 = logistic(p.cutoffs[1] - p.eta);
            let u = rng.random::<f64>();
            if u < r0 {
                0.0
            } else if u >= r1 {
                1.0
            } else {
                sample_beta(logistic(p.eta), p.phi, rng)
            }
        }
        Family::CumulativeLogit => {
            let u = rng.random::<f64>();
            let class = p
                .cutoffs
                .iter()
                .position(|&c| u < logistic(c - p.eta))
                .map_or(p.cutoffs.len() + 1, |k| k + 1);
            class as f64
        }
    }
}
