//! Data containers, model specification, parameter layout and the shared
//! linear predictor.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::distributions::{Family, HurdleParts, Part};
use crate::error::{GllvmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseKind {
    /// Cover fractions in [0,1].
    Cover,
    /// Positive integer class labels.
    Ordinal,
}

/// Sites × species response table with a mask of observed cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMatrix {
    values: Array2<f64>,
    mask: Array2<bool>,
    site_names: Vec<String>,
    species_names: Vec<String>,
    kind: ResponseKind,
}

fn default_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

impl ResponseMatrix {
    pub fn new(
        values: Array2<f64>,
        mask: Array2<bool>,
        site_names: Vec<String>,
        species_names: Vec<String>,
        kind: ResponseKind,
    ) -> Result<Self> {
        let (n, m) = values.dim();
        if n == 0 || m == 0 {
            return Err(GllvmError::Dimension("response matrix must be non-empty".into()));
        }
        if mask.dim() != (n, m) || site_names.len() != n || species_names.len() != m {
            return Err(GllvmError::Dimension(format!(
                "values {n}x{m}, mask {:?}, {} site names, {} species names",
                mask.dim(),
                site_names.len(),
                species_names.len()
            )));
        }
        let mut values = values;
        for ((i, j), v) in values.indexed_iter_mut() {
            if !mask[(i, j)] {
                *v = 0.0;
                continue;
            }
            let ok = match kind {
                ResponseKind::Cover => (0.0..=1.0).contains(v),
                ResponseKind::Ordinal => *v >= 1.0 && v.fract() == 0.0,
            };
            if !ok {
                return Err(GllvmError::Domain(format!(
                    "invalid {kind:?} value {v} at site '{}', species '{}'",
                    site_names[i], species_names[j]
                )));
            }
        }
        if let Some(j) = (0..m).find(|&j| !mask.column(j).iter().any(|&b| b)) {
            return Err(GllvmError::Validation(format!(
                "species '{}' has no observed cells",
                species_names[j]
            )));
        }
        Ok(ResponseMatrix { values, mask, site_names, species_names, kind })
    }

    /// Fully observed matrix with generated names.
    pub fn from_values(values: Array2<f64>, kind: ResponseKind) -> Result<Self> {
        let (n, m) = values.dim();
        let mask = Array2::from_elem((n, m), true);
        Self::new(values, mask, default_names("site", n), default_names("sp", m), kind)
    }

    pub fn n_sites(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_species(&self) -> usize {
        self.values.ncols()
    }

    pub fn kind(&self) -> ResponseKind {
        self.kind
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn site_names(&self) -> &[String] {
        &self.site_names
    }

    pub fn species_names(&self) -> &[String] {
        &self.species_names
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.mask[(i, j)].then(|| self.values[(i, j)])
    }

    /// Observed values of species `j`.
    pub fn observed_column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.column(j).into_iter().zip(self.mask.column(j)).filter(|(_, &m)| m).map(|(&v, _)| v)
    }

    /// Copy with the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let values = self.values.select(ndarray::Axis(0), rows);
        let mask = self.mask.select(ndarray::Axis(0), rows);
        let names = rows.iter().map(|&r| self.site_names[r].clone()).collect();
        Self::new(values, mask, names, self.species_names.clone(), self.kind)
    }

    /// Same cells, new values and kind (used for derived data views).
    pub fn with_values(&self, values: Array2<f64>, kind: ResponseKind) -> Result<Self> {
        Self::new(values, self.mask.clone(), self.site_names.clone(), self.species_names.clone(), kind)
    }

    pub fn max_label(&self) -> usize {
        self.values
            .iter()
            .zip(self.mask.iter())
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v as usize)
            .max()
            .unwrap_or(0)
    }
}

/// Sites × covariates design (no intercept column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateMatrix {
    values: Array2<f64>,
    names: Vec<String>,
}

impl CovariateMatrix {
    pub fn new(values: Array2<f64>, names: Vec<String>) -> Result<Self> {
        if values.ncols() != names.len() {
            return Err(GllvmError::Dimension(format!(
                "{} covariate columns but {} names",
                values.ncols(),
                names.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GllvmError::Validation("covariates contain non-finite values".into()));
        }
        Ok(CovariateMatrix { values, names })
    }

    /// Intercept-only design for `n` sites.
    pub fn empty(n: usize) -> Self {
        CovariateMatrix { values: Array2::zeros((n, 0)), names: Vec::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        CovariateMatrix { values: self.values.select(ndarray::Axis(0), rows), names: self.names.clone() }
    }

    /// Drop a named column (e.g. a year column used only for splitting).
    pub fn without(&self, name: &str) -> Self {
        let keep: Vec<usize> = (0..self.names.len()).filter(|&k| self.names[k] != name).collect();
        CovariateMatrix {
            values: self.values.select(ndarray::Axis(1), &keep),
            names: keep.iter().map(|&k| self.names[k].clone()).collect(),
        }
    }

    pub fn column(&self, name: &str) -> Option<ndarray::ArrayView1<'_, f64>> {
        self.names.iter().position(|n| n == name).map(|k| self.values.column(k))
    }
}

/// Assignment of response rows to latent units. Several rows (e.g. repeated
/// years of one transect) may share one latent score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentUnits {
    unit_of_row: Vec<usize>,
    names: Vec<String>,
}

impl LatentUnits {
    /// One unit per row.
    pub fn identity(row_names: &[String]) -> Self {
        LatentUnits { unit_of_row: (0..row_names.len()).collect(), names: row_names.to_vec() }
    }

    /// Build from a per-row unit label, units numbered in order of first appearance.
    pub fn from_labels(labels: &[String]) -> Self {
        let mut names: Vec<String> = Vec::new();
        let unit_of_row = labels
            .iter()
            .map(|l| match names.iter().position(|n| n == l) {
                Some(k) => k,
                None => {
                    names.push(l.clone());
                    names.len() - 1
                }
            })
            .collect();
        LatentUnits { unit_of_row, names }
    }

    pub fn n_units(&self) -> usize {
        self.names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.unit_of_row.len()
    }

    pub fn unit_of_row(&self) -> &[usize] {
        &self.unit_of_row
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Rows belonging to each unit.
    pub fn rows_by_unit(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_units()];
        for (r, &u) in self.unit_of_row.iter().enumerate() {
            out[u].push(r);
        }
        out
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let labels: Vec<String> = rows.iter().map(|&r| self.names[self.unit_of_row[r]].clone()).collect();
        Self::from_labels(&labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffMode {
    #[default]
    SpeciesSpecific,
    /// Cumulative logit: one cutoff set for all species (first cutoff pinned
    /// at 0, species intercepts free). Ordered beta: shared upper cutoff.
    Common,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub latent_dim: usize,
    pub row_effects: bool,
    pub hurdle_parts: HurdleParts,
    pub cutoff_mode: CutoffMode,
    /// Upper class bounds used to turn cover into classes.
    pub ordinal_bounds: Option<Vec<f64>>,
    /// N in the boundary shift; `None` uses the number of rows.
    pub shift_n: Option<u32>,
    pub pooled_precision: bool,
}

impl ModelSpec {
    pub fn new(family: Family, latent_dim: usize) -> Self {
        ModelSpec {
            family,
            latent_dim,
            row_effects: false,
            hurdle_parts: HurdleParts::ZerosAndOnes,
            cutoff_mode: CutoffMode::SpeciesSpecific,
            ordinal_bounds: None,
            shift_n: None,
            pooled_precision: false,
        }
    }

    pub fn parts(&self) -> &'static [Part] {
        self.family.parts(self.hurdle_parts)
    }

    pub fn has_intercept(&self) -> bool {
        !(self.family == Family::CumulativeLogit && self.cutoff_mode == CutoffMode::SpeciesSpecific)
    }
}

/// Coefficient block for one linear predictor part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub part: Part,
    pub intercepts: Array1<f64>,
    /// m × q
    pub slopes: Array2<f64>,
    /// m × d
    pub loadings: Array2<f64>,
}

impl Coefficients {
    pub fn zeros(part: Part, m: usize, q: usize, d: usize) -> Self {
        Coefficients {
            part,
            intercepts: Array1::zeros(m),
            slopes: Array2::zeros((m, q)),
            loadings: Array2::zeros((m, d)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Thresholds {
    None,
    /// Cumulative-logit cutoffs: one row per species, or a single common row.
    Ordinal(Vec<Vec<f64>>),
    /// Ordered-beta cutoffs ζ0 (per species) and ζ1 (per species or common).
    Ordered { lower: Vec<f64>, upper: Vec<f64> },
}

impl Thresholds {
    /// Cutoffs seen by species `j`, written into `buf`.
    pub fn for_species(&self, j: usize, buf: &mut Vec<f64>) {
        buf.clear();
        match self {
            Thresholds::None => {}
            Thresholds::Ordinal(rows) => buf.extend_from_slice(&rows[if rows.len() == 1 { 0 } else { j }]),
            Thresholds::Ordered { lower, upper } => {
                buf.push(lower[j]);
                buf.push(upper[if upper.len() == 1 { 0 } else { j }]);
            }
        }
    }

    fn zeroed(&self) -> Thresholds {
        match self {
            Thresholds::None => Thresholds::None,
            Thresholds::Ordinal(rows) => Thresholds::Ordinal(rows.iter().map(|r| vec![0.0; r.len()]).collect()),
            Thresholds::Ordered { lower, upper } => {
                Thresholds::Ordered { lower: vec![0.0; lower.len()], upper: vec![0.0; upper.len()] }
            }
        }
    }
}

/// Every model parameter on its natural scale.
///
/// The same shape is reused to carry gradients with respect to the natural
/// parameters before they are pulled back to the free vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub parts: Vec<Coefficients>,
    /// log φ_j (length m), a single pooled value, or empty.
    pub log_precisions: Vec<f64>,
    pub thresholds: Thresholds,
    pub row_effects: Option<Array1<f64>>,
}

impl ParameterSet {
    pub fn coefficients(&self, part: Part) -> Option<&Coefficients> {
        self.parts.iter().find(|c| c.part == part)
    }

    pub fn phi(&self, j: usize) -> f64 {
        match self.log_precisions.len() {
            0 => 1.0,
            1 => self.log_precisions[0].exp(),
            _ => self.log_precisions[j].exp(),
        }
    }

    /// Zero-valued copy with identical shape.
    pub fn zeros_like(&self) -> ParameterSet {
        ParameterSet {
            parts: self
                .parts
                .iter()
                .map(|c| {
                    Coefficients::zeros(c.part, c.intercepts.len(), c.slopes.ncols(), c.loadings.ncols())
                })
                .collect(),
            log_precisions: vec![0.0; self.log_precisions.len()],
            thresholds: self.thresholds.zeroed(),
            row_effects: self.row_effects.as_ref().map(|a| Array1::zeros(a.len())),
        }
    }

    pub fn is_finite(&self) -> bool {
        let coef_ok = self.parts.iter().all(|c| {
            c.intercepts.iter().chain(c.slopes.iter()).chain(c.loadings.iter()).all(|v| v.is_finite())
        });
        let thr_ok = match &self.thresholds {
            Thresholds::None => true,
            Thresholds::Ordinal(rows) => rows.iter().flatten().all(|v| v.is_finite()),
            Thresholds::Ordered { lower, upper } => lower.iter().chain(upper).all(|v| v.is_finite()),
        };
        coef_ok
            && thr_ok
            && self.log_precisions.iter().all(|v| v.is_finite())
            && self.row_effects.as_ref().is_none_or(|a| a.iter().all(|v| v.is_finite()))
    }
}

/// Sizes that fix the parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_rows: usize,
    pub n_species: usize,
    pub n_covariates: usize,
    /// Number of cumulative-logit cutoffs K (classes = K + 1); 0 otherwise.
    pub n_cutoffs: usize,
}

/// Map between [`ParameterSet`] and the unconstrained free vector.
///
/// Encodings: the first part's loading matrix has a zero upper triangle and a
/// log-encoded diagonal; precisions are stored as logs; ordered cutoffs as a
/// first value followed by log increments; row effects as n − 1 values with
/// the last one completing a zero sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterLayout {
    pub spec: ModelSpec,
    pub dims: Dims,
}

impl ParameterLayout {
    pub fn new(spec: &ModelSpec, dims: Dims) -> Result<Self> {
        if spec.latent_dim > dims.n_species {
            return Err(GllvmError::Dimension(format!(
                "latent dimension {} exceeds the number of species {}",
                spec.latent_dim, dims.n_species
            )));
        }
        if spec.family == Family::CumulativeLogit && dims.n_cutoffs == 0 {
            return Err(GllvmError::Dimension("cumulative logit needs at least two classes".into()));
        }
        Ok(ParameterLayout { spec: spec.clone(), dims })
    }

    fn m(&self) -> usize {
        self.dims.n_species
    }

    fn d(&self) -> usize {
        self.spec.latent_dim
    }

    fn n_precisions(&self) -> usize {
        match (self.spec.family.has_precision(), self.spec.pooled_precision) {
            (false, _) => 0,
            (true, true) => 1,
            (true, false) => self.m(),
        }
    }

    fn constrained(part_index: usize) -> bool {
        part_index == 0
    }

    pub fn n_free(&self) -> usize {
        let (m, q, d) = (self.m(), self.dims.n_covariates, self.d());
        let constrained_loadings: usize = (0..m).map(|j| (j + 1).min(d)).sum();
        let mut total = 0;
        for (k, _) in self.spec.parts().iter().enumerate() {
            if self.spec.has_intercept() {
                total += m;
            }
            total += m * q;
            total += if Self::constrained(k) { constrained_loadings } else { m * d };
        }
        total += self.n_precisions();
        total += match self.spec.family {
            Family::CumulativeLogit => match self.spec.cutoff_mode {
                CutoffMode::SpeciesSpecific => m * self.dims.n_cutoffs,
                CutoffMode::Common => self.dims.n_cutoffs - 1,
            },
            Family::OrderedBeta => match self.spec.cutoff_mode {
                CutoffMode::SpeciesSpecific => 2 * m,
                CutoffMode::Common => m + 1,
            },
            _ => 0,
        };
        if self.spec.row_effects {
            total += self.dims.n_rows.saturating_sub(1);
        }
        total
    }

    /// Zero-initialised parameter set of the right shape (with valid
    /// cutoffs 0, 1, 2, ... and unit loading diagonal).
    pub fn template(&self) -> ParameterSet {
        let (m, q, d) = (self.m(), self.dims.n_covariates, self.d());
        let parts = self
            .spec
            .parts()
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let mut c = Coefficients::zeros(p, m, q, d);
                if Self::constrained(k) {
                    for i in 0..d.min(m) {
                        c.loadings[(i, i)] = 1.0;
                    }
                }
                c
            })
            .collect();
        let k = self.dims.n_cutoffs;
        let thresholds = match (self.spec.family, self.spec.cutoff_mode) {
            (Family::CumulativeLogit, CutoffMode::SpeciesSpecific) => {
                Thresholds::Ordinal(vec![(0..k).map(|c| c as f64).collect(); m])
            }
            (Family::CumulativeLogit, CutoffMode::Common) => {
                Thresholds::Ordinal(vec![(0..k).map(|c| c as f64).collect()])
            }
            (Family::OrderedBeta, CutoffMode::SpeciesSpecific) => {
                Thresholds::Ordered { lower: vec![-1.0; m], upper: vec![1.0; m] }
            }
            (Family::OrderedBeta, CutoffMode::Common) => {
                Thresholds::Ordered { lower: vec![-1.0; m], upper: vec![1.0] }
            }
            _ => Thresholds::None,
        };
        ParameterSet {
            parts,
            log_precisions: vec![0.0; self.n_precisions()],
            thresholds,
            row_effects: self.spec.row_effects.then(|| Array1::zeros(self.dims.n_rows)),
        }
    }

    /// Check shapes and constraints of `params` against this layout.
    pub fn check(&self, params: &ParameterSet) -> Result<()> {
        self.check_shape(params)?;
        self.check_constraints(params)
    }

    /// Shapes and finiteness only; the objective is defined for any such set.
    pub fn check_shape(&self, params: &ParameterSet) -> Result<()> {
        let t = self.template();
        let shape_ok = params.parts.len() == t.parts.len()
            && params.parts.iter().zip(&t.parts).all(|(a, b)| {
                a.part == b.part
                    && a.intercepts.len() == b.intercepts.len()
                    && a.slopes.dim() == b.slopes.dim()
                    && a.loadings.dim() == b.loadings.dim()
            })
            && params.log_precisions.len() == t.log_precisions.len()
            && params.row_effects.as_ref().map(|a| a.len()) == t.row_effects.as_ref().map(|a| a.len());
        if !shape_ok {
            return Err(GllvmError::Dimension("parameter set does not match the model layout".into()));
        }
        if !params.is_finite() {
            return Err(GllvmError::Validation("parameters contain non-finite values".into()));
        }
        let cutoff_shape_ok = match (&params.thresholds, &t.thresholds) {
            (Thresholds::None, Thresholds::None) => true,
            (Thresholds::Ordinal(a), Thresholds::Ordinal(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.len() == y.len())
            }
            (Thresholds::Ordered { lower, upper }, Thresholds::Ordered { lower: l2, upper: u2 }) => {
                lower.len() == l2.len() && upper.len() == u2.len()
            }
            _ => false,
        };
        if !cutoff_shape_ok {
            return Err(GllvmError::Dimension("cutoff shape mismatch".into()));
        }
        Ok(())
    }

    fn check_constraints(&self, params: &ParameterSet) -> Result<()> {
        let first = &params.parts[0].loadings;
        for j in 0..self.m() {
            for k in 0..self.d() {
                if k > j && first[(j, k)] != 0.0 {
                    return Err(GllvmError::Parameter("loading upper triangle must be zero".into()));
                }
                if k == j && first[(j, k)] <= 0.0 {
                    return Err(GllvmError::Parameter("loading diagonal must be positive".into()));
                }
            }
        }
        match &params.thresholds {
            Thresholds::None => {}
            Thresholds::Ordinal(a) => {
                if a.iter().any(|r| r.windows(2).any(|w| w[1] <= w[0])) {
                    return Err(GllvmError::Parameter("cutoffs must be strictly increasing".into()));
                }
                if self.spec.cutoff_mode == CutoffMode::Common && a[0][0] != 0.0 {
                    return Err(GllvmError::Parameter("first common cutoff must be 0".into()));
                }
            }
            Thresholds::Ordered { lower, upper } => {
                for j in 0..lower.len() {
                    if upper[if upper.len() == 1 { 0 } else { j }] <= lower[j] {
                        return Err(GllvmError::Parameter("ordered cutoffs must satisfy ζ0 < ζ1".into()));
                    }
                }
            }
        }
        if let Some(a) = &params.row_effects {
            if a.sum().abs() > 1e-8 * (1.0 + a.iter().map(|v| v.abs()).sum::<f64>()) {
                return Err(GllvmError::Parameter("row effects must sum to zero".into()));
            }
        }
        Ok(())
    }

    pub fn pack(&self, params: &ParameterSet) -> Result<Vec<f64>> {
        self.check(params)?;
        let (m, d) = (self.m(), self.d());
        let mut out = Vec::with_capacity(self.n_free());
        for (k, c) in params.parts.iter().enumerate() {
            if self.spec.has_intercept() {
                out.extend(c.intercepts.iter());
            }
            out.extend(c.slopes.iter());
            for j in 0..m {
                for l in 0..d {
                    if !Self::constrained(k) || l < j {
                        out.push(c.loadings[(j, l)]);
                    } else if l == j {
                        out.push(c.loadings[(j, l)].ln());
                    }
                }
            }
        }
        out.extend(&params.log_precisions);
        match &params.thresholds {
            Thresholds::None => {}
            Thresholds::Ordinal(rows) => {
                let common = self.spec.cutoff_mode == CutoffMode::Common;
                for r in rows {
                    if !common {
                        out.push(r[0]);
                    }
                    out.extend(r.windows(2).map(|w| (w[1] - w[0]).ln()));
                }
            }
            Thresholds::Ordered { lower, upper } => {
                if upper.len() == 1 {
                    out.push(upper[0]);
                    out.extend(lower.iter().map(|l| (upper[0] - l).ln()));
                } else {
                    for j in 0..lower.len() {
                        out.push(lower[j]);
                        out.push((upper[j] - lower[j]).ln());
                    }
                }
            }
        }
        if let Some(a) = &params.row_effects {
            out.extend(a.iter().take(a.len().saturating_sub(1)));
        }
        debug_assert_eq!(out.len(), self.n_free());
        Ok(out)
    }

    pub fn unpack(&self, free: &[f64]) -> Result<ParameterSet> {
        if free.len() != self.n_free() {
            return Err(GllvmError::Dimension(format!(
                "free vector has length {}, layout needs {}",
                free.len(),
                self.n_free()
            )));
        }
        if free.iter().any(|v| !v.is_finite()) {
            return Err(GllvmError::Validation("free vector contains non-finite values".into()));
        }
        let (m, d) = (self.m(), self.d());
        let mut params = self.template();
        let mut it = free.iter().copied();
        let mut next = || it.next().expect("length checked");
        for (k, c) in params.parts.iter_mut().enumerate() {
            if self.spec.has_intercept() {
                c.intercepts.iter_mut().for_each(|v| *v = next());
            }
            c.slopes.iter_mut().for_each(|v| *v = next());
            for j in 0..m {
                for l in 0..d {
                    c.loadings[(j, l)] = if !Self::constrained(k) || l < j {
                        next()
                    } else if l == j {
                        next().exp()
                    } else {
                        0.0
                    };
                }
            }
        }
        params.log_precisions.iter_mut().for_each(|v| *v = next());
        let common = self.spec.cutoff_mode == CutoffMode::Common;
        match &mut params.thresholds {
            Thresholds::None => {}
            Thresholds::Ordinal(rows) => {
                for r in rows.iter_mut() {
                    r[0] = if common { 0.0 } else { next() };
                    for i in 1..r.len() {
                        r[i] = r[i - 1] + next().exp();
                    }
                }
            }
            Thresholds::Ordered { lower, upper } => {
                if upper.len() == 1 {
                    upper[0] = next();
                    lower.iter_mut().for_each(|l| *l = upper[0] - next().exp());
                } else {
                    for j in 0..lower.len() {
                        lower[j] = next();
                        upper[j] = lower[j] + next().exp();
                    }
                }
            }
        }
        if let Some(a) = &mut params.row_effects {
            let n = a.len();
            let mut sum = 0.0;
            for i in 0..n.saturating_sub(1) {
                a[i] = next();
                sum += a[i];
            }
            if n > 0 {
                a[n - 1] = -sum;
            }
        }
        Ok(params)
    }

    /// Pull a gradient with respect to natural parameters (same shape as
    /// `params`) back to the free vector through the encodings.
    pub fn pull_back(&self, params: &ParameterSet, grad: &ParameterSet) -> Vec<f64> {
        let (m, d) = (self.m(), self.d());
        let mut out = Vec::with_capacity(self.n_free());
        for (k, (c, g)) in params.parts.iter().zip(&grad.parts).enumerate() {
            if self.spec.has_intercept() {
                out.extend(g.intercepts.iter());
            }
            out.extend(g.slopes.iter());
            for j in 0..m {
                for l in 0..d {
                    if !Self::constrained(k) || l < j {
                        out.push(g.loadings[(j, l)]);
                    } else if l == j {
                        out.push(g.loadings[(j, l)] * c.loadings[(j, l)]);
                    }
                }
            }
        }
        out.extend(&grad.log_precisions);
        match (&params.thresholds, &grad.thresholds) {
            (Thresholds::Ordinal(rows), Thresholds::Ordinal(grows)) => {
                let common = self.spec.cutoff_mode == CutoffMode::Common;
                for (r, g) in rows.iter().zip(grows) {
                    // c_i depends on every free slot up to i.
                    let tail: Vec<f64> = {
                        let mut acc = 0.0;
                        let mut t: Vec<f64> = g.iter().rev().map(|v| { acc += v; acc }).collect();
                        t.reverse();
                        t
                    };
                    if !common {
                        out.push(tail[0]);
                    }
                    for i in 1..r.len() {
                        out.push(tail[i] * (r[i] - r[i - 1]));
                    }
                }
            }
            (Thresholds::Ordered { lower, upper }, Thresholds::Ordered { lower: gl, upper: gu }) => {
                if upper.len() == 1 {
                    out.push(gu[0] + gl.iter().sum::<f64>());
                    out.extend(lower.iter().zip(gl).map(|(l, g)| -g * (upper[0] - l)));
                } else {
                    for j in 0..lower.len() {
                        out.push(gl[j] + gu[j]);
                        out.push(gu[j] * (upper[j] - lower[j]));
                    }
                }
            }
            _ => {}
        }
        if let Some(g) = &grad.row_effects {
            let n = g.len();
            if n > 0 {
                let last = g[n - 1];
                out.extend(g.iter().take(n - 1).map(|v| v - last));
            }
        }
        out
    }
}

/// Linear predictor η for one part with per-row latent scores (n × d).
/// Row effects enter the mean part only.
pub fn linear_predictor(
    params: &ParameterSet,
    covariates: &CovariateMatrix,
    scores: ArrayView2<f64>,
    part: Part,
) -> Result<Array2<f64>> {
    let coef = params
        .coefficients(part)
        .ok_or_else(|| GllvmError::Dimension(format!("part {part:?} is not part of this model")))?;
    let n = covariates.n_rows();
    let m = coef.intercepts.len();
    if coef.slopes.dim() != (m, covariates.n_covariates())
        || scores.dim() != (n, coef.loadings.ncols())
        || coef.loadings.nrows() != m
    {
        return Err(GllvmError::Dimension(format!(
            "covariates {n}x{}, scores {:?}, slopes {:?}, loadings {:?}",
            covariates.n_covariates(),
            scores.dim(),
            coef.slopes.dim(),
            coef.loadings.dim()
        )));
    }
    let mut eta = covariates.values().dot(&coef.slopes.t()) + scores.dot(&coef.loadings.t());
    eta += &coef.intercepts;
    if part == Part::Mean {
        if let Some(alpha) = &params.row_effects {
            if alpha.len() != n {
                return Err(GllvmError::Dimension("row effects length differs from rows".into()));
            }
            for (mut row, a) in eta.rows_mut().into_iter().zip(alpha) {
                row += *a;
            }
        }
    }
    if eta.iter().any(|v| !v.is_finite()) {
        return Err(GllvmError::Validation("linear predictor is not finite".into()));
    }
    Ok(eta)
}

/// Per-site latent state of the Gaussian variational approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    /// units × d
    pub means: Array2<f64>,
    pub cov: VariationalCov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariationalCov {
    /// units × d variances.
    Diagonal(Array2<f64>),
    /// One d × d lower-triangular factor L per unit, A = L Lᵀ.
    Full(Vec<Array2<f64>>),
}

impl VariationalState {
    /// Prior-matching state: zero means, identity covariances.
    pub fn prior(units: usize, d: usize, full: bool) -> Self {
        let cov = if full {
            VariationalCov::Full(vec![Array2::eye(d); units])
        } else {
            VariationalCov::Diagonal(Array2::ones((units, d)))
        };
        VariationalState { means: Array2::zeros((units, d)), cov }
    }

    pub fn n_units(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn covariance(&self, i: usize) -> Array2<f64> {
        match &self.cov {
            VariationalCov::Diagonal(v) => Array2::from_diag(&v.row(i)),
            VariationalCov::Full(ls) => ls[i].dot(&ls[i].t()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match &self.cov {
            VariationalCov::Diagonal(v) => {
                v.dim() == self.means.dim() && v.iter().all(|&x| x > 0.0 && x.is_finite())
            }
            VariationalCov::Full(ls) => {
                ls.len() == self.n_units()
                    && ls.iter().all(|l| {
                        l.dim() == (self.dim(), self.dim())
                            && (0..self.dim()).all(|k| l[(k, k)] > 0.0)
                            && l.indexed_iter().all(|((r, c), v)| c <= r || *v == 0.0)
                    })
            }
        };
        if ok && self.means.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(GllvmError::Validation("variational state violates its constraints".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    Warning,
    Fatal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub species: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_fatal(&self) -> bool {
        self.findings.iter().any(|f| f.severity == Severity::Fatal)
    }

    pub fn fatal(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Fatal)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Warning)
    }

    /// True when some species lacks interior observations, in which case
    /// fitting pools the precision parameter.
    pub fn requires_pooled_precision(&self) -> bool {
        self.warnings().any(|f| f.message.contains("precision pooled"))
    }

    fn push(&mut self, severity: Severity, species: Option<&str>, message: impl Into<String>) {
        self.findings.push(Finding { severity, species: species.map(str::to_owned), message: message.into() });
    }

    pub fn summary(&self) -> String {
        self.findings
            .iter()
            .map(|f| match &f.species {
                Some(s) => format!("{:?}: species '{s}': {}", f.severity, f.message),
                None => format!("{:?}: {}", f.severity, f.message),
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Number of ordinal classes implied by the spec and the data.
pub fn n_classes(responses: &ResponseMatrix, spec: &ModelSpec) -> usize {
    spec.ordinal_bounds.as_ref().map_or(0, Vec::len).max(responses.max_label())
}

/// Data checks that must pass before fitting.
pub fn validate(responses: &ResponseMatrix, spec: &ModelSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let family = spec.family;
    let names = responses.species_names();
    let m = responses.n_species();

    let needs_ordinal = family == Family::CumulativeLogit;
    if needs_ordinal != (responses.kind() == ResponseKind::Ordinal) {
        report.push(
            Severity::Fatal,
            None,
            format!("family {family} cannot be fitted to {:?} responses", responses.kind()),
        );
        return report;
    }
    if spec.latent_dim > m {
        report.push(Severity::Fatal, None, "latent dimension exceeds the number of species");
    }

    match family {
        Family::CumulativeLogit => {
            let k1 = n_classes(responses, spec);
            if k1 < 2 {
                report.push(Severity::Fatal, None, "ordinal data need at least two classes");
                return report;
            }
            match spec.cutoff_mode {
                CutoffMode::SpeciesSpecific => {
                    for j in 0..m {
                        let seen: BTreeSet<usize> = responses.observed_column(j).map(|v| v as usize).collect();
                        let missing: Vec<usize> = (1..=k1).filter(|c| !seen.contains(c)).collect();
                        if !missing.is_empty() {
                            report.push(
                                Severity::Fatal,
                                Some(&names[j]),
                                format!("no observation in class level(s) {missing:?}"),
                            );
                        }
                    }
                }
                CutoffMode::Common => {
                    let seen: BTreeSet<usize> = (0..m)
                        .flat_map(|j| responses.observed_column(j).map(|v| v as usize).collect::<Vec<_>>())
                        .collect();
                    let missing: Vec<usize> = (1..=k1).filter(|c| !seen.contains(c)).collect();
                    if !missing.is_empty() {
                        report.push(
                            Severity::Fatal,
                            None,
                            format!("no observation in class level(s) {missing:?} for any species"),
                        );
                    }
                }
            }
        }
        Family::Bernoulli => {
            for j in 0..m {
                if responses.observed_column(j).any(|v| v != 0.0 && v != 1.0) {
                    report.push(Severity::Fatal, Some(&names[j]), "presence-absence data must be 0 or 1");
                }
            }
        }
        Family::HurdleBeta | Family::OrderedBeta => {
            for j in 0..m {
                let col: Vec<f64> = responses.observed_column(j).collect();
                if family == Family::HurdleBeta
                    && spec.hurdle_parts == HurdleParts::ZerosOnly
                    && col.contains(&1.0)
                {
                    report.push(
                        Severity::Fatal,
                        Some(&names[j]),
                        "contains y = 1 but the hurdle has no one-part",
                    );
                }
                if !col.iter().any(|&v| v > 0.0 && v < 1.0) {
                    let what = if col.iter().all(|&v| v == 0.0) { "no nonzero observations" } else { "no interior observations" };
                    report.push(
                        Severity::Warning,
                        Some(&names[j]),
                        format!("{what}: beta part unidentifiable, precision pooled"),
                    );
                }
            }
        }
        Family::BetaShifted => {
            for j in 0..m {
                if responses.observed_column(j).all(|v| v == 0.0) {
                    report.push(Severity::Warning, Some(&names[j]), "no nonzero observations");
                }
            }
        }
    }
    report
}
