//! Predictive metrics per species and per prevalence group.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{GllvmError, Result};
use crate::model::{ResponseKind, ResponseMatrix};

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(GllvmError::Dimension(format!("{} predictions for {} observations", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(GllvmError::Validation("metric of an empty sample".into()));
    }
    Ok(())
}

/// Mean absolute error of prediction.
pub fn maep(pred: &[f64], obs: &[f64]) -> Result<f64> {
    check_pair(pred, obs)?;
    Ok(pred.iter().zip(obs).map(|(p, o)| (p - o).abs()).sum::<f64>() / pred.len() as f64)
}

/// Root mean square error of prediction.
pub fn rmse(pred: &[f64], obs: &[f64]) -> Result<f64> {
    check_pair(pred, obs)?;
    Ok((pred.iter().zip(obs).map(|(p, o)| (p - o).powi(2)).sum::<f64>() / pred.len() as f64).sqrt())
}

/// Mann–Whitney AUC with ties counted ½. `None` when only one class is
/// present.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(GllvmError::Dimension("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(GllvmError::Validation("scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of positives, with mid-ranks for ties (kept integral).
    let mut rank_sum2: u64 = 0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        // ranks start+1 ..= end, midrank × 2 = start + end + 1
        let pos_in_block = idx[start..end].iter().filter(|&&i| labels[i]).count() as u64;
        rank_sum2 += pos_in_block * (start + end + 1) as u64;
        start = end;
    }
    let (p, q) = (n_pos as u64, n_neg as u64);
    let u2 = rank_sum2 - p * (p + 1);
    Ok(Some(u2 as f64 / (2 * p * q) as f64))
}

/// Mean predicted probability among presences minus among absences.
pub fn tjur_r2(probs: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    if probs.len() != labels.len() {
        return Err(GllvmError::Dimension("probabilities and labels differ in length".into()));
    }
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for (p, &l) in probs.iter().zip(labels) {
        if l {
            s1 += p;
            n1 += 1;
        } else {
            s0 += p;
            n0 += 1;
        }
    }
    if n1 == 0 || n0 == 0 {
        return Ok(None);
    }
    Ok(Some(s1 / n1 as f64 - s0 / n0 as f64))
}

fn is_present(kind: ResponseKind, v: f64) -> bool {
    match kind {
        ResponseKind::Cover => v > 0.0,
        ResponseKind::Ordinal => v > 1.0,
    }
}

/// Fraction of nonzero observed cells per species (class > 1 for ordinal data).
pub fn prevalence(data: &ResponseMatrix) -> Vec<f64> {
    (0..data.n_species())
        .map(|j| {
            let (mut present, mut total) = (0usize, 0usize);
            for v in data.observed_column(j) {
                total += 1;
                present += usize::from(is_present(data.kind(), v));
            }
            present as f64 / total as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceGroups {
    pub prevalence: Vec<f64>,
    /// Member species indices of each group, lowest prevalence first.
    pub members: Vec<Vec<usize>>,
    pub group_means: Vec<f64>,
}

impl PrevalenceGroups {
    pub fn group_of(&self, species: usize) -> Option<usize> {
        self.members.iter().position(|g| g.contains(&species))
    }
}

/// Equal-frequency bins of species sorted by prevalence (ties by name).
pub fn prevalence_groups(data: &ResponseMatrix, n_groups: usize) -> Result<PrevalenceGroups> {
    let m = data.n_species();
    if n_groups == 0 || n_groups > m {
        return Err(GllvmError::Parameter(format!("cannot form {n_groups} groups from {m} species")));
    }
    let prev = prevalence(data);
    let names = data.species_names();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| prev[a].total_cmp(&prev[b]).then_with(|| names[a].cmp(&names[b])).then(a.cmp(&b)));
    let members: Vec<Vec<usize>> = (0..n_groups).map(|g| order[g * m / n_groups..(g + 1) * m / n_groups].to_vec()).collect();
    let group_means = members.iter().map(|g| g.iter().map(|&j| prev[j]).sum::<f64>() / g.len() as f64).collect();
    Ok(PrevalenceGroups { prevalence: prev, members, group_means })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesMetrics {
    pub species: String,
    pub prevalence: f64,
    pub maep: Option<f64>,
    pub rmse: Option<f64>,
    pub auc: Option<f64>,
    pub tjur_r2: Option<f64>,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: usize,
    pub mean_prevalence: f64,
    pub n_species: usize,
    pub maep: Option<f64>,
    pub rmse: Option<f64>,
    pub auc: Option<f64>,
    pub tjur_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledMetrics {
    pub maep: Option<f64>,
    pub rmse: Option<f64>,
    pub auc: Option<f64>,
    pub tjur_r2: Option<f64>,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub family: Option<String>,
    pub n_groups: usize,
    pub grouping: String,
    /// Species whose AUC or Tjur R² is undefined on the test cells.
    pub undefined: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub species: Vec<SpeciesMetrics>,
    pub groups: Vec<GroupMetrics>,
    pub pooled: PooledMetrics,
    pub metadata: ReportMetadata,
}

/// Inputs to [`evaluate`]. Predictions are on the held-out rows; the
/// prevalence source is the complete dataset.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationInput<'a> {
    pub observed: &'a ResponseMatrix,
    pub expected: Option<&'a Array2<f64>>,
    pub presence: Option<&'a Array2<f64>>,
    pub prevalence_source: &'a ResponseMatrix,
    pub n_groups: usize,
    pub family: Option<&'a str>,
}

struct Cells {
    obs: Vec<f64>,
    exp: Vec<f64>,
    prob: Vec<f64>,
    label: Vec<bool>,
}

pub fn evaluate(input: EvaluationInput) -> Result<MetricReport> {
    let y = input.observed;
    let (n, m) = (y.n_sites(), y.n_species());
    for a in [input.expected, input.presence].into_iter().flatten() {
        if a.dim() != (n, m) {
            return Err(GllvmError::Dimension(format!("predictions {:?} for observations {n}x{m}", a.dim())));
        }
    }
    if input.expected.is_none() && input.presence.is_none() {
        return Err(GllvmError::Validation("no predictions to evaluate".into()));
    }
    if input.prevalence_source.species_names() != y.species_names() {
        return Err(GllvmError::Validation("prevalence data has different species".into()));
    }
    let groups = prevalence_groups(input.prevalence_source, input.n_groups)?;
    let cells: Vec<Cells> = (0..m)
        .map(|j| {
            let mut c = Cells { obs: vec![], exp: vec![], prob: vec![], label: vec![] };
            for i in 0..n {
                let Some(v) = y.get(i, j) else { continue };
                c.obs.push(v);
                c.label.push(is_present(y.kind(), v));
                if let Some(e) = input.expected {
                    c.exp.push(e[(i, j)]);
                }
                if let Some(p) = input.presence {
                    c.prob.push(p[(i, j)]);
                }
            }
            c
        })
        .collect();
    let has_exp = input.expected.is_some();
    let has_prob = input.presence.is_some();
    let opt = |cond: bool, f: &dyn Fn() -> Result<Option<f64>>| -> Result<Option<f64>> { if cond { f() } else { Ok(None) } };

    let mut species = Vec::with_capacity(m);
    let mut undefined = Vec::new();
    for (j, c) in cells.iter().enumerate() {
        let nonempty = !c.obs.is_empty();
        let maep_j = opt(has_exp && nonempty, &|| maep(&c.exp, &c.obs).map(Some))?;
        let rmse_j = opt(has_exp && nonempty, &|| rmse(&c.exp, &c.obs).map(Some))?;
        let auc_j = opt(has_prob, &|| auc(&c.prob, &c.label))?;
        let tjur_j = opt(has_prob, &|| tjur_r2(&c.prob, &c.label))?;
        if has_prob && (auc_j.is_none() || tjur_j.is_none()) {
            undefined.push(y.species_names()[j].clone());
        }
        species.push(SpeciesMetrics {
            species: y.species_names()[j].clone(),
            prevalence: groups.prevalence[j],
            maep: maep_j,
            rmse: rmse_j,
            auc: auc_j,
            tjur_r2: tjur_j,
            n_test: c.obs.len(),
        });
    }

    let mean_of = |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    let mut group_rows = Vec::with_capacity(groups.members.len());
    for (g, members) in groups.members.iter().enumerate() {
        let (mut probs, mut labels) = (Vec::new(), Vec::new());
        for &j in members {
            if species[j].auc.is_some() {
                probs.extend(&cells[j].prob);
                labels.extend(&cells[j].label);
            }
        }
        group_rows.push(GroupMetrics {
            group: g + 1,
            mean_prevalence: groups.group_means[g],
            n_species: members.len(),
            maep: mean_of(members.iter().filter_map(|&j| species[j].maep).collect()),
            rmse: mean_of(members.iter().filter_map(|&j| species[j].rmse).collect()),
            auc: if has_prob { auc(&probs, &labels)? } else { None },
            tjur_r2: if has_prob { tjur_r2(&probs, &labels)? } else { None },
        });
    }

    let all = |f: fn(&Cells) -> &Vec<f64>| cells.iter().flat_map(|c| f(c).iter().copied()).collect::<Vec<f64>>();
    let (obs, exp, prob) = (all(|c| &c.obs), all(|c| &c.exp), all(|c| &c.prob));
    let labels: Vec<bool> = cells.iter().flat_map(|c| c.label.iter().copied()).collect();
    let pooled = PooledMetrics {
        maep: opt(has_exp && !obs.is_empty(), &|| maep(&exp, &obs).map(Some))?,
        rmse: opt(has_exp && !obs.is_empty(), &|| rmse(&exp, &obs).map(Some))?,
        auc: opt(has_prob, &|| auc(&prob, &labels))?,
        tjur_r2: opt(has_prob, &|| tjur_r2(&prob, &labels))?,
        n_test: obs.len(),
    };
    Ok(MetricReport {
        species,
        groups: group_rows,
        pooled,
        metadata: ReportMetadata {
            family: input.family.map(str::to_owned),
            n_groups: input.n_groups,
            grouping: "equal-frequency prevalence bins".into(),
            undefined,
        },
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl MetricReport {
    pub fn write_species_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["species", "prevalence", "maep", "rmse", "auc", "tjur_r2", "n_test"])?;
        for s in &self.species {
            w.write_record([
                s.species.clone(),
                s.prevalence.to_string(),
                cell(s.maep),
                cell(s.rmse),
                cell(s.auc),
                cell(s.tjur_r2),
                s.n_test.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_groups_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["group", "mean_prevalence", "n_species", "maep", "rmse", "auc", "tjur_r2"])?;
        for g in &self.groups {
            w.write_record([
                g.group.to_string(),
                g.mean_prevalence.to_string(),
                g.n_species.to_string(),
                cell(g.maep),
                cell(g.rmse),
                cell(g.auc),
                cell(g.tjur_r2),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
