use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{GllvmError, Result};
use crate::exec::Execution;
use crate::model::{ResponseKind, ResponseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    BrayCurtis,
    Jaccard,
}

impl std::str::FromStr for Metric {
    type Err = GllvmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bray-curtis" | "bray" => Ok(Metric::BrayCurtis),
            "jaccard" => Ok(Metric::Jaccard),
            other => Err(GllvmError::Parse(format!("unknown dissimilarity '{other}'"))),
        }
    }
}

/// Symmetric n × n dissimilarities in [0, 1] with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissimilarityMatrix {
    values: Array2<f64>,
    metric: Metric,
}

impl DissimilarityMatrix {
    pub fn new(values: Array2<f64>, metric: Metric) -> Result<Self> {
        let (n, c) = values.dim();
        if n != c || n == 0 {
            return Err(GllvmError::Dimension(format!("dissimilarities must be square, got {n}x{c}")));
        }
        for a in 0..n {
            if values[(a, a)] != 0.0 {
                return Err(GllvmError::Validation("dissimilarity diagonal must be zero".into()));
            }
            for b in 0..a {
                let v = values[(a, b)];
                if v != values[(b, a)] || !(0.0..=1.0).contains(&v) {
                    return Err(GllvmError::Validation(format!("invalid dissimilarity at ({a}, {b})")));
                }
            }
        }
        Ok(DissimilarityMatrix { values, metric })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}

fn pair(metric: Metric, data: &ResponseMatrix, a: usize, b: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..data.n_species() {
        let (Some(x), Some(y)) = (data.get(a, j), data.get(b, j)) else { continue };
        match metric {
            Metric::BrayCurtis => {
                num += (x - y).abs();
                den += x + y;
            }
            Metric::Jaccard => {
                let (px, py) = (x > 0.0, y > 0.0);
                if px || py {
                    den += 1.0;
                    if !(px && py) {
                        num += 1.0;
                    }
                }
            }
        }
    }
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Bray–Curtis on cover values or Jaccard on presence–absence. Species
/// missing in either row are skipped; empty rows are at distance 0 from each
/// other.
pub fn dissimilarity(data: &ResponseMatrix, metric: Metric, exec: Execution) -> Result<DissimilarityMatrix> {
    if data.kind() != ResponseKind::Cover {
        return Err(GllvmError::Validation("dissimilarities need cover data".into()));
    }
    let n = data.n_sites();
    let rows = exec.map_indexed(n, |a| (0..a).map(|b| pair(metric, data, a, b)).collect::<Vec<_>>());
    let mut values = Array2::zeros((n, n));
    for (a, row) in rows.into_iter().enumerate() {
        for (b, v) in row.into_iter().enumerate() {
            values[(a, b)] = v;
            values[(b, a)] = v;
        }
    }
    DissimilarityMatrix::new(values, metric)
}
