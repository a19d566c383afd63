use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, WatsError};

/// Disjoint train / validation / test node index sets.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Split {
    #[serde(default)]
    pub train: Vec<usize>,
    #[serde(default)]
    pub val: Vec<usize>,
    #[serde(default)]
    pub test: Vec<usize>,
}

impl Split {
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.train.len() + self.val.len() + self.test.len());
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in set {
                if i >= num_nodes {
                    return Err(WatsError::InvalidInput(format!(
                        "{name} split references node {i} but there are {num_nodes} nodes"
                    )));
                }
                if !seen.insert(i) {
                    return Err(WatsError::InvalidInput(format!(
                        "node {i} appears in more than one split (or twice)"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Classifier logits with labels and a node split.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitSet {
    pub logits: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub split: Split,
}

impl LogitSet {
    pub fn new(logits: Vec<Vec<f64>>, labels: Vec<usize>, split: Split) -> Result<Self> {
        let set = LogitSet {
            logits,
            labels,
            split,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn num_nodes(&self) -> usize {
        self.logits.len()
    }

    pub fn num_classes(&self) -> usize {
        self.logits.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.num_classes();
        if c < 2 {
            return Err(WatsError::InvalidInput("need at least two classes".into()));
        }
        if let Some((i, row)) = self.logits.iter().enumerate().find(|(_, r)| r.len() != c) {
            return Err(WatsError::InvalidInput(format!(
                "logit row {i} has {} columns, expected {c}",
                row.len()
            )));
        }
        if self.labels.len() != self.logits.len() {
            return Err(WatsError::DimensionMismatch {
                expected: self.logits.len(),
                actual: self.labels.len(),
            });
        }
        if let Some((i, &y)) = self.labels.iter().enumerate().find(|(_, &y)| y >= c) {
            return Err(WatsError::InvalidInput(format!(
                "label {y} of node {i} outside [0, {c})"
            )));
        }
        self.split.validate(self.num_nodes())
    }

    pub fn require_val(&self) -> Result<&[usize]> {
        if self.split.val.is_empty() {
            Err(WatsError::MissingValidation)
        } else {
            Ok(&self.split.val)
        }
    }
}

/// `z̃[i] = z[i] / τ[i]`.
pub fn scale_logits(z: &[Vec<f64>], tau: &[f64]) -> Result<Vec<Vec<f64>>> {
    if z.len() != tau.len() {
        return Err(WatsError::DimensionMismatch {
            expected: z.len(),
            actual: tau.len(),
        });
    }
    if let Some((i, t)) = tau.iter().enumerate().find(|(_, &t)| !(t > 0.0) || !t.is_finite()) {
        return Err(WatsError::InvalidInput(format!(
            "temperature of node {i} must be positive and finite, got {t}"
        )));
    }
    Ok(z.iter()
        .zip(tau)
        .map(|(row, &t)| row.iter().map(|v| v / t).collect())
        .collect())
}

/// Headerless CSV, one row of `C` decimals per node.
pub fn read_logits_csv<R: BufRead>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| WatsError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .trim()
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| WatsError::Parse {
                line: line_no,
                message: format!("invalid logit: {e}"),
            })?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(WatsError::Parse {
                line: line_no,
                message: "non-finite logit".into(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_logits_csv<W: Write>(mut out: W, z: &[Vec<f64>]) -> std::io::Result<()> {
    let mut line = String::new();
    for row in z {
        line.clear();
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// One non-negative integer label per line.
pub fn read_labels<R: BufRead>(reader: R) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| WatsError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        labels.push(t.parse::<usize>().map_err(|_| WatsError::Parse {
            line: line_no,
            message: format!("invalid label '{t}'"),
        })?);
    }
    Ok(labels)
}

pub fn write_labels<W: Write>(mut out: W, labels: &[usize]) -> std::io::Result<()> {
    for y in labels {
        writeln!(out, "{y}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::softmax;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unit_temperature_is_identity() {
        let z = vec![vec![1.5, -2.0, 0.25], vec![0.0, 3.0, 1.0]];
        assert_eq!(scale_logits(&z, &[1.0, 1.0]).unwrap(), z);
    }

    #[test]
    fn temperature_two_softens() {
        let z = vec![vec![2.0, 0.0]];
        let s = scale_logits(&z, &[2.0]).unwrap();
        assert_eq!(s, vec![vec![1.0, 0.0]]);
        assert_abs_diff_eq!(softmax(&z[0])[0], 0.8808, epsilon = 1e-4);
        assert_abs_diff_eq!(softmax(&s[0])[0], 0.7311, epsilon = 1e-4);
    }

    #[test]
    fn huge_temperature_approaches_uniform() {
        let z = vec![vec![5.0, -3.0, 1.0, 0.0]];
        let s = scale_logits(&z, &[1e6]).unwrap();
        for p in softmax(&s[0]) {
            assert_abs_diff_eq!(p, 0.25, epsilon = 1e-5);
        }
    }

    #[test]
    fn nonpositive_temperature_rejected() {
        let z = vec![vec![1.0, 0.0]];
        assert!(scale_logits(&z, &[0.0]).is_err());
        assert!(scale_logits(&z, &[-1.0]).is_err());
        assert!(scale_logits(&z, &[f64::NAN]).is_err());
    }

    #[test]
    fn split_validation() {
        let ok = Split {
            train: vec![0],
            val: vec![1],
            test: vec![2, 3],
        };
        assert!(ok.validate(4).is_ok());
        let overlap = Split {
            train: vec![0],
            val: vec![0],
            test: vec![],
        };
        assert!(overlap.validate(4).is_err());
        assert!(ok.validate(3).is_err());
    }

    #[test]
    fn logitset_checks_labels() {
        let z = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(LogitSet::new(z.clone(), vec![0, 2], Split::default()).is_err());
        assert!(LogitSet::new(z.clone(), vec![0], Split::default()).is_err());
        let set = LogitSet::new(z, vec![1, 0], Split::default()).unwrap();
        assert!(matches!(set.require_val(), Err(WatsError::MissingValidation)));
    }

    #[test]
    fn csv_round_trip() {
        let z = vec![vec![0.1, -2.5e-7, 3.0], vec![1e10, 0.0, -0.3333333333333333]];
        let mut buf = Vec::new();
        write_logits_csv(&mut buf, &z).unwrap();
        assert_eq!(read_logits_csv(buf.as_slice()).unwrap(), z);

        let mut buf = Vec::new();
        write_labels(&mut buf, &[3, 0, 1]).unwrap();
        assert_eq!(read_labels(buf.as_slice()).unwrap(), vec![3, 0, 1]);
        assert!(matches!(
            read_labels("1\nx\n".as_bytes()),
            Err(WatsError::Parse { line: 2, .. })
        ));
    }
}
