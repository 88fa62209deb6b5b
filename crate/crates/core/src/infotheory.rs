//! Plug-in entropy and mutual information over discrete variables, in bits.
//!
//! Every estimate here is the empirical (maximum-likelihood) one with no
//! bias correction, so on exact populations it equals the population
//! value up to float rounding.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{discretize_neuron, BinConfig, RepresentationSet};
use crate::error::{Error, Result};
use crate::par_map;

/// Default cap on the number of cells in a joint alphabet.
pub const DEFAULT_ALPHABET_CAP: u128 = 1_000_000;

/// Entropy of a count vector. Counts are summed in sorted order so the
/// result does not depend on how the cells were enumerated.
fn entropy_from_counts(mut counts: Vec<u64>) -> f64 {
    counts.retain(|&c| c > 0);
    counts.sort_unstable();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

fn counts_of(values: &[usize]) -> Vec<u64> {
    let max = values.iter().copied().max().unwrap_or(0);
    if max < 1 << 16 {
        let mut counts = vec![0u64; max + 1];
        for &v in values {
            counts[v] += 1;
        }
        counts
    } else {
        let mut map: HashMap<usize, u64> = HashMap::new();
        for &v in values {
            *map.entry(v).or_default() += 1;
        }
        map.into_values().collect()
    }
}

/// Relabels values to dense codes `0..k` in increasing value order.
fn compact(values: &[usize]) -> (Vec<usize>, usize) {
    let mut levels = values.to_vec();
    levels.sort_unstable();
    levels.dedup();
    let codes = values
        .iter()
        .map(|v| levels.binary_search(v).expect("present"))
        .collect();
    (codes, levels.len())
}

/// Shannon entropy `-Σ p log2 p` of the empirical distribution.
pub fn entropy(labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    Ok(entropy_from_counts(counts_of(labels)))
}

/// Entropy of the tuple-valued variable formed by `columns`.
fn joint_entropy(columns: &[&[usize]], cap: u128) -> Result<f64> {
    let n = columns[0].len();
    let mut code = vec![0usize; n];
    let mut cells: u128 = 1;
    for col in columns {
        let (c, k) = compact(col);
        cells *= k as u128;
        if cells > cap {
            return Err(Error::AlphabetOverflow { cells, cap });
        }
        for (acc, v) in code.iter_mut().zip(c) {
            *acc = *acc * k + v;
        }
    }
    let mut map: HashMap<usize, u64> = HashMap::new();
    for v in code {
        *map.entry(v).or_default() += 1;
    }
    Ok(entropy_from_counts(map.into_values().collect()))
}

fn check_lengths(expected: usize, columns: &[&[usize]]) -> Result<()> {
    for c in columns {
        if c.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: c.len(),
            });
        }
    }
    Ok(())
}

/// `I(x; y) = H(x) + H(y) - H(x, y)`.
pub fn mutual_information(x: &[usize], y: &[usize]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Empty("x"));
    }
    check_lengths(x.len(), &[y])?;
    let hxy = joint_entropy(&[x, y], u128::MAX)?;
    Ok(entropy(x)? + entropy(y)? - hxy)
}

/// Mutual information between the cartesian product of `xs` and `y`.
pub fn joint_mutual_information(xs: &[&[usize]], y: &[usize]) -> Result<f64> {
    joint_mutual_information_capped(xs, y, DEFAULT_ALPHABET_CAP)
}

pub fn joint_mutual_information_capped(xs: &[&[usize]], y: &[usize], cap: u128) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Empty("variable list"));
    }
    if y.is_empty() {
        return Err(Error::Empty("y"));
    }
    check_lengths(y.len(), xs)?;
    let hx = joint_entropy(xs, cap)?;
    let mut all: Vec<&[usize]> = xs.to_vec();
    all.push(y);
    // the product alphabet is already bounded; adding y grows it by at most N
    let hxy = joint_entropy(&all, u128::MAX)?;
    Ok(hx + entropy(y)? - hxy)
}

/// Dense `A × B` table of co-occurrence counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    total: u64,
}

impl ContingencyTable {
    /// Counts pairs `(x[r], y[r])` into a `rows × cols` table.
    pub fn from_labels(x: &[usize], y: &[usize], rows: usize, cols: usize) -> Result<Self> {
        check_lengths(x.len(), &[y])?;
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("contingency table needs at least one row and column"));
        }
        let mut counts = vec![vec![0u64; cols]; rows];
        for (&a, &b) in x.iter().zip(y) {
            if a >= rows || b >= cols {
                return Err(Error::invalid(format!(
                    "pair ({a}, {b}) outside a {rows}x{cols} table"
                )));
            }
            counts[a][b] += 1;
        }
        Ok(Self {
            counts,
            total: x.len() as u64,
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn mutual_information(&self) -> f64 {
        let rows = self.counts.iter().map(|r| r.iter().sum()).collect();
        let cols = (0..self.counts[0].len())
            .map(|c| self.counts.iter().map(|r| r[c]).sum())
            .collect();
        let cells = self.counts.iter().flatten().copied().collect();
        entropy_from_counts(rows) + entropy_from_counts(cols) - entropy_from_counts(cells)
    }
}

/// Per-(factor, neuron) informativeness, factor-major: `values[j][i]`
/// scores neuron `i` for factor `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceMatrix {
    pub values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_config: Option<BinConfig>,
}

impl ImportanceMatrix {
    /// Wraps a raw factor-major matrix (no binning provenance).
    pub fn from_rows(values: Vec<Vec<f64>>) -> Result<Self> {
        let m = values.first().map_or(0, Vec::len);
        if values.is_empty() || m == 0 {
            return Err(Error::Empty("importance matrix"));
        }
        for row in &values {
            if row.len() != m {
                return Err(Error::LengthMismatch {
                    expected: m,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::invalid("importance entries must be finite and nonnegative"));
            }
        }
        Ok(Self {
            values,
            bin_config: None,
        })
    }

    pub fn num_factors(&self) -> usize {
        self.values.len()
    }

    pub fn num_neurons(&self) -> usize {
        self.values[0].len()
    }

    pub fn get(&self, factor: usize, neuron: usize) -> f64 {
        self.values[factor][neuron]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ImportanceMatrix = serde_json::from_str(text)?;
        let mut checked = Self::from_rows(raw.values)?;
        checked.bin_config = raw.bin_config;
        Ok(checked)
    }
}

/// Bins every neuron per `bins` and scores it against every factor by MI.
pub fn importance_matrix(set: &RepresentationSet, bins: BinConfig) -> Result<ImportanceMatrix> {
    let neurons: Vec<usize> = (0..set.num_neurons()).collect();
    let binned = par_map(&neurons, |&i| {
        discretize_neuron(set.neuron(i), bins.bins, bins.strategy).map(|d| d.bins)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let factors: Vec<usize> = (0..set.num_factors()).collect();
    let values = par_map(&factors, |&j| {
        binned
            .iter()
            .map(|b| mutual_information(b, set.factor(j)).map(|v| v.max(0.0)))
            .collect::<Result<Vec<f64>>>()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ImportanceMatrix {
        values,
        bin_config: Some(bins),
    })
}

/// `H(g_j)` for every factor of the set.
pub fn factor_entropies(set: &RepresentationSet) -> Vec<f64> {
    set.factors()
        .iter()
        .map(|g| entropy(g).expect("sets are nonempty"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    #[test]
    fn entropy_values() {
        assert!((entropy(&[0, 1, 0, 1]).unwrap() - 1.0).abs() < EPS);
        assert_eq!(entropy(&[4, 4, 4]).unwrap(), 0.0);
        let h = entropy(&[0, 0, 0, 1]).unwrap();
        assert!((h - 0.8113).abs() < 5e-5, "{h}");
        assert!(entropy(&[]).is_err());
    }

    #[test]
    fn mutual_information_basic() {
        let x = [0, 1, 0, 1];
        assert!((mutual_information(&x, &x).unwrap() - 1.0).abs() < EPS);
        let a = [0, 0, 1, 1];
        let b = [0, 1, 0, 1];
        assert!(mutual_information(&a, &b).unwrap().abs() < EPS);
        assert!(matches!(
            mutual_information(&a, &[0, 1]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mutual_information_75_percent_agreement() {
        // z agrees with g on 3 of every 4 rows, both balanced
        let g = [0, 0, 0, 0, 1, 1, 1, 1];
        let z = [0, 0, 0, 1, 1, 1, 1, 0];
        let mi = mutual_information(&z, &g).unwrap();
        assert!((mi - 0.1887).abs() < 5e-5, "{mi}");
    }

    #[test]
    fn xor_needs_both_inputs() {
        let x1 = [0, 0, 1, 1];
        let x2 = [0, 1, 0, 1];
        let y = [0, 1, 1, 0];
        assert!(mutual_information(&x1, &y).unwrap().abs() < 1e-12);
        assert!(mutual_information(&x2, &y).unwrap().abs() < 1e-12);
        let joint = joint_mutual_information(&[&x1, &x2], &y).unwrap();
        assert!((joint - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_single_equals_pairwise() {
        let x = [0, 2, 1, 1, 0, 2, 2];
        let y = [1, 0, 1, 0, 1, 1, 0];
        let a = joint_mutual_information(&[&x], &y).unwrap();
        let b = mutual_information(&x, &y).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn joint_with_copy_of_target_is_entropy() {
        // oracle: enumerate the (y, noise) table by hand; all four cells
        // occupied once and y balanced -> H(y) = 1
        let y = [0, 0, 1, 1, 2, 2];
        let noise = [0, 1, 1, 0, 0, 1];
        let joint = joint_mutual_information(&[&y, &noise], &y).unwrap();
        let h = entropy(&y).unwrap();
        assert!((joint - h).abs() < 1e-12);
        assert!((h - 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn joint_alphabet_cap() {
        let a: Vec<usize> = (0..2000).collect();
        let res = joint_mutual_information(&[&a, &a], &a);
        assert!(matches!(res, Err(Error::AlphabetOverflow { .. })));
        assert!(joint_mutual_information(&[], &a).is_err());
    }

    #[test]
    fn contingency_table_mi_matches() {
        let x = [0, 0, 1, 1, 2, 2, 0];
        let y = [0, 1, 1, 1, 0, 0, 0];
        let t = ContingencyTable::from_labels(&x, &y, 3, 2).unwrap();
        assert_eq!(t.total(), 7);
        assert_eq!(t.counts()[0], vec![2, 1]);
        let mi = mutual_information(&x, &y).unwrap();
        assert!((t.mutual_information() - mi).abs() < 1e-12);
        assert!(ContingencyTable::from_labels(&x, &y, 2, 2).is_err());
    }

    #[test]
    fn importance_matrix_json_round_trip() {
        let imp = ImportanceMatrix::from_rows(vec![vec![0.1887, 0.0], vec![0.1887, 0.1187]]).unwrap();
        let back = ImportanceMatrix::from_json(&imp.to_json().unwrap()).unwrap();
        assert_eq!(imp, back);
        assert!(ImportanceMatrix::from_rows(vec![vec![-1.0]]).is_err());
        assert!(ImportanceMatrix::from_rows(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
