//! Disentanglement metrics.
//!
//! * SNC (single-neuron classification): bin the aligned neuron into `K_j`
//!   bins, match bins to classes one-to-one to maximize agreement, and
//!   chance-adjust the resulting accuracy.
//! * NK (neuron knockout): accuracy of an MLP on all neurons minus the
//!   accuracy of an MLP that cannot see the aligned neuron.
//! * MIG, SAP and DCI, computed the way the comparison literature does
//!   (MI importance, single-neuron scores, no injectivity).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::align::{align, hungarian, AlignMode, Alignment};
use crate::classify::{accuracy, adjusted_accuracy, chance_rate, train_probe_with_classes, ProbeKind, TrainConfig};
use crate::dataset::{discretize_neuron, split_indices, BinConfig, BinStrategy, RepresentationSet, SplitSpec};
use crate::error::{Error, Result};
use crate::infotheory::{factor_entropies, importance_matrix, ContingencyTable, ImportanceMatrix};
use crate::par_map;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Accuracy of predicting `labels` from `values` binned into `k` bins,
/// using the one-to-one bin → class map that maximizes agreement.
pub fn bin_match_accuracy(values: &[f64], labels: &[usize], k: usize, strategy: BinStrategy) -> Result<f64> {
    if k > values.len() {
        return Err(Error::invalid(format!(
            "{k} classes but only {} samples",
            values.len()
        )));
    }
    let binned = discretize_neuron(values, k, strategy)?;
    let table = ContingencyTable::from_labels(&binned.bins, labels, k, k)?;
    let scores: Vec<Vec<f64>> = table
        .counts()
        .iter()
        .map(|row| row.iter().map(|&c| c as f64).collect())
        .collect();
    let matched = hungarian::maximize_rect(&scores);
    let hits: f64 = matched.iter().enumerate().map(|(b, &c)| scores[b][c]).sum();
    Ok(hits / values.len() as f64)
}

/// Unadjusted single-neuron accuracy and its chance-adjusted SNC score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SncFactor {
    pub accuracy: f64,
    pub chance_rate: f64,
    pub score: f64,
}

/// SNC per factor. `strategy` picks the binning; the bin count is always
/// the factor's cardinality.
pub fn snc(set: &RepresentationSet, alignment: &Alignment, strategy: BinStrategy) -> Result<Vec<SncFactor>> {
    check_alignment(set, alignment)?;
    (0..set.num_factors())
        .map(|j| {
            let labels = set.factor(j);
            let k = set.schema().cardinality(j);
            let a = bin_match_accuracy(set.neuron(alignment.neuron_for(j)), labels, k, strategy)?;
            let r = chance_rate(labels)?;
            Ok(SncFactor {
                accuracy: a,
                chance_rate: r,
                score: adjusted_accuracy(a, r),
            })
        })
        .collect()
}

fn check_alignment(set: &RepresentationSet, alignment: &Alignment) -> Result<()> {
    if alignment.assignment.len() != set.num_factors() {
        return Err(Error::LengthMismatch {
            expected: set.num_factors(),
            found: alignment.assignment.len(),
        });
    }
    if let Some(&bad) = alignment.assignment.iter().find(|&&i| i >= set.num_neurons()) {
        return Err(Error::invalid(format!("alignment names neuron {bad}, set has {}", set.num_neurons())));
    }
    Ok(())
}

/// Whether NK differences raw or chance-adjusted accuracies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NkBasis {
    #[default]
    Raw,
    Adjusted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NkConfig {
    pub train: TrainConfig,
    /// Held-out fraction for measuring accuracy.
    pub test_fraction: f64,
    pub split_seed: u64,
    pub basis: NkBasis,
}

impl Default for NkConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            test_fraction: 0.2,
            split_seed: 0,
            basis: NkBasis::Raw,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NkFactor {
    /// Held-out accuracy of the MLP on all neurons.
    pub acc_all: f64,
    /// Held-out accuracy of the MLP without the aligned neuron.
    pub acc_without: f64,
    pub chance_rate: f64,
    /// `max(0, acc_all - acc_without)`.
    pub drop_raw: f64,
    /// `max(0, adj(acc_all) - adj(acc_without))`.
    pub drop_adjusted: f64,
    /// The drop selected by [`NkBasis`].
    pub score: f64,
}

impl NkFactor {
    pub fn adjusted_all(&self) -> f64 {
        adjusted_accuracy(self.acc_all, self.chance_rate)
    }
}

pub(crate) fn factor_seed(base: u64, factor: usize, salt: u64) -> u64 {
    base ^ (factor as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Trains on the `train` rows of `set` using `neurons` as inputs and
/// returns held-out accuracy on the `test` rows.
pub(crate) fn probe_accuracy(
    set: &RepresentationSet,
    factor: usize,
    neurons: &[usize],
    train: &[usize],
    test: &[usize],
    kind: ProbeKind,
    config: &TrainConfig,
) -> Result<f64> {
    let features = set.feature_rows(neurons);
    let labels = set.factor(factor);
    let pick = |rows: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        rows.iter().map(|&r| (features[r].clone(), labels[r])).unzip()
    };
    let (x_train, y_train) = pick(train);
    let (x_test, y_test) = pick(test);
    let model = train_probe_with_classes(&x_train, &y_train, set.schema().cardinality(factor), kind, config)?;
    accuracy(&model, &x_test, &y_test)
}

/// NK per factor. Needs at least two neurons.
pub fn nk(set: &RepresentationSet, alignment: &Alignment, config: &NkConfig) -> Result<Vec<NkFactor>> {
    check_alignment(set, alignment)?;
    let m = set.num_neurons();
    if m < 2 {
        return Err(Error::invalid("neuron knockout needs at least two neurons"));
    }
    let (train, test) = split_indices(
        set,
        &SplitSpec::Random {
            test_fraction: config.test_fraction,
            seed: config.split_seed,
        },
    )?;
    let all: Vec<usize> = (0..m).collect();
    let factors: Vec<usize> = (0..set.num_factors()).collect();
    par_map(&factors, |&j| {
        let knocked = alignment.neuron_for(j);
        let without: Vec<usize> = all.iter().copied().filter(|&i| i != knocked).collect();
        let cfg_all = config.train.with_seed(factor_seed(config.train.seed, j, 1));
        let cfg_without = config.train.with_seed(factor_seed(config.train.seed, j, 2));
        let acc_all = probe_accuracy(set, j, &all, &train, &test, ProbeKind::Mlp, &cfg_all)?;
        let acc_without = probe_accuracy(set, j, &without, &train, &test, ProbeKind::Mlp, &cfg_without)?;
        let r = chance_rate(set.factor(j))?;
        let drop_raw = (acc_all - acc_without).max(0.0);
        let drop_adjusted = (adjusted_accuracy(acc_all, r) - adjusted_accuracy(acc_without, r)).max(0.0);
        Ok(NkFactor {
            acc_all,
            acc_without,
            chance_rate: r,
            drop_raw,
            drop_adjusted,
            score: match config.basis {
                NkBasis::Raw => drop_raw,
                NkBasis::Adjusted => drop_adjusted,
            },
        })
    })
    .into_iter()
    .collect()
}

/// Held-out chance-adjusted accuracy of a probe on all neurons, per factor.
pub fn probe_informativeness(set: &RepresentationSet, kind: ProbeKind, config: &NkConfig) -> Result<Vec<f64>> {
    let (train, test) = split_indices(
        set,
        &SplitSpec::Random {
            test_fraction: config.test_fraction,
            seed: config.split_seed,
        },
    )?;
    let all: Vec<usize> = (0..set.num_neurons()).collect();
    let salt = match kind {
        ProbeKind::Mlp => 1,
        ProbeKind::Linear => 3,
    };
    let factors: Vec<usize> = (0..set.num_factors()).collect();
    par_map(&factors, |&j| {
        let cfg = config.train.with_seed(factor_seed(config.train.seed, j, salt));
        let a = probe_accuracy(set, j, &all, &train, &test, kind, &cfg)?;
        Ok(adjusted_accuracy(a, chance_rate(set.factor(j))?))
    })
    .into_iter()
    .collect()
}

/// Mutual information gap per factor: `(top1 - top2) / H(g_j)`.
pub fn mig(imp: &ImportanceMatrix, entropies: &[f64]) -> Result<Vec<f64>> {
    if imp.num_neurons() < 2 {
        return Err(Error::invalid("MIG needs at least two neurons"));
    }
    if entropies.len() != imp.num_factors() {
        return Err(Error::LengthMismatch {
            expected: imp.num_factors(),
            found: entropies.len(),
        });
    }
    imp.values
        .iter()
        .zip(entropies)
        .enumerate()
        .map(|(j, (row, &h))| {
            if h <= 0.0 {
                return Err(Error::ZeroEntropy { factor: j });
            }
            let (top1, top2) = top_two(row);
            Ok(((top1 - top2) / h).clamp(0.0, 1.0))
        })
        .collect()
}

fn top_two(row: &[f64]) -> (f64, f64) {
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    (sorted[0], sorted.get(1).copied().unwrap_or(0.0))
}

/// Per-(factor, neuron) single-neuron accuracy, the score matrix behind SAP.
pub fn sap_score_matrix(set: &RepresentationSet, strategy: BinStrategy) -> Result<Vec<Vec<f64>>> {
    let factors: Vec<usize> = (0..set.num_factors()).collect();
    par_map(&factors, |&j| {
        let k = set.schema().cardinality(j);
        (0..set.num_neurons())
            .map(|i| bin_match_accuracy(set.neuron(i), set.factor(j), k, strategy))
            .collect::<Result<Vec<f64>>>()
    })
    .into_iter()
    .collect()
}

/// SAP per factor: best minus second-best single-neuron accuracy.
pub fn sap(set: &RepresentationSet, strategy: BinStrategy) -> Result<Vec<f64>> {
    if set.num_neurons() < 2 {
        return Err(Error::invalid("SAP needs at least two neurons"));
    }
    Ok(sap_score_matrix(set, strategy)?
        .iter()
        .map(|row| {
            let (a, b) = top_two(row);
            (a - b).clamp(0.0, 1.0)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DciScores {
    pub disentanglement: f64,
    pub completeness: f64,
    /// Mean informativeness, when per-factor informativeness was supplied.
    pub informativeness: Option<f64>,
    pub avg_dc: f64,
    pub per_neuron_disentanglement: Vec<f64>,
    pub neuron_weights: Vec<f64>,
    pub per_factor_completeness: Vec<f64>,
    pub degenerate: bool,
}

/// `1 - H(p) / ln(k)` for a nonnegative weight vector; 0 for an all-zero
/// vector, 1 when `k == 1`.
fn one_minus_normalized_entropy(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    if weights.len() < 2 {
        return 1.0;
    }
    let h: f64 = weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let p = w / total;
            -p * p.ln()
        })
        .sum();
    (1.0 - h / (weights.len() as f64).ln()).clamp(0.0, 1.0)
}

/// DCI disentanglement and completeness from a factor-major importance
/// matrix. Disentanglement is the importance-weighted mean over neurons of
/// `1 - H_n(P_i)`; completeness the mean over factors of `1 - H_m(Q_j)`.
pub fn dci(imp: &ImportanceMatrix, informativeness: Option<&[f64]>) -> Result<DciScores> {
    let (n, m) = (imp.num_factors(), imp.num_neurons());
    if let Some(info) = informativeness {
        if info.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: info.len(),
            });
        }
    }
    let columns: Vec<Vec<f64>> = (0..m).map(|i| (0..n).map(|j| imp.get(j, i)).collect()).collect();
    let col_sums: Vec<f64> = columns.iter().map(|c| c.iter().sum()).collect();
    let total: f64 = col_sums.iter().sum();
    let per_neuron: Vec<f64> = columns.iter().map(|c| one_minus_normalized_entropy(c)).collect();
    let weights: Vec<f64> = col_sums
        .iter()
        .map(|&s| if total > 0.0 { s / total } else { 0.0 })
        .collect();
    let per_factor: Vec<f64> = imp.values.iter().map(|row| one_minus_normalized_entropy(row)).collect();
    let degenerate = total <= 0.0;
    let (d, c) = if degenerate {
        (0.0, 0.0)
    } else {
        (
            per_neuron.iter().zip(&weights).map(|(d, w)| d * w).sum::<f64>(),
            per_factor.iter().sum::<f64>() / n as f64,
        )
    };
    Ok(DciScores {
        disentanglement: d,
        completeness: c,
        informativeness: informativeness.map(|v| v.iter().sum::<f64>() / n as f64),
        avg_dc: (d + c) / 2.0,
        per_neuron_disentanglement: per_neuron,
        neuron_weights: weights,
        per_factor_completeness: per_factor,
        degenerate,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "factors", rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean over all factors.
    Mean,
    MeanOver(Vec<usize>),
    ProductOver(Vec<usize>),
}

pub fn aggregate(scores: &[f64], mode: &Aggregation) -> Result<f64> {
    let subset = |idx: &[usize]| -> Result<Vec<f64>> {
        if idx.is_empty() {
            return Err(Error::Empty("aggregation subset"));
        }
        idx.iter()
            .map(|&j| {
                scores
                    .get(j)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("factor {j} outside {} scores", scores.len())))
            })
            .collect()
    };
    match mode {
        Aggregation::Mean => {
            if scores.is_empty() {
                return Err(Error::Empty("scores"));
            }
            Ok(scores.iter().sum::<f64>() / scores.len() as f64)
        }
        Aggregation::MeanOver(idx) => {
            let v = subset(idx)?;
            Ok(v.iter().sum::<f64>() / v.len() as f64)
        }
        Aggregation::ProductOver(idx) => Ok(subset(idx)?.iter().product()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub bins: BinConfig,
    pub align: AlignMode,
    pub nk: NkConfig,
    /// Also train a linear probe per factor (the `linear` row).
    pub linear_probe: bool,
    /// Extra aggregation reported next to the mean.
    pub subset: Option<Aggregation>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            bins: BinConfig::default(),
            align: AlignMode::Injective,
            nk: NkConfig::default(),
            linear_probe: true,
            subset: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerFactorScores {
    pub snc: Vec<f64>,
    pub nk: Vec<f64>,
    pub mig: Vec<f64>,
    pub sap: Vec<f64>,
    /// Chance-adjusted held-out accuracy of an MLP on all neurons.
    pub mlp: Vec<f64>,
    /// Chance-adjusted held-out accuracy of a linear probe on all neurons.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub linear: Vec<f64>,
}

impl PerFactorScores {
    pub fn columns(&self) -> Vec<(&'static str, &[f64])> {
        let mut cols = vec![
            ("snc", self.snc.as_slice()),
            ("nk", self.nk.as_slice()),
            ("mig", self.mig.as_slice()),
            ("sap", self.sap.as_slice()),
            ("mlp", self.mlp.as_slice()),
        ];
        if !self.linear.is_empty() {
            cols.push(("linear", self.linear.as_slice()));
        }
        cols
    }

    pub fn get(&self, metric: &str) -> Option<&[f64]> {
        self.columns().into_iter().find(|(k, _)| *k == metric).map(|(_, v)| v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub factors: Vec<String>,
    pub per_factor: PerFactorScores,
    /// Per metric, aggregate name (`mean`, or the configured subset) → value.
    pub aggregates: BTreeMap<String, BTreeMap<String, f64>>,
    pub dci: DciScores,
    pub snc_detail: Vec<SncFactor>,
    pub nk_detail: Vec<NkFactor>,
    pub alignment: Alignment,
    pub importance: ImportanceMatrix,
    pub factor_entropies: Vec<f64>,
    pub config: MetricConfig,
}

fn aggregation_label(mode: &Aggregation) -> String {
    let list = |idx: &[usize]| idx.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    match mode {
        Aggregation::Mean => "mean".into(),
        Aggregation::MeanOver(idx) => format!("mean[{}]", list(idx)),
        Aggregation::ProductOver(idx) => format!("product[{}]", list(idx)),
    }
}

/// Full pipeline: importance → alignment → SNC, NK, MIG, SAP, DCI and
/// probe accuracies.
pub fn evaluate(set: &RepresentationSet, config: &MetricConfig) -> Result<MetricReport> {
    let importance = importance_matrix(set, config.bins)?;
    let alignment = align(&importance, config.align)?;
    evaluate_with_alignment(set, importance, alignment, config)
}

pub fn evaluate_with_alignment(
    set: &RepresentationSet,
    importance: ImportanceMatrix,
    alignment: Alignment,
    config: &MetricConfig,
) -> Result<MetricReport> {
    let entropies = factor_entropies(set);
    let snc_detail = snc(set, &alignment, config.bins.strategy)?;
    let nk_detail = nk(set, &alignment, &config.nk)?;
    let mlp: Vec<f64> = nk_detail.iter().map(NkFactor::adjusted_all).collect();
    let linear = if config.linear_probe {
        probe_informativeness(set, ProbeKind::Linear, &config.nk)?
    } else {
        Vec::new()
    };
    let per_factor = PerFactorScores {
        snc: snc_detail.iter().map(|s| s.score).collect(),
        nk: nk_detail.iter().map(|s| s.score).collect(),
        mig: mig(&importance, &entropies)?,
        sap: sap(set, config.bins.strategy)?,
        mlp: mlp.clone(),
        linear,
    };
    let dci_scores = dci(&importance, Some(&mlp))?;

    let mut modes = vec![Aggregation::Mean];
    modes.extend(config.subset.clone());
    let mut aggregates = BTreeMap::new();
    for (name, scores) in per_factor.columns() {
        let mut entry = BTreeMap::new();
        for mode in &modes {
            entry.insert(aggregation_label(mode), aggregate(scores, mode)?);
        }
        aggregates.insert(name.to_string(), entry);
    }

    Ok(MetricReport {
        schema_version: REPORT_SCHEMA_VERSION,
        factors: set.schema().factors().iter().map(|f| f.name.clone()).collect(),
        per_factor,
        aggregates,
        dci: dci_scores,
        snc_detail,
        nk_detail,
        alignment,
        importance,
        factor_entropies: entropies,
        config: config.clone(),
    })
}

impl MetricReport {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.aggregates.get(metric)?.get("mean").copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Aligned text table: one row per score, one column per factor plus
    /// the mean.
    pub fn text_table(&self) -> String {
        let w = self.factors.iter().map(String::len).max().unwrap_or(0).max(8);
        let mut out = format!("{:<8}", "");
        for f in &self.factors {
            let _ = write!(out, " {f:>w$}");
        }
        let _ = writeln!(out, " {:>w$}", "mean");
        let mut rows: Vec<(&str, &[f64])> = vec![("SNC", &self.per_factor.snc)];
        if !self.per_factor.linear.is_empty() {
            rows.push(("linear", &self.per_factor.linear));
        }
        rows.extend([
            ("MLP", self.per_factor.mlp.as_slice()),
            ("NK", self.per_factor.nk.as_slice()),
            ("MIG", self.per_factor.mig.as_slice()),
            ("SAP", self.per_factor.sap.as_slice()),
        ]);
        for (name, scores) in rows {
            let _ = write!(out, "{name:<8}");
            for s in scores {
                let _ = write!(out, " {s:>w$.4}");
            }
            let mean = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
            let _ = writeln!(out, " {mean:>w$.4}");
        }
        let _ = writeln!(
            out,
            "DCI      D={:.4} C={:.4} I={} avg(D,C)={:.4}",
            self.dci.disentanglement,
            self.dci.completeness,
            self.dci
                .informativeness
                .map_or_else(|| "-".to_string(), |i| format!("{i:.4}")),
            self.dci.avg_dc
        );
        let pairs: Vec<String> = self
            .alignment
            .assignment
            .iter()
            .enumerate()
            .map(|(j, i)| format!("{}->z{i}", self.factors[j]))
            .collect();
        let _ = writeln!(
            out,
            "alignment ({:?}): {}",
            self.alignment.mode,
            pairs.join(" ")
        );
        out
    }
}
