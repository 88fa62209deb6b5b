//! Compositional generalization over precomputed encodings.
//!
//! One factor-value combination is removed from training; probes trained
//! on the remaining rows are scored on the removed rows. A random split
//! with the same probe settings serves as the normal-test-set control.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{adjusted_accuracy, chance_rate, train_probe_with_classes, ProbeKind, TrainConfig};
use crate::dataset::{split_indices, FactorSchema, RepresentationSet, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::factor_seed;
use crate::par_map;

/// The combination `(factor_a = value_a, factor_b = value_b)` held out of
/// training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CgPair {
    pub factor_a: usize,
    pub value_a: usize,
    pub factor_b: usize,
    pub value_b: usize,
}

impl CgPair {
    pub fn new(factor_a: usize, value_a: usize, factor_b: usize, value_b: usize) -> Self {
        Self {
            factor_a,
            value_a,
            factor_b,
            value_b,
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec::CgExclusion {
            factor_a: self.factor_a,
            value_a: self.value_a,
            factor_b: self.factor_b,
            value_b: self.value_b,
        }
    }

    /// `name=value` rendering, e.g. `shape:2,size:0`.
    pub fn describe(&self, schema: &FactorSchema) -> String {
        let name = |j: usize| {
            if j < schema.len() {
                schema.name(j).to_string()
            } else {
                format!("g{j}")
            }
        };
        format!(
            "{}:{},{}:{}",
            name(self.factor_a),
            self.value_a,
            name(self.factor_b),
            self.value_b
        )
    }

    /// Parses `a:va,b:vb`; factors may be given by name or index.
    pub fn parse(text: &str, schema: &FactorSchema) -> Result<Self> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(Error::invalid(format!("pair `{text}` is not of the form a:va,b:vb")));
        }
        let mut out = [(0usize, 0usize); 2];
        for (slot, part) in out.iter_mut().zip(&parts) {
            let (f, v) = part
                .split_once(':')
                .ok_or_else(|| Error::invalid(format!("`{part}` is not of the form factor:value")))?;
            let factor = schema
                .index_of(f)
                .or_else(|| f.parse::<usize>().ok().filter(|&j| j < schema.len()))
                .ok_or_else(|| Error::invalid(format!("unknown factor `{f}`")))?;
            let value = v
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("value `{v}` is not a nonnegative integer")))?;
            *slot = (factor, value);
        }
        let pair = Self::new(out[0].0, out[0].1, out[1].0, out[1].1);
        pair.validate(schema)?;
        Ok(pair)
    }

    /// Parses a `;`-separated list of pairs.
    pub fn parse_list(text: &str, schema: &FactorSchema) -> Result<Vec<Self>> {
        text.split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|s| Self::parse(s, schema))
            .collect()
    }

    fn validate(&self, schema: &FactorSchema) -> Result<()> {
        if self.factor_a == self.factor_b {
            return Err(Error::invalid("excluded factors must be distinct"));
        }
        for (f, v) in [(self.factor_a, self.value_a), (self.factor_b, self.value_b)] {
            if f >= schema.len() || v >= schema.cardinality(f) {
                return Err(Error::invalid(format!("factor {f} value {v} outside the schema")));
            }
        }
        Ok(())
    }
}

/// `count` distinct pairs drawn from `seed`; each uses two distinct factors
/// (lower index first) and uniformly drawn values.
pub fn sample_pairs(schema: &FactorSchema, count: usize, seed: u64) -> Result<Vec<CgPair>> {
    let n = schema.len();
    if n < 2 {
        return Err(Error::invalid("sampling pairs needs at least two factors"));
    }
    let ks = schema.cardinalities();
    let available: u128 = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .map(|(a, b)| (ks[a] * ks[b]) as u128)
        .sum();
    if count as u128 > available {
        return Err(Error::invalid(format!("only {available} distinct pairs exist")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut factors: Vec<usize> = (0..n).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        factors.shuffle(&mut rng);
        let (a, b) = (factors[0].min(factors[1]), factors[0].max(factors[1]));
        let pair = CgPair::new(a, rng.random_range(0..ks[a]), b, rng.random_range(0..ks[b]));
        if seen.insert(pair) {
            out.push(pair);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CgConfig {
    pub train: TrainConfig,
    /// Test fraction of the random-split control.
    pub control_test_fraction: f64,
    pub control_seed: u64,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            control_test_fraction: 0.2,
            control_seed: 0,
        }
    }
}

/// Accuracies on one test set. `a`, `b` and `both` are chance-adjusted;
/// the `raw_` fields are the plain fractions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CgScores {
    pub a: f64,
    pub b: f64,
    pub both: f64,
    pub raw_a: f64,
    pub raw_b: f64,
    pub raw_both: f64,
}

impl CgScores {
    fn mean(items: &[CgScores]) -> CgScores {
        let k = items.len() as f64;
        let avg = |f: fn(&CgScores) -> f64| items.iter().map(f).sum::<f64>() / k;
        CgScores {
            a: avg(|s| s.a),
            b: avg(|s| s.b),
            both: avg(|s| s.both),
            raw_a: avg(|s| s.raw_a),
            raw_b: avg(|s| s.raw_b),
            raw_both: avg(|s| s.raw_both),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChanceRates {
    pub a: f64,
    pub b: f64,
    /// Chance rate of the paired label `(g_a, g_b)`.
    pub both: f64,
}

/// Row-id audit of the exclusion split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionAudit {
    pub train_rows: usize,
    pub test_rows: usize,
    /// Training rows that share an id with a test row or carry the
    /// excluded combination.
    pub leaked_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgRunResult {
    pub pair: CgPair,
    pub factor_names: [String; 2],
    pub probe: ProbeKind,
    /// Scores on the held-out combination.
    pub novel: CgScores,
    /// Scores on a random test split.
    pub control: CgScores,
    pub chance: ChanceRates,
    pub audit: ExclusionAudit,
}

struct Partition<'a> {
    train_set: &'a RepresentationSet,
    train: Vec<usize>,
    test_set: &'a RepresentationSet,
    test: Vec<usize>,
}

fn paired_chance(sets: &[&RepresentationSet], pair: &CgPair) -> Result<ChanceRates> {
    let kb = sets[0].schema().cardinality(pair.factor_b);
    let collect = |f: &dyn Fn(&RepresentationSet, usize) -> usize| -> Vec<usize> {
        sets.iter().flat_map(|s| (0..s.len()).map(move |r| f(s, r))).collect()
    };
    Ok(ChanceRates {
        a: chance_rate(&collect(&|s, r| s.factor(pair.factor_a)[r]))?,
        b: chance_rate(&collect(&|s, r| s.factor(pair.factor_b)[r]))?,
        both: chance_rate(&collect(&|s, r| s.factor(pair.factor_a)[r] * kb + s.factor(pair.factor_b)[r]))?,
    })
}

/// Trains one probe per factor of the pair on `train` rows and scores the
/// `test` rows.
fn score_partition(
    part: &Partition<'_>,
    pair: &CgPair,
    kind: ProbeKind,
    train_cfg: &TrainConfig,
    chance: &ChanceRates,
    salt: u64,
) -> Result<CgScores> {
    let all: Vec<usize> = (0..part.train_set.num_neurons()).collect();
    let train_x = part.train_set.feature_rows(&all);
    let test_x = part.test_set.feature_rows(&all);
    let x_tr: Vec<Vec<f64>> = part.train.iter().map(|&r| train_x[r].clone()).collect();
    let x_te: Vec<Vec<f64>> = part.test.iter().map(|&r| test_x[r].clone()).collect();
    let kind_salt = match kind {
        ProbeKind::Mlp => 0,
        ProbeKind::Linear => 1,
    };
    let mut correct = Vec::with_capacity(2);
    for factor in [pair.factor_a, pair.factor_b] {
        let y_tr: Vec<usize> = part.train.iter().map(|&r| part.train_set.factor(factor)[r]).collect();
        let y_te: Vec<usize> = part.test.iter().map(|&r| part.test_set.factor(factor)[r]).collect();
        let cfg = train_cfg.with_seed(factor_seed(train_cfg.seed, factor, 10 + 2 * salt + kind_salt));
        let k = part.train_set.schema().cardinality(factor);
        let model = train_probe_with_classes(&x_tr, &y_tr, k, kind, &cfg)?;
        let predicted = model.predict(&x_te)?;
        correct.push(predicted.iter().zip(&y_te).map(|(p, y)| p == y).collect::<Vec<bool>>());
    }
    let t = part.test.len() as f64;
    let frac = |hits: usize| hits as f64 / t;
    let raw_a = frac(correct[0].iter().filter(|&&c| c).count());
    let raw_b = frac(correct[1].iter().filter(|&&c| c).count());
    let raw_both = frac(correct[0].iter().zip(&correct[1]).filter(|(a, b)| **a && **b).count());
    Ok(CgScores {
        a: adjusted_accuracy(raw_a, chance.a),
        b: adjusted_accuracy(raw_b, chance.b),
        both: adjusted_accuracy(raw_both, chance.both),
        raw_a,
        raw_b,
        raw_both,
    })
}

fn carries(set: &RepresentationSet, r: usize, pair: &CgPair) -> bool {
    set.factor(pair.factor_a)[r] == pair.value_a && set.factor(pair.factor_b)[r] == pair.value_b
}

fn audit(part: &Partition<'_>, pair: &CgPair, check_ids: bool) -> ExclusionAudit {
    let test_ids: HashSet<usize> = part.test.iter().map(|&r| part.test_set.row_ids()[r]).collect();
    let leaked_rows = part
        .train
        .iter()
        .filter(|&&r| (check_ids && test_ids.contains(&part.train_set.row_ids()[r])) || carries(part.train_set, r, pair))
        .count();
    ExclusionAudit {
        train_rows: part.train.len(),
        test_rows: part.test.len(),
        leaked_rows,
    }
}

fn control_scores(
    set: &RepresentationSet,
    pair: &CgPair,
    kind: ProbeKind,
    config: &CgConfig,
    chance: &ChanceRates,
) -> Result<CgScores> {
    let (train, test) = split_indices(
        set,
        &SplitSpec::Random {
            test_fraction: config.control_test_fraction,
            seed: config.control_seed,
        },
    )?;
    let part = Partition {
        train_set: set,
        train,
        test_set: set,
        test,
    };
    score_partition(&part, pair, kind, &config.train, chance, 1)
}

fn exclusion_partition<'a>(set: &'a RepresentationSet, pair: &CgPair) -> Result<Partition<'a>> {
    pair.validate(set.schema())?;
    let (train, test) = split_indices(set, &pair.split_spec()).map_err(|e| match e {
        Error::DegenerateSplit(msg) => Error::DegenerateSplit(format!("pair {}: {msg}", pair.describe(set.schema()))),
        other => other,
    })?;
    Ok(Partition {
        train_set: set,
        train,
        test_set: set,
        test,
    })
}

fn names(schema: &FactorSchema, pair: &CgPair) -> [String; 2] {
    [schema.name(pair.factor_a).to_string(), schema.name(pair.factor_b).to_string()]
}

/// Exclusion split of a single set, probes on all neurons, plus the
/// random-split control.
pub fn run_cg(set: &RepresentationSet, pair: &CgPair, kind: ProbeKind, config: &CgConfig) -> Result<CgRunResult> {
    config.train.validate()?;
    let part = exclusion_partition(set, pair)?;
    let chance = paired_chance(&[set], pair)?;
    let novel = score_partition(&part, pair, kind, &config.train, &chance, 0)?;
    let control = control_scores(set, pair, kind, config, &chance)?;
    Ok(CgRunResult {
        pair: *pair,
        factor_names: names(set.schema(), pair),
        probe: kind,
        novel,
        control,
        chance,
        audit: audit(&part, pair, true),
    })
}

/// CG on externally split encodings. `test` is filtered to the rows that
/// carry the pair's combination; `train` must contain none of them. The
/// control is a random split of `train`.
pub fn run_cg_presplit(
    train: &RepresentationSet,
    test: &RepresentationSet,
    pair: &CgPair,
    kind: ProbeKind,
    config: &CgConfig,
) -> Result<CgRunResult> {
    config.train.validate()?;
    if train.schema() != test.schema() {
        return Err(Error::invalid("train and test sets have different schemas"));
    }
    if train.num_neurons() != test.num_neurons() {
        return Err(Error::LengthMismatch {
            expected: train.num_neurons(),
            found: test.num_neurons(),
        });
    }
    pair.validate(train.schema())?;
    let test_rows: Vec<usize> = (0..test.len()).filter(|&r| carries(test, r, pair)).collect();
    let train_rows: Vec<usize> = (0..train.len()).collect();
    let describe = pair.describe(train.schema());
    if test_rows.is_empty() {
        return Err(Error::DegenerateSplit(format!("pair {describe}: no test rows carry the combination")));
    }
    let part = Partition {
        train_set: train,
        train: train_rows,
        test_set: test,
        test: test_rows,
    };
    let report = audit(&part, pair, false);
    if report.leaked_rows > 0 {
        return Err(Error::DegenerateSplit(format!(
            "pair {describe}: {} training rows carry the excluded combination",
            report.leaked_rows
        )));
    }
    let chance = paired_chance(&[train, test], pair)?;
    let novel = score_partition(&part, pair, kind, &config.train, &chance, 0)?;
    let control = control_scores(train, pair, kind, config, &chance)?;
    Ok(CgRunResult {
        pair: *pair,
        factor_names: names(train.schema(), pair),
        probe: kind,
        novel,
        control,
        chance,
        audit: report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgAverage {
    pub probe: ProbeKind,
    pub novel: CgScores,
    pub control: CgScores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgSuiteResult {
    pub runs: Vec<CgRunResult>,
    /// One entry per probe kind, in request order.
    pub averages: Vec<CgAverage>,
}

impl CgSuiteResult {
    pub fn average(&self, kind: ProbeKind) -> Option<&CgAverage> {
        self.averages.iter().find(|a| a.probe == kind)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Rows `CG`, `linear CG`, `normal test set`; columns factor a, factor
    /// b, both. Adjusted accuracies averaged over pairs.
    pub fn text_table(&self) -> String {
        let (col_a, col_b) = match self.runs.first() {
            Some(run) if self.runs.iter().all(|r| r.factor_names == run.factor_names) => {
                (run.factor_names[0].clone(), run.factor_names[1].clone())
            }
            _ => ("factor a".to_string(), "factor b".to_string()),
        };
        let mut out = format!("{:<16} {:>10} {:>10} {:>10}\n", "", col_a, col_b, "both");
        let mut row = |label: &str, s: &CgScores| {
            let _ = writeln!(out, "{label:<16} {:>10.3} {:>10.3} {:>10.3}", s.a, s.b, s.both);
        };
        if let Some(avg) = self.average(ProbeKind::Mlp) {
            row("CG", &avg.novel);
        }
        if let Some(avg) = self.average(ProbeKind::Linear) {
            row("linear CG", &avg.novel);
        }
        if let Some(avg) = self.average(ProbeKind::Mlp).or_else(|| self.averages.first()) {
            row("normal test set", &avg.control);
        }
        out
    }
}

/// Runs every pair with every probe kind. All exclusion splits are checked
/// before any training so a degenerate pair fails the suite immediately.
pub fn run_cg_suite(
    set: &RepresentationSet,
    pairs: &[CgPair],
    kinds: &[ProbeKind],
    config: &CgConfig,
) -> Result<CgSuiteResult> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair list"));
    }
    if kinds.is_empty() {
        return Err(Error::Empty("probe kind list"));
    }
    for pair in pairs {
        exclusion_partition(set, pair)?;
    }
    let jobs: Vec<(CgPair, ProbeKind)> = kinds
        .iter()
        .flat_map(|&k| pairs.iter().map(move |&p| (p, k)))
        .collect();
    let runs = par_map(&jobs, |(pair, kind)| run_cg(set, pair, *kind, config))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(runs, kinds))
}

/// Suite over externally split encodings.
pub fn run_cg_suite_presplit(
    train: &RepresentationSet,
    test: &RepresentationSet,
    pairs: &[CgPair],
    kinds: &[ProbeKind],
    config: &CgConfig,
) -> Result<CgSuiteResult> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair list"));
    }
    if kinds.is_empty() {
        return Err(Error::Empty("probe kind list"));
    }
    let jobs: Vec<(CgPair, ProbeKind)> = kinds
        .iter()
        .flat_map(|&k| pairs.iter().map(move |&p| (p, k)))
        .collect();
    let runs = par_map(&jobs, |(pair, kind)| run_cg_presplit(train, test, pair, *kind, config))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(runs, kinds))
}

fn summarize(runs: Vec<CgRunResult>, kinds: &[ProbeKind]) -> CgSuiteResult {
    let mut averages = Vec::new();
    for &kind in kinds {
        if averages.iter().any(|a: &CgAverage| a.probe == kind) {
            continue;
        }
        let of_kind: Vec<&CgRunResult> = runs.iter().filter(|r| r.probe == kind).collect();
        let novel: Vec<CgScores> = of_kind.iter().map(|r| r.novel).collect();
        let control: Vec<CgScores> = of_kind.iter().map(|r| r.control).collect();
        averages.push(CgAverage {
            probe: kind,
            novel: CgScores::mean(&novel),
            control: CgScores::mean(&control),
        });
    }
    CgSuiteResult { runs, averages }
}
