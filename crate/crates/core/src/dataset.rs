//! Representation/factor data model, CSV + JSON ingestion, latent binning
//! and train/test splitting.
//!
//! A [`RepresentationSet`] pairs `N` rows of `m` real-valued neuron
//! activations with `n` discrete factor labels. Storage is column-major:
//! metrics mostly walk one neuron or one factor at a time.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One discrete generative factor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub cardinality: usize,
}

/// Ordered list of factors; index `j` identifies factor `g_j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct FactorSchema {
    factors: Vec<Factor>,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    factors: Vec<Factor>,
}

impl TryFrom<RawSchema> for FactorSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        FactorSchema::new(raw.factors)
    }
}

impl From<FactorSchema> for RawSchema {
    fn from(schema: FactorSchema) -> Self {
        RawSchema {
            factors: schema.factors,
        }
    }
}

impl FactorSchema {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidSchema("no factors".into()));
        }
        let mut seen = HashSet::new();
        for f in &factors {
            if f.cardinality < 2 {
                return Err(Error::InvalidSchema(format!(
                    "factor `{}` has cardinality {} (< 2)",
                    f.name, f.cardinality
                )));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate factor name `{}`",
                    f.name
                )));
            }
        }
        Ok(Self { factors })
    }

    /// Builds a schema from `(name, cardinality)` pairs.
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(name, cardinality)| Factor {
                    name: name.into(),
                    cardinality,
                })
                .collect(),
        )
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn cardinality(&self, j: usize) -> usize {
        self.factors[j].cardinality
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.cardinality).collect()
    }

    pub fn name(&self, j: usize) -> &str {
        &self.factors[j].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Latent activations paired with factor labels.
///
/// Immutable once built. `row_ids` records each row's index in the set it
/// was split from, so held-out rows can be audited after splitting.
#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationSet {
    latents: Vec<Vec<f64>>,
    labels: Vec<Vec<usize>>,
    schema: FactorSchema,
    row_ids: Vec<usize>,
}

impl RepresentationSet {
    /// Builds a set from column-major data: `latents[i]` is neuron `i`
    /// over all rows, `labels[j]` is factor `j` over all rows.
    pub fn new(latents: Vec<Vec<f64>>, labels: Vec<Vec<usize>>, schema: FactorSchema) -> Result<Self> {
        let rows = labels.first().map_or(0, Vec::len);
        let row_ids = (0..rows).collect();
        Self::with_row_ids(latents, labels, schema, row_ids)
    }

    fn with_row_ids(
        latents: Vec<Vec<f64>>,
        labels: Vec<Vec<usize>>,
        schema: FactorSchema,
        row_ids: Vec<usize>,
    ) -> Result<Self> {
        if labels.len() != schema.len() {
            return Err(Error::InvalidSchema(format!(
                "{} label columns but schema lists {} factors",
                labels.len(),
                schema.len()
            )));
        }
        if latents.len() < labels.len() {
            return Err(Error::TooFewNeurons {
                factors: labels.len(),
                neurons: latents.len(),
            });
        }
        let rows = row_ids.len();
        if rows == 0 {
            return Err(Error::Empty("representation set"));
        }
        for col in latents.iter().map(Vec::len).chain(labels.iter().map(Vec::len)) {
            if col != rows {
                return Err(Error::LengthMismatch {
                    expected: rows,
                    found: col,
                });
            }
        }
        for (i, col) in latents.iter().enumerate() {
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLatent {
                    row,
                    column: format!("z{i}"),
                });
            }
        }
        for (j, col) in labels.iter().enumerate() {
            let k = schema.cardinality(j);
            if let Some(row) = col.iter().position(|&v| v >= k) {
                return Err(Error::LabelOutOfRange {
                    row,
                    column: format!("g{j}"),
                    value: col[row] as i64,
                    cardinality: k,
                });
            }
        }
        Ok(Self {
            latents,
            labels,
            schema,
            row_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    pub fn num_neurons(&self) -> usize {
        self.latents.len()
    }

    pub fn num_factors(&self) -> usize {
        self.labels.len()
    }

    pub fn schema(&self) -> &FactorSchema {
        &self.schema
    }

    pub fn neuron(&self, i: usize) -> &[f64] {
        &self.latents[i]
    }

    pub fn factor(&self, j: usize) -> &[usize] {
        &self.labels[j]
    }

    pub fn neurons(&self) -> &[Vec<f64>] {
        &self.latents
    }

    pub fn factors(&self) -> &[Vec<usize>] {
        &self.labels
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    /// Row-major feature matrix over the selected neurons.
    pub fn feature_rows(&self, neurons: &[usize]) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|r| neurons.iter().map(|&i| self.latents[i][r]).collect())
            .collect()
    }

    /// Sub-set of rows, keeping the original row ids.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let pick_f = |col: &Vec<f64>| rows.iter().map(|&r| col[r]).collect::<Vec<_>>();
        let pick_u = |col: &Vec<usize>| rows.iter().map(|&r| col[r]).collect::<Vec<_>>();
        Self::with_row_ids(
            self.latents.iter().map(pick_f).collect(),
            self.labels.iter().map(pick_u).collect(),
            self.schema.clone(),
            rows.iter().map(|&r| self.row_ids[r]).collect(),
        )
    }
}

fn expected_header(m: usize, n: usize) -> Vec<String> {
    (0..m)
        .map(|i| format!("z{i}"))
        .chain((0..n).map(|j| format!("g{j}")))
        .collect()
}

/// Reads a data CSV (`z0..z{m-1},g0..g{n-1}`) and its JSON schema sidecar.
pub fn load_representation_set(data_path: &Path, schema_path: &Path) -> Result<RepresentationSet> {
    let schema_text =
        fs::read_to_string(schema_path).map_err(|e| Error::io(schema_path, e))?;
    let schema = FactorSchema::from_json(&schema_text)?;
    let data = fs::read(data_path).map_err(|e| Error::io(data_path, e))?;
    parse_representation_csv(&data, schema)
}

/// Parses CSV bytes against a schema. Split out from
/// [`load_representation_set`] so in-memory callers (the browser demo,
/// tests) avoid the filesystem.
pub fn parse_representation_csv(data: &[u8], schema: FactorSchema) -> Result<RepresentationSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(data);
    let csv_err = |e: csv::Error| Error::MalformedCsv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let n = schema.len();
    let m = header.len().saturating_sub(n);
    let expected = expected_header(m, n);
    if header != expected {
        return Err(Error::HeaderMismatch {
            expected: expected.join(","),
            found: header.join(","),
        });
    }

    let mut latents = vec![Vec::new(); m];
    let mut labels = vec![Vec::new(); n];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        for (i, col) in latents.iter_mut().enumerate() {
            let text = &record[i];
            let v: f64 = text.parse().map_err(|_| Error::BadCell {
                row,
                column: expected[i].clone(),
                text: text.to_owned(),
                expected: "a real number",
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteLatent {
                    row,
                    column: expected[i].clone(),
                });
            }
            col.push(v);
        }
        for (j, col) in labels.iter_mut().enumerate() {
            let text = &record[m + j];
            let v: i64 = text.parse().map_err(|_| Error::BadCell {
                row,
                column: expected[m + j].clone(),
                text: text.to_owned(),
                expected: "an integer class index",
            })?;
            let k = schema.cardinality(j);
            if v < 0 || v as usize >= k {
                return Err(Error::LabelOutOfRange {
                    row,
                    column: expected[m + j].clone(),
                    value: v,
                    cardinality: k,
                });
            }
            col.push(v as usize);
        }
    }
    RepresentationSet::new(latents, labels, schema)
}

/// Renders the data CSV. Floats use shortest round-trip formatting.
pub fn representation_csv(set: &RepresentationSet) -> String {
    let mut out = expected_header(set.num_neurons(), set.num_factors()).join(",");
    out.push('\n');
    for r in 0..set.len() {
        let cells = set
            .neurons()
            .iter()
            .map(|col| col[r].to_string())
            .chain(set.factors().iter().map(|col| col[r].to_string()));
        out.push_str(&cells.collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

/// Writes the CSV + schema pair read by [`load_representation_set`].
pub fn write_representation_set(set: &RepresentationSet, data_path: &Path, schema_path: &Path) -> Result<()> {
    write_atomic(data_path, representation_csv(set).as_bytes())?;
    write_atomic(schema_path, set.schema().to_json()?.as_bytes())
}

/// Writes via a sibling temp file and rename, so readers never see a
/// partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinStrategy {
    Quantile,
    EqualWidth,
}

/// Binning used when a continuous neuron has to be treated as discrete.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinConfig {
    pub bins: usize,
    pub strategy: BinStrategy,
}

impl Default for BinConfig {
    fn default() -> Self {
        Self {
            bins: 20,
            strategy: BinStrategy::Quantile,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedNeuron {
    pub bins: Vec<usize>,
    /// `B - 1` non-decreasing thresholds; a value `v` lands in bin
    /// `#{t : t < v}`, so values equal to a threshold go to the lower bin.
    pub boundaries: Vec<f64>,
    pub strategy: BinStrategy,
    /// Set when every value is identical and `B > 1`.
    pub degenerate: bool,
}

impl DiscretizedNeuron {
    pub fn num_bins(&self) -> usize {
        self.boundaries.len() + 1
    }
}

/// Maps real values to `B` bins.
///
/// When the values take at most `B` distinct levels, levels map to bins
/// `0, 1, ...` in sorted order whatever the strategy, so already-discrete
/// neurons are never merged or split.
pub fn discretize_neuron(values: &[f64], bins: usize, strategy: BinStrategy) -> Result<DiscretizedNeuron> {
    if bins == 0 {
        return Err(Error::invalid("bin count must be at least 1"));
    }
    if values.is_empty() {
        return Err(Error::Empty("values"));
    }
    if let Some(row) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLatent {
            row,
            column: "values".into(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut levels = sorted.clone();
    levels.dedup();
    let boundaries = if levels.len() <= bins {
        let max = *levels.last().expect("nonempty");
        let mut b: Vec<f64> = levels[..levels.len() - 1].to_vec();
        b.resize(bins - 1, max);
        b
    } else {
        match strategy {
            BinStrategy::Quantile => {
                let n = sorted.len();
                (1..bins)
                    .map(|k| {
                        // smallest order statistic with at least k/B of the mass at or below it
                        let pos = (k * n).div_ceil(bins);
                        sorted[pos.max(1) - 1]
                    })
                    .collect()
            }
            BinStrategy::EqualWidth => {
                let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
                let width = (hi - lo) / bins as f64;
                (1..bins).map(|k| lo + width * k as f64).collect()
            }
        }
    };

    let assigned = values
        .iter()
        .map(|&v| boundaries.partition_point(|&t| t < v))
        .collect();
    Ok(DiscretizedNeuron {
        bins: assigned,
        boundaries,
        strategy,
        degenerate: levels.len() == 1 && bins > 1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitSpec {
    Random {
        test_fraction: f64,
        seed: u64,
    },
    CgExclusion {
        factor_a: usize,
        value_a: usize,
        factor_b: usize,
        value_b: usize,
    },
}

impl SplitSpec {
    fn validate(&self, schema: &FactorSchema) -> Result<()> {
        match *self {
            SplitSpec::Random { test_fraction, .. } => {
                if !(test_fraction > 0.0 && test_fraction < 1.0) {
                    return Err(Error::invalid(format!(
                        "test fraction {test_fraction} outside (0, 1)"
                    )));
                }
            }
            SplitSpec::CgExclusion {
                factor_a,
                value_a,
                factor_b,
                value_b,
            } => {
                if factor_a == factor_b {
                    return Err(Error::invalid("excluded factors must be distinct"));
                }
                for (f, v) in [(factor_a, value_a), (factor_b, value_b)] {
                    if f >= schema.len() {
                        return Err(Error::invalid(format!("factor index {f} out of range")));
                    }
                    if v >= schema.cardinality(f) {
                        return Err(Error::invalid(format!(
                            "value {v} outside cardinality {} of factor {f}",
                            schema.cardinality(f)
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Row indices (into `set`) of the train and test partitions.
pub fn split_indices(set: &RepresentationSet, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate(set.schema())?;
    let n = set.len();
    let (train, test): (Vec<usize>, Vec<usize>) = match *spec {
        SplitSpec::Random { test_fraction, seed } => {
            let k = (n as f64 * test_fraction).floor() as usize;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut test = order[..k].to_vec();
            let mut train = order[k..].to_vec();
            test.sort_unstable();
            train.sort_unstable();
            (train, test)
        }
        SplitSpec::CgExclusion {
            factor_a,
            value_a,
            factor_b,
            value_b,
        } => {
            let (ga, gb) = (set.factor(factor_a), set.factor(factor_b));
            (0..n).partition(|&r| !(ga[r] == value_a && gb[r] == value_b))
        }
    };
    if test.is_empty() {
        return Err(Error::DegenerateSplit(format!("{spec:?} leaves the test set empty")));
    }
    if train.is_empty() {
        return Err(Error::DegenerateSplit(format!("{spec:?} leaves the train set empty")));
    }
    Ok((train, test))
}

/// Splits a set into `(train, test)`.
pub fn make_split(set: &RepresentationSet, spec: &SplitSpec) -> Result<(RepresentationSet, RepresentationSet)> {
    let (train, test) = split_indices(set, spec)?;
    Ok((set.select_rows(&train)?, set.select_rows(&test)?))
}
