//! Synthetic representations with known structure.
//!
//! Discrete constructions (the colour/shape toy, XOR) default to exact
//! populations: every outcome appears with its exact multiplicity, so
//! plug-in MI and bin-matching accuracies equal their population values.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{FactorSchema, RepresentationSet};
use crate::error::{Error, Result};

/// Largest label table [`factor_grid`] will build.
pub const DEFAULT_ROW_CAP: usize = 5_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Colour/shape toy: `z0` encodes both factors to 75%, `z1` is a fair
    /// coin.
    #[serde(rename = "table1_a")]
    ColourShapeA,
    /// As `ColourShapeA`, but `z1` agrees with shape 70% of the time.
    #[serde(rename = "table1_b")]
    ColourShapeB,
    /// One binary factor hidden as `z1 = g0 ⊕ z0`.
    Xor,
    /// `z0 = g0` plus the XOR pair `z1`, `z2 = g0 ⊕ z1`.
    RedundantXor,
    /// `z_j = g_j + N(0, σ²)`.
    Ideal,
    /// Two-factor ideal code rotated in the latent plane.
    Rotated { angle: f64 },
    /// `z0` is the mixed-radix index of the whole factor tuple; the other
    /// neurons are noise.
    JointCode,
    /// Standard-normal latents independent of the factors.
    Noise,
}

impl GeneratorKind {
    pub fn parse(name: &str, angle: Option<f64>) -> Result<Self> {
        Ok(match name {
            "table1_a" => GeneratorKind::ColourShapeA,
            "table1_b" => GeneratorKind::ColourShapeB,
            "xor" => GeneratorKind::Xor,
            "redundant_xor" => GeneratorKind::RedundantXor,
            "ideal" => GeneratorKind::Ideal,
            "rotated" => GeneratorKind::Rotated {
                angle: angle.unwrap_or(std::f64::consts::FRAC_PI_4),
            },
            "joint_code" => GeneratorKind::JointCode,
            "noise" => GeneratorKind::Noise,
            other => return Err(Error::invalid(format!("unknown generator kind `{other}`"))),
        })
    }

    fn is_discrete_construction(&self) -> bool {
        matches!(
            self,
            GeneratorKind::ColourShapeA | GeneratorKind::ColourShapeB | GeneratorKind::Xor | GeneratorKind::RedundantXor
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Population {
    /// Each outcome of the construction, `copies` times.
    Exact { copies: usize },
    /// `samples_per_cell` seeded draws for every factor combination.
    Sampled { samples_per_cell: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    /// `None` picks the kind's default schema.
    pub schema: Option<FactorSchema>,
    pub population: Population,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    /// Exact population for the discrete constructions, otherwise 50
    /// samples per cell with σ = 0.1.
    pub fn new(kind: GeneratorKind) -> Self {
        let population = if kind.is_discrete_construction() {
            Population::Exact { copies: 1 }
        } else {
            Population::Sampled { samples_per_cell: 50 }
        };
        Self {
            kind,
            schema: None,
            population,
            noise_sigma: 0.1,
            seed: 0,
        }
    }

    pub fn exact(mut self, copies: usize) -> Self {
        self.population = Population::Exact { copies };
        self
    }

    pub fn sampled(mut self, samples_per_cell: usize) -> Self {
        self.population = Population::Sampled { samples_per_cell };
        self
    }

    pub fn with_schema(mut self, schema: FactorSchema) -> Self {
        self.schema = Some(schema);
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn default_schema(kind: &GeneratorKind) -> FactorSchema {
        let pairs: &[(&str, usize)] = match kind {
            GeneratorKind::ColourShapeA | GeneratorKind::ColourShapeB => &[("colour", 2), ("shape", 2)],
            GeneratorKind::Xor | GeneratorKind::RedundantXor => &[("g0", 2)],
            _ => &[("shape", 3), ("size", 4)],
        };
        FactorSchema::from_pairs(pairs.iter().map(|&(n, k)| (n, k))).expect("static schema")
    }

    fn resolved_schema(&self) -> FactorSchema {
        self.schema.clone().unwrap_or_else(|| Self::default_schema(&self.kind))
    }
}

/// Number of rows of a `copies`-fold factor grid.
pub fn grid_size(schema: &FactorSchema, copies: usize) -> Option<usize> {
    schema
        .cardinalities()
        .into_iter()
        .try_fold(copies, |acc, k| acc.checked_mul(k))
}

/// Every factor combination `copies` times, lexicographic (last factor
/// fastest), duplicates adjacent. Column-major labels.
pub fn factor_grid(schema: &FactorSchema, copies: usize) -> Result<Vec<Vec<usize>>> {
    factor_grid_capped(schema, copies, DEFAULT_ROW_CAP)
}

pub fn factor_grid_capped(schema: &FactorSchema, copies: usize, cap: usize) -> Result<Vec<Vec<usize>>> {
    if copies == 0 {
        return Err(Error::invalid("copies must be at least 1"));
    }
    let rows = grid_size(schema, copies)
        .filter(|&n| n <= cap)
        .ok_or_else(|| Error::invalid(format!("factor grid exceeds the cap of {cap} rows")))?;
    let ks = schema.cardinalities();
    let mut columns = vec![Vec::with_capacity(rows); ks.len()];
    for r in 0..rows {
        let mut cell = r / copies;
        for (j, &k) in ks.iter().enumerate().rev() {
            columns[j].push(cell % k);
            cell /= k;
        }
    }
    Ok(columns)
}

fn require_schema(schema: &FactorSchema, cards: &[usize], kind: &GeneratorKind) -> Result<()> {
    if schema.cardinalities() != cards {
        return Err(Error::invalid(format!(
            "{kind:?} needs factor cardinalities {cards:?}, got {:?}",
            schema.cardinalities()
        )));
    }
    Ok(())
}

struct Columns {
    latents: Vec<Vec<f64>>,
    labels: Vec<Vec<usize>>,
}

impl Columns {
    fn new(m: usize, n: usize) -> Self {
        Self {
            latents: vec![Vec::new(); m],
            labels: vec![Vec::new(); n],
        }
    }

    fn push(&mut self, z: &[f64], g: &[usize]) {
        for (col, &v) in self.latents.iter_mut().zip(z) {
            col.push(v);
        }
        for (col, &v) in self.labels.iter_mut().zip(g) {
            col.push(v);
        }
    }
}

/// Exact colour/shape population. Every (colour, shape, z0-slot) group
/// holds `denominator` rows, `numerator` of which have `z1 = shape`.
/// `None` makes `z1` a fair coin independent of colour, shape and `z0`
/// (8 rows per copy).
pub fn colour_shape_population(shape_agreement: Option<(usize, usize)>, copies: usize) -> Result<RepresentationSet> {
    let schema = GeneratorSpec::default_schema(&GeneratorKind::ColourShapeA);
    let mut cols = Columns::new(2, 2);
    // (colour, shape, z0); colour blue=0/yellow=1, shape square=0/circle=1.
    // Blue squares sit at z0=0 and yellow circles at z0=1; the two
    // off-diagonal cells are split evenly.
    let slots = [
        (0, 0, 0.0),
        (0, 0, 0.0),
        (1, 1, 1.0),
        (1, 1, 1.0),
        (0, 1, 0.0),
        (0, 1, 1.0),
        (1, 0, 0.0),
        (1, 0, 1.0),
    ];
    for _ in 0..copies {
        match shape_agreement {
            None => {
                // z1 per slot, balanced within every (colour, shape) cell and
                // within each z0 level
                let coin = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
                for (&(c, s, z0), &z1) in slots.iter().zip(&coin) {
                    cols.push(&[z0, z1], &[c, s]);
                }
            }
            Some((num, den)) => {
                if den == 0 || num > den {
                    return Err(Error::invalid("agreement must be a fraction in [0, 1]"));
                }
                for &(c, s, z0) in &slots {
                    for k in 0..den {
                        let z1 = if k < num { s } else { 1 - s };
                        cols.push(&[z0, z1 as f64], &[c, s]);
                    }
                }
            }
        }
    }
    RepresentationSet::new(cols.latents, cols.labels, schema)
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        sigma * rng.sample::<f64, _>(StandardNormal)
    }
}

/// Builds the representation described by `spec`.
pub fn generate(spec: &GeneratorSpec) -> Result<RepresentationSet> {
    let schema = spec.resolved_schema();
    let kind = spec.kind;
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::invalid("noise_sigma must be finite and >= 0"));
    }
    let (exact, reps) = match spec.population {
        Population::Exact { copies } => (true, copies),
        Population::Sampled { samples_per_cell } => (false, samples_per_cell),
    };
    if reps == 0 {
        return Err(Error::invalid("population size must be at least 1"));
    }
    if exact && !kind.is_discrete_construction() {
        let ok = match kind {
            GeneratorKind::Noise => false,
            _ => spec.noise_sigma == 0.0,
        };
        if !ok {
            return Err(Error::invalid(format!(
                "{kind:?} has no exact population with noise_sigma = {}",
                spec.noise_sigma
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    match kind {
        GeneratorKind::ColourShapeA | GeneratorKind::ColourShapeB => {
            require_schema(&schema, &[2, 2], &kind)?;
            let agreement = (kind == GeneratorKind::ColourShapeB).then_some((7, 10));
            if exact {
                let base = colour_shape_population(agreement, reps)?;
                return RepresentationSet::new(base.neurons().to_vec(), base.factors().to_vec(), schema);
            }
            let grid = factor_grid(&schema, reps)?;
            let mut cols = Columns::new(2, 2);
            for r in 0..grid[0].len() {
                let (c, s) = (grid[0][r], grid[1][r]);
                let z0 = if c == s { c } else { rng.random_range(0..2) };
                let z1 = match agreement {
                    None => rng.random_range(0..2),
                    Some(_) => {
                        if rng.random_bool(0.7) {
                            s
                        } else {
                            1 - s
                        }
                    }
                };
                cols.push(&[z0 as f64, z1 as f64], &[c, s]);
            }
            RepresentationSet::new(cols.latents, cols.labels, schema)
        }
        GeneratorKind::Xor | GeneratorKind::RedundantXor => {
            require_schema(&schema, &[2], &kind)?;
            let redundant = kind == GeneratorKind::RedundantXor;
            let mut cols = Columns::new(if redundant { 3 } else { 2 }, 1);
            let rows = if exact { 4 * reps } else { 2 * reps };
            for r in 0..rows {
                let (g, z) = if exact {
                    ((r / 2) % 2, r % 2)
                } else {
                    ((r / reps) % 2, rng.random_range(0..2))
                };
                let pair = [z as f64, (g ^ z) as f64];
                if redundant {
                    cols.push(&[g as f64, pair[0], pair[1]], &[g]);
                } else {
                    cols.push(&pair, &[g]);
                }
            }
            RepresentationSet::new(cols.latents, cols.labels, schema)
        }
        GeneratorKind::Ideal | GeneratorKind::Rotated { .. } | GeneratorKind::JointCode | GeneratorKind::Noise => {
            let grid = factor_grid(&schema, reps)?;
            let n = schema.len();
            let ks = schema.cardinalities();
            let rows = grid[0].len();
            let mut latents = vec![Vec::with_capacity(rows); n];
            match kind {
                GeneratorKind::Ideal => {
                    for (j, col) in latents.iter_mut().enumerate() {
                        for r in 0..rows {
                            col.push(grid[j][r] as f64 + gaussian(&mut rng, spec.noise_sigma));
                        }
                    }
                }
                GeneratorKind::Rotated { angle } => {
                    if !(0.0..TAU).contains(&angle) {
                        return Err(Error::invalid(format!("angle {angle} outside [0, 2π)")));
                    }
                    if n != 2 {
                        return Err(Error::invalid("rotated generator needs exactly two factors"));
                    }
                    let (sin, cos) = angle.sin_cos();
                    for r in 0..rows {
                        let a = grid[0][r] as f64 - (ks[0] - 1) as f64 / 2.0 + gaussian(&mut rng, spec.noise_sigma);
                        let b = grid[1][r] as f64 - (ks[1] - 1) as f64 / 2.0 + gaussian(&mut rng, spec.noise_sigma);
                        latents[0].push(cos * a - sin * b);
                        latents[1].push(sin * a + cos * b);
                    }
                }
                GeneratorKind::JointCode => {
                    let cells: usize = ks.iter().product();
                    for r in 0..rows {
                        let index = (0..n).fold(0usize, |acc, j| acc * ks[j] + grid[j][r]);
                        latents[0].push(index as f64 / (cells - 1) as f64);
                        for col in latents.iter_mut().skip(1) {
                            col.push(gaussian(&mut rng, spec.noise_sigma));
                        }
                    }
                }
                _ => {
                    for col in latents.iter_mut() {
                        for _ in 0..rows {
                            col.push(rng.sample::<f64, _>(StandardNormal));
                        }
                    }
                }
            }
            RepresentationSet::new(latents, grid, schema)
        }
    }
}
