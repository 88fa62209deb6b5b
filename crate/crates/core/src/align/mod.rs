//! Factor → neuron alignment.
//!
//! [`greedy_alignment`] is the per-factor argmax used by MIG/SAP/DCI-style
//! metrics; it lets two factors claim the same neuron. [`injective_alignment`]
//! solves the assignment problem so every factor gets its own neuron, with
//! ties among optimal assignments resolved to the lexicographically
//! smallest assignment vector.

mod hinton;
pub mod hungarian;

use serde::{Deserialize, Serialize};

pub use hinton::{export_hinton, hinton_svg, hinton_text};

use crate::error::{Error, Result};
use crate::infotheory::ImportanceMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    Greedy,
    Injective,
}

impl std::str::FromStr for AlignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(AlignMode::Greedy),
            "injective" => Ok(AlignMode::Injective),
            other => Err(Error::invalid(format!("unknown alignment mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// `assignment[j]` is the neuron aligned to factor `j`.
    pub assignment: Vec<usize>,
    pub mode: AlignMode,
    pub objective_value: f64,
    /// All-zero importance: the assignment is the identity prefix.
    #[serde(default)]
    pub degenerate: bool,
}

impl Alignment {
    pub fn neuron_for(&self, factor: usize) -> usize {
        self.assignment[factor]
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.assignment.iter().all(|n| seen.insert(*n))
    }
}

/// Sum of the importance picked out by `assignment`, in factor order.
pub fn objective(imp: &ImportanceMatrix, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(j, &i)| imp.get(j, i))
        .sum()
}

/// Each factor independently takes its most informative neuron (lowest
/// index on ties). Duplicates are allowed.
pub fn greedy_alignment(imp: &ImportanceMatrix) -> Alignment {
    let assignment: Vec<usize> = imp
        .values
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect();
    Alignment {
        objective_value: objective(imp, &assignment),
        degenerate: imp.max() == 0.0,
        assignment,
        mode: AlignMode::Greedy,
    }
}

fn best_completion(imp: &ImportanceMatrix, fixed: &[usize]) -> f64 {
    let rows: Vec<Vec<f64>> = (fixed.len()..imp.num_factors())
        .map(|j| {
            (0..imp.num_neurons())
                .filter(|i| !fixed.contains(i))
                .map(|i| imp.get(j, i))
                .collect()
        })
        .collect();
    let free: Vec<usize> = (0..imp.num_neurons()).filter(|i| !fixed.contains(i)).collect();
    let picked = hungarian::maximize_rect(&rows);
    picked
        .iter()
        .enumerate()
        .map(|(k, &c)| imp.get(fixed.len() + k, free[c]))
        .sum()
}

/// Maximizes `Σ_j imp[j, f(j)]` over injective `f`.
pub fn injective_alignment(imp: &ImportanceMatrix) -> Result<Alignment> {
    let (n, m) = (imp.num_factors(), imp.num_neurons());
    if n > m {
        return Err(Error::TooFewNeurons {
            factors: n,
            neurons: m,
        });
    }
    let optimum = best_completion(imp, &[]);
    let tol = 1e-10 * (1.0 + optimum.abs());

    // Fix factors one at a time to the smallest neuron that still admits
    // an optimal completion.
    let mut fixed: Vec<usize> = Vec::with_capacity(n);
    let mut prefix = 0.0;
    for j in 0..n {
        let mut chosen = None;
        let free: Vec<usize> = (0..m).filter(|i| !fixed.contains(i)).collect();
        for i in free {
            fixed.push(i);
            let total = prefix + imp.get(j, i) + best_completion(imp, &fixed);
            fixed.pop();
            if total >= optimum - tol {
                chosen = Some(i);
                break;
            }
        }
        let i = chosen.expect("an optimal completion always exists");
        prefix += imp.get(j, i);
        fixed.push(i);
    }
    Ok(Alignment {
        objective_value: objective(imp, &fixed),
        degenerate: imp.max() == 0.0,
        assignment: fixed,
        mode: AlignMode::Injective,
    })
}

pub fn align(imp: &ImportanceMatrix, mode: AlignMode) -> Result<Alignment> {
    match mode {
        AlignMode::Greedy => Ok(greedy_alignment(imp)),
        AlignMode::Injective => injective_alignment(imp),
    }
}
