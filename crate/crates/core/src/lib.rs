//! Evaluation of latent representations against ground-truth generative
//! factors.
//!
//! The pipeline for one representation is:
//!
//! 1. [`dataset`]: load `N × m` latents and `N × n` discrete factor labels.
//! 2. [`infotheory`]: bin each neuron and score every (factor, neuron)
//!    pair by mutual information, giving an [`ImportanceMatrix`].
//! 3. [`align`]: map factors to distinct neurons with Kuhn-Munkres (or the
//!    greedy argmax baseline, for comparison).
//! 4. [`metrics`]: single-neuron classification (SNC) and neuron knockout
//!    (NK), plus MIG, SAP and DCI for reference.
//!
//! [`cgtask`] runs the novel-combination (compositional generalization)
//! probe protocol on precomputed encodings, [`analysis`] correlates metric
//! scores with it, and [`synth`] generates representations with known
//! structure (the two-neuron colour/shape toy, XOR encodings, rotations,
//! joint codes).

pub mod align;
pub mod analysis;
pub mod cgtask;
pub mod classify;
pub mod dataset;
pub mod error;
pub mod infotheory;
pub mod metrics;
pub mod synth;

pub use align::{greedy_alignment, injective_alignment, AlignMode, Alignment};
pub use dataset::{BinConfig, BinStrategy, FactorSchema, RepresentationSet, SplitSpec};
pub use error::{Error, Result};
pub use infotheory::ImportanceMatrix;

/// Order-preserving map, parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}
