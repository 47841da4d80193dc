//! Multi-resolution tree representations of brain structural connectomes.
//!
//! The crate builds a hierarchy-aligned tree summary of a fiber-count
//! adjacency matrix (each internal node's weight counts the fibers connecting
//! distinct children of that node), verifies that construction against an
//! exact computational-topology oracle, and provides the statistical pipeline
//! used to compare tree features against principal components of the
//! vectorized matrix: PCA, CCA with Wilks's lambda tests, cross-validated
//! prediction, and Bayesian model averaging with coefficient back-projection.
//! A synthetic-cohort generator with planted signal makes every pipeline
//! claim testable without access to restricted imaging data.

pub mod atlas;
pub mod bma;
pub mod connectome;
pub mod homology;
pub mod regression;
pub mod stats;
pub mod synth;
pub mod tree;
pub mod viz;

pub use atlas::{AtlasHierarchy, HierarchyNode, NodeId};
pub use connectome::{AdjacencyMatrix, FeatureMatrix};
pub use tree::ConnectomeTree;

/// Crate-level error, one variant per subsystem.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Atlas(#[from] atlas::AtlasError),
    #[error(transparent)]
    Connectome(#[from] connectome::ConnectomeError),
    #[error(transparent)]
    Tree(#[from] tree::TreeError),
    #[error(transparent)]
    Homology(#[from] homology::HomologyError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Regression(#[from] regression::RegressionError),
    #[error(transparent)]
    Bma(#[from] bma::BmaError),
    #[error(transparent)]
    Viz(#[from] viz::VizError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
}

/// Coarse classification used by the CLI to pick an exit code: input and
/// schema problems versus numerical failures during computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Computation,
}

/// Derive a child seed from a base seed and a sequence of tags (task indices,
/// repeat numbers, ...). SplitMix64 chaining keeps derived streams decoupled
/// and makes every parallel task's randomness a pure function of its
/// coordinates, independent of scheduling.
pub(crate) fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e3779b97f4a7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
    let mut state = splitmix(base);
    for &tag in tags {
        state = splitmix(state ^ tag.wrapping_mul(0x9e3779b97f4a7c15));
    }
    state
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Atlas(_) | Error::Connectome(_) | Error::Synth(_) => ErrorKind::Validation,
            Error::Tree(e) => e.kind(),
            Error::Homology(e) => e.kind(),
            Error::Stats(e) => e.kind(),
            Error::Regression(e) => e.kind(),
            Error::Bma(e) => e.kind(),
            Error::Viz(_) => ErrorKind::Validation,
        }
    }
}
