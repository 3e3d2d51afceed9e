//! Cayley graphs of enumerated finite groups: word metric, growth, distance
//! statistics, the spectral gap of the combinatorial Laplacian, and an on-disk cache.

pub mod cache;
pub mod graph;
pub mod metrics;
pub mod spectral;

use thiserror::Error;

pub use cache::{cache_key, load_graph, save_graph, GraphCache};
pub use graph::{bfs_closure, CayleyGraph, Enumeration};
pub use metrics::{
    bfs_tree, diameter, distance_histogram, distances_from, far_fraction_from_histogram, far_pair_fraction,
    growth_function, is_connected, translation, word_distance, GrowthFunction, UNREACHED,
};
pub use spectral::{dense_spectral_gap, spectral_gap, SpectralData, SpectralOptions};

#[derive(Debug, Error)]
pub enum CayleyError {
    #[error("closure exceeded the element budget after {enumerated} elements")]
    PartialClosure { enumerated: usize, prefix: Vec<Vec<u8>> },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("vertex {0} out of range (graph has {1} vertices)")]
    OutOfRange(usize, usize),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("eigensolver did not converge after {iterations} iterations (best {best}, residual {residual:e})")]
    Convergence { best: f64, residual: f64, iterations: usize },
    #[error("cache file is corrupt: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
