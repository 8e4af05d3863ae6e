//! Fixtures shared by the benchmarks.

use cyclesearch_core::data::{generate_synthetic, SyntheticKind, SyntheticTask, UnpairedDataset};
use cyclesearch_core::search_engine::{Scheme, SearchConfig};
use cyclesearch_core::Tensor;

/// Deterministic pseudo-random values in [-1, 1].
pub fn pattern(shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |i| (i as f64 * 12.9898).sin())
}

pub fn color_swap(image_size: usize, n: usize) -> UnpairedDataset {
    generate_synthetic(&SyntheticTask {
        kind: SyntheticKind::ColorSwap,
        image_size,
        n_a: n,
        n_b: n,
        seed: 1,
    })
    .expect("valid synthetic task")
}

pub fn search_config(scheme: Scheme, n_cells: usize, hidden: usize) -> SearchConfig {
    SearchConfig {
        scheme,
        n_cells,
        hidden_search: hidden,
        epochs: 1,
        seed: 1,
        ..SearchConfig::default()
    }
}
