//! Shared fixtures for unit tests.

use crate::envgraph::{EnvironmentGraph, Position};
use crate::rng::SplitMix64;

/// Random connected graph: a ring through all nodes plus extra chords,
/// positions drawn in a 10 m cube.
pub(crate) fn random_graph(seed: u64, n: usize, extra_edges: usize) -> EnvironmentGraph {
    let mut rng = SplitMix64::new(seed);
    let mut unit = move || rng.next_below(10_000) as f64 / 1_000.0;
    let nodes: Vec<(String, Position)> = (0..n)
        .map(|i| {
            (
                format!("v{i}"),
                Position {
                    x: unit(),
                    y: unit(),
                    z: unit(),
                },
            )
        })
        .collect();
    let mut edges: Vec<(String, String)> = (0..n)
        .map(|i| (format!("v{i}"), format!("v{}", (i + 1) % n)))
        .collect();
    let mut rng = SplitMix64::new(seed ^ 0xABCD);
    for _ in 0..extra_edges {
        let a = rng.next_below(n as u64) as usize;
        let b = rng.next_below(n as u64) as usize;
        if a != b {
            edges.push((format!("v{a}"), format!("v{b}")));
        }
    }
    EnvironmentGraph::new("rand", nodes, edges).unwrap()
}
