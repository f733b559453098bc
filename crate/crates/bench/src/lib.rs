//! Fixtures shared by the criterion benches.

use sdcons_core::graph::{self, RandomGraphRecipe};
use sdcons_core::sim::NetworkState;
use sdcons_core::synthesis::{self, DesignSpec, GainDesign};
use sdcons_core::WeightedDigraph;

/// `(hbar, lambda2, lambdaN)` of the two reference regimes.
pub const REGIMES: [(&str, f64, f64, f64); 2] = [("five-agent", 3.0, 0.3, 6.0), ("hundred-agent", 1.0, 5.0, 60.0)];

pub fn spec(hbar: f64, lambda2: f64, lambda_n: f64) -> DesignSpec {
    DesignSpec::new(hbar, lambda2, lambda_n).expect("reference spec is valid")
}

pub fn designed(hbar: f64, lambda2: f64, lambda_n: f64) -> GainDesign {
    synthesis::design(&spec(hbar, lambda2, lambda_n))
}

/// A random balanced graph in the band plus a spread-out initial state.
pub fn network(agents: usize, lo: f64, hi: f64, seed: u64) -> (WeightedDigraph, NetworkState) {
    let g = graph::random_balanced_graph(&RandomGraphRecipe::new(agents, lo, hi), seed).expect("band is feasible");
    let x = (0..agents).flat_map(|i| [i as f64 - agents as f64 / 2.0, ((i * 7) % 5) as f64 / 5.0 - 0.5]).collect();
    (g, NetworkState::new(agents, 2, x).expect("state shape"))
}
