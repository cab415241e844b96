//! Random graph corpora for the identity and bound suites.

use gibbscode::graph::{CodeKind, TannerGraph};
use gibbscode::rng::substream;
use rand::Rng;

use crate::error::Result;

/// Bipartite graph with `n_var` variables and `n_chk` checks; every check
/// has one forced neighbour and each further variable with probability
/// `density`.
pub fn random_graph(n_var: usize, n_chk: usize, density: f64, kind: CodeKind, seed: u64) -> Result<TannerGraph> {
    let mut rng = substream(seed, 0);
    let mut edges = Vec::new();
    for c in 0..n_chk {
        let forced = rng.random_range(0..n_var);
        for v in 0..n_var {
            if v == forced || rng.random::<f64>() < density {
                edges.push((v, c));
            }
        }
    }
    Ok(TannerGraph::new(n_var, n_chk, &edges, kind)?)
}

/// Graph sizes drawn uniformly: variables in `[min_var, max_var]`, checks
/// in `[1, max_chk]`.
pub fn random_sized_graph(
    min_var: usize,
    max_var: usize,
    max_chk: usize,
    density: f64,
    kind: CodeKind,
    seed: u64,
) -> Result<TannerGraph> {
    let mut rng = substream(seed, 1);
    let n_var = rng.random_range(min_var..=max_var);
    let n_chk = rng.random_range(1..=max_chk);
    random_graph(n_var, n_chk, density, kind, seed)
}

/// `n` LLRs uniform in `[lo, hi)`.
pub fn uniform_llrs(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, 2);
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}
