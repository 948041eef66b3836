//! Static Watts-Strogatz social graph over customers.

use std::collections::BTreeSet;

use rand::Rng;
use thiserror::Error;

use crate::agents::Mode;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("mean degree {k} must be even and at least 2")]
    InvalidDegree { k: usize },
    #[error("mean degree {k} must be below node count {n}")]
    DegreeTooLarge { n: usize, k: usize },
    #[error("rewiring probability {0} outside [0, 1]")]
    InvalidRewire(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SocialGraph {
    adjacency: Vec<Vec<usize>>,
    mean_degree: usize,
    rewire_prob: f64,
}

impl SocialGraph {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn mean_degree(&self) -> usize {
        self.mean_degree
    }

    pub fn rewire_prob(&self) -> f64 {
        self.rewire_prob
    }

    /// Sorted neighbor ids.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges as `(a, b)` with `a < b`, ordered.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, adj)| adj.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
    }

    /// Mean local clustering coefficient; nodes with degree < 2 count as 0.
    pub fn average_clustering(&self) -> f64 {
        let n = self.n_nodes();
        if n == 0 {
            return 0.0;
        }
        let total: f64 = (0..n)
            .map(|i| {
                let adj = &self.adjacency[i];
                let d = adj.len();
                if d < 2 {
                    return 0.0;
                }
                let mut links = 0usize;
                for (x, &a) in adj.iter().enumerate() {
                    for &b in &adj[x + 1..] {
                        if self.adjacency[a].binary_search(&b).is_ok() {
                            links += 1;
                        }
                    }
                }
                2.0 * links as f64 / (d * (d - 1)) as f64
            })
            .sum();
        total / n as f64
    }
}

/// Ring lattice of `n` nodes each joined to its `k` nearest neighbours, then
/// one pass over the lattice edges (lap by lap) rewiring the far endpoint with
/// probability `beta`. A rewired endpoint is redrawn uniformly until it is
/// neither a self-loop nor a duplicate; after `n` failed draws the original
/// edge is kept.
pub fn generate_watts_strogatz<R: Rng>(
    n: usize,
    k: usize,
    beta: f64,
    rng: &mut R,
) -> Result<SocialGraph, NetworkError> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(NetworkError::InvalidDegree { k });
    }
    if k >= n {
        return Err(NetworkError::DegreeTooLarge { n, k });
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(NetworkError::InvalidRewire(beta));
    }

    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for i in 0..n {
        for j in 1..=k / 2 {
            let b = (i + j) % n;
            adj[i].insert(b);
            adj[b].insert(i);
        }
    }

    for j in 1..=k / 2 {
        for i in 0..n {
            let far = (i + j) % n;
            let coin: f64 = rng.gen();
            if coin >= beta || !adj[i].contains(&far) {
                continue;
            }
            for _ in 0..n {
                let target = rng.gen_range(0..n);
                if target != i && !adj[i].contains(&target) {
                    adj[i].remove(&far);
                    adj[far].remove(&i);
                    adj[i].insert(target);
                    adj[target].insert(i);
                    break;
                }
            }
        }
    }

    Ok(SocialGraph {
        adjacency: adj.into_iter().map(|s| s.into_iter().collect()).collect(),
        mean_degree: k,
        rewire_prob: beta,
    })
}

/// Fraction of `node`'s neighbours currently AVOIDING; 0 for an isolated node.
pub fn avoiding_fraction(graph: &SocialGraph, node: usize, modes: &[Mode]) -> f64 {
    let nbrs = graph.neighbors(node);
    if nbrs.is_empty() {
        return 0.0;
    }
    let avoiding = nbrs.iter().filter(|&&j| modes[j] == Mode::Avoiding).count();
    avoiding as f64 / nbrs.len() as f64
}
