//! Node centralities on the combined attack/defence digraph.
//!
//! All three measures run on [`ArgGraph::combined_edges`]: unit weights,
//! edges pointing from attacker or defender to target.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::argraph::ArgGraph;

pub const DAMPING: f64 = 0.85;
pub const TOLERANCE: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    /// The power iteration hit the cap; `last` holds the final iterate.
    #[error("power iteration did not converge in {iterations} iterations")]
    NonConvergence { iterations: usize, last: Vec<f64> },
}

/// Per-node centralities, indexed like [`ArgGraph::nodes`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityScores {
    pub betweenness: Vec<f64>,
    pub eigenvector: Vec<f64>,
    pub closeness: Vec<f64>,
    /// False when the eigenvector iteration stopped at the cap.
    pub converged: bool,
}

fn adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); n];
    for &(a, b) in edges {
        out[a].push(b);
    }
    out
}

/// Brandes accumulation over an unweighted digraph. Unnormalized: a node's
/// score is the sum over ordered pairs `(s, t)` of the fraction of shortest
/// `s -> t` paths running through it.
pub fn betweenness_of(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let out = adjacency(n, edges);
    let mut centrality = vec![0.0; n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0f64; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut stack = Vec::with_capacity(n);
    let mut queue = VecDeque::with_capacity(n);
    for s in 0..n {
        sigma.fill(0.0);
        dist.fill(usize::MAX);
        delta.fill(0.0);
        preds.iter_mut().for_each(Vec::clear);
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &out[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                centrality[w] += delta[w];
            }
        }
    }
    centrality
}

/// Damped in-link power iteration: uniform teleport, dangling mass spread
/// uniformly, L1-normalized.
pub fn eigenvector_of(n: usize, edges: &[(usize, usize)]) -> Result<Vec<f64>, MetricsError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let out = adjacency(n, edges);
    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    for _ in 0..MAX_ITERATIONS {
        let dangling: f64 = (0..n).filter(|&v| out[v].is_empty()).map(|v| rank[v]).sum();
        next.fill((1.0 - DAMPING) / nf + DAMPING * dangling / nf);
        for (v, targets) in out.iter().enumerate() {
            if targets.is_empty() {
                continue;
            }
            let share = DAMPING * rank[v] / targets.len() as f64;
            for &w in targets {
                next[w] += share;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let change: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if change < TOLERANCE {
            return Ok(rank);
        }
    }
    Err(MetricsError::NonConvergence {
        iterations: MAX_ITERATIONS,
        last: rank,
    })
}

/// Harmonic closeness: sum of `1 / d(v, u)` over nodes reachable from `v`.
pub fn closeness_of(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let out = adjacency(n, edges);
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    (0..n)
        .map(|s| {
            dist.fill(usize::MAX);
            dist[s] = 0;
            queue.push_back(s);
            let mut sum = 0.0;
            while let Some(v) = queue.pop_front() {
                for &w in &out[v] {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        sum += 1.0 / dist[w] as f64;
                        queue.push_back(w);
                    }
                }
            }
            sum
        })
        .collect()
}

pub fn betweenness(g: &ArgGraph) -> Vec<f64> {
    betweenness_of(g.node_count(), &g.combined_edges())
}

pub fn eigenvector_centrality(g: &ArgGraph) -> Result<Vec<f64>, MetricsError> {
    eigenvector_of(g.node_count(), &g.combined_edges())
}

pub fn closeness(g: &ArgGraph) -> Vec<f64> {
    closeness_of(g.node_count(), &g.combined_edges())
}

/// All three measures. A capped eigenvector iteration keeps its last iterate
/// and clears `converged`.
pub fn centralities(g: &ArgGraph) -> CentralityScores {
    let edges = g.combined_edges();
    let n = g.node_count();
    let (eigenvector, converged) = match eigenvector_of(n, &edges) {
        Ok(v) => (v, true),
        Err(MetricsError::NonConvergence { last, .. }) => {
            log::warn!("eigenvector centrality capped for {}", g.conversation_id);
            (last, false)
        }
    };
    CentralityScores {
        betweenness: betweenness_of(n, &edges),
        eigenvector,
        closeness: closeness_of(n, &edges),
        converged,
    }
}
