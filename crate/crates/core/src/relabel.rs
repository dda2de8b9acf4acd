//! Pivotal reordering against label switching.
//!
//! Each draw is permuted to the component order closest to a pivot (by
//! default the MAP estimate) under the loss
//! `sum_g ||p_sigma(g) - p_g^pivot||^2 + (omega_sigma(g) - omega_g^pivot)^2`
//! on canonical supports. Small G is searched exhaustively; larger G uses
//! the Hungarian algorithm.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gibbs::Chain;
use crate::math::{mean, variance};
use crate::model::{modal_ordering, PLMixtureParams};
use crate::{Error, Result};

/// Largest G searched by enumerating all permutations.
pub const EXHAUSTIVE_MAX_G: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct RelabeledChain {
    chain: Chain,
    /// Per draw, `perm[g]` is the raw component placed at position `g`.
    permutations: Vec<Vec<usize>>,
}

impl RelabeledChain {
    pub fn new(chain: Chain, permutations: Vec<Vec<usize>>) -> Result<Self> {
        let g = chain.n_components();
        if permutations.len() != chain.len() || permutations.iter().any(|p| !is_permutation(p, g)) {
            return Err(Error::Trace("need one permutation of 1..G per draw".into()));
        }
        Ok(Self { chain, permutations })
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn permutations(&self) -> &[Vec<usize>] {
        &self.permutations
    }

    pub fn into_chain(self) -> Chain {
        self.chain
    }
}

fn is_permutation(p: &[usize], g: usize) -> bool {
    let mut seen = vec![false; g];
    p.len() == g && p.iter().all(|&i| i < g && !std::mem::replace(&mut seen[i], true))
}

/// `cost[old * G + target]`: loss of putting raw component `old` at pivot
/// position `target`.
fn cost_matrix(draw: &PLMixtureParams, pivot: &PLMixtureParams) -> Vec<f64> {
    let g = draw.n_components();
    let mut cost = vec![0.0; g * g];
    for old in 0..g {
        let row = draw.support(old);
        let total: f64 = row.iter().sum();
        for target in 0..g {
            let dp: f64 = row
                .iter()
                .zip(pivot.support(target))
                .map(|(&a, &b)| (a / total - b).powi(2))
                .sum();
            let dw = draw.weights()[old] - pivot.weights()[target];
            cost[old * g + target] = dp + dw * dw;
        }
    }
    cost
}

fn perm_cost(cost: &[f64], perm: &[usize]) -> f64 {
    let g = perm.len();
    perm.iter()
        .enumerate()
        .map(|(target, &old)| cost[old * g + target])
        .sum()
}

/// Best permutation by enumeration in lexicographic order; the identity
/// comes first and only strictly better candidates replace it.
fn exhaustive(cost: &[f64], g: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..g).collect();
    let mut best = perm.clone();
    let mut best_cost = perm_cost(cost, &perm);
    while next_permutation(&mut perm) {
        let c = perm_cost(cost, &perm);
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&perm);
        }
    }
    best
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Minimum-cost assignment of pivot positions to raw components
/// (O(G^3) shortest augmenting paths with potentials).
fn hungarian(cost: &[f64], g: usize) -> Vec<usize> {
    // rows = pivot positions, columns = raw components, 1-based with a dummy 0
    let at = |row: usize, col: usize| cost[(col - 1) * g + (row - 1)];
    let mut u = vec![0.0; g + 1];
    let mut v = vec![0.0; g + 1];
    let mut owner = vec![0usize; g + 1];
    let mut way = vec![0usize; g + 1];
    for row in 1..=g {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; g + 1];
        let mut used = vec![false; g + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=g {
                if !used[col] {
                    let cur = at(r, col) - u[r] - v[col];
                    if cur < minv[col] {
                        minv[col] = cur;
                        way[col] = col0;
                    }
                    if minv[col] < delta {
                        delta = minv[col];
                        col1 = col;
                    }
                }
            }
            for col in 0..=g {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; g];
    for col in 1..=g {
        perm[owner[col] - 1] = col - 1;
    }
    let identity: Vec<usize> = (0..g).collect();
    if perm_cost(cost, &identity) <= perm_cost(cost, &perm) {
        identity
    } else {
        perm
    }
}

/// Loss-minimizing permutation of `draw` towards `pivot` (canonical supports).
pub fn best_permutation(draw: &PLMixtureParams, pivot: &PLMixtureParams) -> Vec<usize> {
    let g = draw.n_components();
    let cost = cost_matrix(draw, pivot);
    if g <= EXHAUSTIVE_MAX_G {
        exhaustive(&cost, g)
    } else {
        hungarian(&cost, g)
    }
}

/// Relabel every draw towards `pivot`. The pivot is canonicalized first.
pub fn pivotal_relabel(chain: &Chain, pivot: &PLMixtureParams) -> Result<RelabeledChain> {
    if pivot.n_components() != chain.n_components() || pivot.n_items() != chain.n_items() {
        return Err(Error::ShapeMismatch(format!(
            "pivot has (G, K) = ({}, {}) but chain has ({}, {})",
            pivot.n_components(),
            pivot.n_items(),
            chain.n_components(),
            chain.n_items()
        )));
    }
    let pivot = pivot.canonical();
    let permutations: Vec<Vec<usize>> = chain.draws().par_iter().map(|d| best_permutation(d, &pivot)).collect();
    Ok(RelabeledChain {
        chain: chain.permuted(&permutations),
        permutations,
    })
}

/// Posterior means and standard deviations of canonical parameters.
/// Orderings are 0-based item indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_draws: usize,
    pub p_mean: Vec<Vec<f64>>,
    pub p_sd: Vec<Vec<f64>>,
    pub omega_mean: Vec<f64>,
    pub omega_sd: Vec<f64>,
    /// Modal ordering of each posterior mean support vector.
    pub modal_orderings: Vec<Vec<usize>>,
    pub deviance_mean: f64,
}

pub fn summarize(chain: &RelabeledChain) -> Result<PosteriorSummary> {
    let chain = chain.chain();
    if chain.is_empty() {
        return Err(Error::Trace("cannot summarize an empty chain".into()));
    }
    let (g, k) = (chain.n_components(), chain.n_items());
    let canon: Vec<PLMixtureParams> = chain.draws().iter().map(PLMixtureParams::canonical).collect();
    let mut column = Vec::with_capacity(canon.len());
    let mut stats = |f: &dyn Fn(&PLMixtureParams) -> f64| {
        column.clear();
        column.extend(canon.iter().map(f));
        (mean(&column), variance(&column).sqrt())
    };
    let mut p_mean = vec![vec![0.0; k]; g];
    let mut p_sd = vec![vec![0.0; k]; g];
    let mut omega_mean = vec![0.0; g];
    let mut omega_sd = vec![0.0; g];
    for c in 0..g {
        for i in 0..k {
            (p_mean[c][i], p_sd[c][i]) = stats(&|t| t.support(c)[i]);
        }
        (omega_mean[c], omega_sd[c]) = stats(&|t| t.weights()[c]);
    }
    Ok(PosteriorSummary {
        n_draws: chain.len(),
        modal_orderings: p_mean.iter().map(|row| modal_ordering(row)).collect(),
        p_mean,
        p_sd,
        omega_mean,
        omega_sd,
        deviance_mean: mean(chain.deviance()),
    })
}
