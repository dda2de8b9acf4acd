//! Posterior predictive checks with chi-square discrepancies.
//!
//! Two features of the data are compared with their expectation under the
//! marginal supports `p_i = sum_g omega_g p_gi`:
//!
//! - top-choice counts `r_i`, expected `N p_i`;
//! - paired comparisons `tau_ii'`, expected `T_ii' p_i / (p_i + p_i')` with
//!   `T_ii' = tau_ii' + tau_i'i`, summed over `i < i'`.
//!
//! The conditional variants sum the same statistics over groups of
//! orderings of equal length. The p value is the fraction of posterior draws
//! whose replicated discrepancy is at least the observed one.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{PartialOrdering, RankingDataset, SummaryStats};
use crate::gibbs::Chain;
use crate::math::sample_weighted;
use crate::model::sampling::sample_pl_unchecked;
use crate::model::PLMixtureParams;
use crate::rng::stream;
use crate::{Error, Result};

/// Cells with a smaller expected count are left out of the sums.
pub const MIN_EXPECTED: f64 = 1e-9;

/// Default cap on the number of draws used for p values.
pub const DEFAULT_MAX_REPLICATES: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Discrepancy {
    Top1,
    Pairs,
    Top1Conditional,
    PairsConditional,
}

impl Discrepancy {
    pub const ALL: [Discrepancy; 4] = [
        Discrepancy::Top1,
        Discrepancy::Pairs,
        Discrepancy::Top1Conditional,
        Discrepancy::PairsConditional,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Discrepancy::Top1 => "top1",
            Discrepancy::Pairs => "pairs",
            Discrepancy::Top1Conditional => "top1_cond",
            Discrepancy::PairsConditional => "pairs_cond",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Discrepancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A chi-square value and the number of cells skipped for a tiny expectation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyValue {
    pub value: f64,
    pub skipped: usize,
}

fn marginal(theta: &PLMixtureParams) -> Result<Vec<f64>> {
    if !theta.is_canonical() {
        return Err(Error::InvalidParams(
            "expected frequencies need canonical supports (rows summing to one)".into(),
        ));
    }
    Ok(theta.marginal_support())
}

/// `r*_i = n sum_g omega_g p_gi`.
pub fn expected_top1(theta: &PLMixtureParams, n: f64) -> Result<Vec<f64>> {
    Ok(marginal(theta)?.into_iter().map(|p| n * p).collect())
}

/// `tau*_ii' = T_ii' p_i / (p_i + p_i')`; the diagonal is zero.
pub fn expected_pairs(theta: &PLMixtureParams, totals: &[Vec<u64>]) -> Result<Vec<Vec<f64>>> {
    let p = marginal(theta)?;
    let k = p.len();
    if totals.len() != k || totals.iter().any(|row| row.len() != k) {
        return Err(Error::ShapeMismatch(format!("pair totals must be {k} x {k}")));
    }
    Ok(pairs_expectation(&p, totals))
}

fn pairs_expectation(p: &[f64], totals: &[Vec<u64>]) -> Vec<Vec<f64>> {
    let k = p.len();
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i != j {
                out[i][j] = totals[i][j] as f64 * p[i] / (p[i] + p[j]);
            }
        }
    }
    out
}

fn accumulate(value: &mut DiscrepancyValue, observed: f64, expected: f64) {
    if expected < MIN_EXPECTED {
        value.skipped += 1;
    } else {
        value.value += (observed - expected).powi(2) / expected;
    }
}

fn chi_top1(top1: &[u64], n: usize, p: &[f64], out: &mut DiscrepancyValue) {
    for (&r, &pi) in top1.iter().zip(p) {
        accumulate(out, r as f64, n as f64 * pi);
    }
}

fn chi_pairs(pairs: &[Vec<u64>], totals: &[Vec<u64>], p: &[f64], out: &mut DiscrepancyValue) {
    let k = p.len();
    for i in 0..k {
        for j in i + 1..k {
            let expected = totals[i][j] as f64 * p[i] / (p[i] + p[j]);
            accumulate(out, pairs[i][j] as f64, expected);
        }
    }
}

fn discrepancy_marginal(stats: &SummaryStats, p: &[f64], kind: Discrepancy) -> DiscrepancyValue {
    let mut out = DiscrepancyValue { value: 0.0, skipped: 0 };
    match kind {
        Discrepancy::Top1 => {
            let n = stats.top1.iter().sum::<u64>() as usize;
            chi_top1(&stats.top1, n, p, &mut out);
        }
        Discrepancy::Pairs => chi_pairs(&stats.pairs, &stats.pair_totals, p, &mut out),
        Discrepancy::Top1Conditional => {
            for stratum in stats.by_length.values() {
                chi_top1(&stratum.top1, stratum.count, p, &mut out);
            }
        }
        Discrepancy::PairsConditional => {
            for stratum in stats.by_length.values() {
                chi_pairs(&stratum.pairs, &stratum.pair_totals, p, &mut out);
            }
        }
    }
    out
}

/// Chi-square discrepancy between observed summaries and their expectation
/// under canonical `theta`.
pub fn discrepancy(stats: &SummaryStats, theta: &PLMixtureParams, kind: Discrepancy) -> Result<DiscrepancyValue> {
    let p = marginal(theta)?;
    if stats.top1.len() != p.len() {
        return Err(Error::ShapeMismatch("summaries and parameters disagree on K".into()));
    }
    Ok(discrepancy_marginal(stats, &p, kind))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GofConfig {
    /// Draws used; `None` takes `min(2000, retained draws)`.
    pub n_rep: Option<usize>,
    pub seed: u64,
}

/// Observed and replicated discrepancies at one posterior draw, in the
/// order of [`Discrepancy::ALL`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawDiscrepancies {
    pub draw: usize,
    pub observed: [f64; 4],
    pub replicated: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub n_rep: usize,
    pub p_b1: f64,
    pub p_b2: f64,
    /// Length-stratified p values, reported when at least two ordering
    /// lengths occur in the data.
    pub p_b1_cond: Option<f64>,
    pub p_b2_cond: Option<f64>,
    pub n_strata: usize,
    /// Cells skipped for tiny expectations, summed over draws, per measure.
    pub skipped: [usize; 4],
    pub draws: Vec<DrawDiscrepancies>,
}

impl GofReport {
    pub fn p_value(&self, kind: Discrepancy) -> Option<f64> {
        match kind {
            Discrepancy::Top1 => Some(self.p_b1),
            Discrepancy::Pairs => Some(self.p_b2),
            Discrepancy::Top1Conditional => self.p_b1_cond,
            Discrepancy::PairsConditional => self.p_b2_cond,
        }
    }

    /// `draw,obs_top1,rep_top1,...` rows, full precision.
    pub fn draws_csv(&self) -> String {
        let mut out = String::from("draw");
        for d in Discrepancy::ALL {
            out.push_str(&format!(",obs_{d},rep_{d}"));
        }
        out.push('\n');
        for row in &self.draws {
            out.push_str(&(row.draw + 1).to_string());
            for j in 0..4 {
                out.push_str(&format!(",{},{}", row.observed[j], row.replicated[j]));
            }
            out.push('\n');
        }
        out
    }
}

/// Indices of `n` evenly spaced draws out of `len`.
pub fn evenly_spaced(len: usize, n: usize) -> Vec<usize> {
    (0..n).map(|j| j * len / n).collect()
}

/// Simulate a dataset from `theta` (canonical) with the given per-unit lengths.
pub fn replicate_dataset<R: rand::Rng + ?Sized>(
    theta: &PLMixtureParams,
    lengths: &[usize],
    rng: &mut R,
) -> Result<RankingDataset> {
    let k = theta.n_items();
    let mut scratch = vec![0.0; k];
    let orderings: Vec<PartialOrdering> = lengths
        .iter()
        .map(|&m| {
            let g = sample_weighted(theta.weights(), rng);
            sample_pl_unchecked(theta.support(g), m, &mut scratch, rng)
        })
        .collect();
    RankingDataset::new(k, orderings)
}

/// Posterior predictive p values for all four discrepancies. Each used draw
/// gets one replicate with the observed per-unit lengths, generated on its
/// own random stream.
pub fn posterior_predictive(chain: &Chain, ds: &RankingDataset, config: &GofConfig) -> Result<GofReport> {
    if chain.n_items() != ds.n_items() || chain.n_units() != ds.n_units() {
        return Err(Error::ShapeMismatch("chain was fitted on another dataset".into()));
    }
    let n_rep = config.n_rep.unwrap_or(DEFAULT_MAX_REPLICATES.min(chain.len()));
    if n_rep == 0 {
        return Err(Error::InvalidConfig("need at least one replicate".into()));
    }
    if n_rep > chain.len() {
        return Err(Error::InvalidConfig(format!(
            "{n_rep} replicates requested but the chain has {} draws",
            chain.len()
        )));
    }
    let observed = ds.summary();
    let lengths = ds.lengths();
    let results: Vec<Result<(DrawDiscrepancies, [usize; 4])>> = evenly_spaced(chain.len(), n_rep)
        .into_par_iter()
        .map(|idx| {
            let theta = chain.draws()[idx].canonical();
            let p = theta.marginal_support();
            let mut rng = stream(config.seed, &[idx as u64]);
            let rep = replicate_dataset(&theta, &lengths, &mut rng)?.summary();
            let mut row = DrawDiscrepancies {
                draw: idx,
                observed: [0.0; 4],
                replicated: [0.0; 4],
            };
            let mut skipped = [0; 4];
            for kind in Discrepancy::ALL {
                let j = kind.index();
                let obs = discrepancy_marginal(&observed, &p, kind);
                let repl = discrepancy_marginal(&rep, &p, kind);
                row.observed[j] = obs.value;
                row.replicated[j] = repl.value;
                skipped[j] = obs.skipped + repl.skipped;
            }
            Ok((row, skipped))
        })
        .collect();

    let mut draws = Vec::with_capacity(n_rep);
    let mut skipped = [0; 4];
    let mut exceed = [0usize; 4];
    for r in results {
        let (row, s) = r?;
        for j in 0..4 {
            skipped[j] += s[j];
            if row.replicated[j] >= row.observed[j] {
                exceed[j] += 1;
            }
        }
        draws.push(row);
    }
    let p = |j: usize| exceed[j] as f64 / n_rep as f64;
    let n_strata = observed.by_length.len();
    let stratified = n_strata >= 2;
    Ok(GofReport {
        n_rep,
        p_b1: p(0),
        p_b2: p(1),
        p_b1_cond: stratified.then(|| p(2)),
        p_b2_cond: stratified.then(|| p(3)),
        n_strata,
        skipped,
        draws,
    })
}

/// p value of a single discrepancy; `None` for a conditional measure on
/// data with a single ordering length.
pub fn posterior_predictive_p(
    chain: &Chain,
    ds: &RankingDataset,
    kind: Discrepancy,
    config: &GofConfig,
) -> Result<Option<f64>> {
    Ok(posterior_predictive(chain, ds, config)?.p_value(kind))
}
