//! MAP estimation of a G-component PL mixture by EM.
//!
//! The latent exponential times and component labels make the complete-data
//! posterior conjugate. The E-step needs only the posterior memberships
//! `z_hat[s][g]` and the stage normalizers `D[g][s][t] = sum of p*_g over
//! items available at stage t`, because `E[y_st] = 1 / D[g][s][t]`. The
//! M-step is then closed form:
//!
//! ```text
//! p_gi    = (c_gi - 1 + sum_s z_hat_sg u_si) / (d_g + sum_s z_hat_sg sum_t delta_sti / D_gst)
//! omega_g = (alpha_g - 1 + sum_s z_hat_sg) / (sum alpha - G + N)
//! ```
//!
//! With `c = 1, d = 0, alpha = 1` the iteration is the maximum likelihood
//! EM for PL mixtures. The supports are kept on their internal scale during
//! the iterations since the updates are not scale-free when `d > 0`.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{PartialOrdering, RankingDataset};
use crate::math::{log_sum_exp, normalize_log_weights};
use crate::model::{component_log_joint, mixture_log_lik, stage_normalizers, PLMixtureParams};
use crate::prior::PriorHyper;
use crate::rng::stream;
use crate::{Error, Result};

/// Supports whose update has a zero numerator are raised to this fraction
/// of their component total.
pub const SUPPORT_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Relative change of the log posterior below which a run stops.
    pub tol: f64,
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-8,
            n_starts: 10,
            seed: 0,
        }
    }
}

/// Distinct orderings of a dataset with their multiplicities. EM only needs
/// the likelihood per distinct ordering, which shrinks the work considerably
/// when K is small.
#[derive(Clone, Debug)]
pub struct Patterns {
    k: usize,
    n_units: usize,
    orderings: Vec<PartialOrdering>,
    counts: Vec<f64>,
    unit_pattern: Vec<usize>,
    stage_offsets: Vec<usize>,
    /// Per pattern and item: stages in which the item is available.
    exposure: Vec<usize>,
}

impl Patterns {
    pub fn new(ds: &RankingDataset) -> Self {
        let k = ds.n_items();
        let mut index: HashMap<&PartialOrdering, usize> = HashMap::new();
        let mut orderings = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        let mut unit_pattern = Vec::with_capacity(ds.n_units());
        for o in ds.orderings() {
            let j = *index.entry(o).or_insert_with(|| {
                orderings.push(o.clone());
                counts.push(0.0);
                orderings.len() - 1
            });
            counts[j] += 1.0;
            unit_pattern.push(j);
        }
        let mut stage_offsets = vec![0];
        let mut exposure = Vec::with_capacity(orderings.len() * k);
        for o in &orderings {
            stage_offsets.push(stage_offsets.last().unwrap() + o.len());
            exposure.extend((0..k).map(|i| o.exposure(i)));
        }
        Self {
            k,
            n_units: ds.n_units(),
            orderings,
            counts,
            unit_pattern,
            stage_offsets,
            exposure,
        }
    }

    pub fn n_patterns(&self) -> usize {
        self.orderings.len()
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    fn total_stages(&self) -> usize {
        *self.stage_offsets.last().unwrap()
    }

    /// Observed-data mixture log-likelihood. `theta` must have this K.
    pub(crate) fn log_lik(&self, theta: &PLMixtureParams, scratch: &mut Vec<f64>) -> f64 {
        scratch.resize(theta.n_components(), 0.0);
        self.orderings
            .iter()
            .zip(&self.counts)
            .map(|(o, &c)| {
                component_log_joint(o, theta, scratch);
                c * log_sum_exp(scratch)
            })
            .sum()
    }
}

/// Result of an E-step at parameters `theta*`.
#[derive(Clone, Debug)]
pub struct EStep {
    theta: PLMixtureParams,
    /// Per pattern, G memberships.
    membership: Vec<f64>,
    /// G x (pattern stages) stage normalizers of `theta*`.
    normalizers: Vec<f64>,
    log_lik: f64,
}

impl EStep {
    /// Observed-data log-likelihood at `theta*`.
    pub fn log_lik(&self) -> f64 {
        self.log_lik
    }

    pub fn theta(&self) -> &PLMixtureParams {
        &self.theta
    }

    /// Membership of unit `s`.
    pub fn unit_membership<'a>(&'a self, patterns: &Patterns, s: usize) -> &'a [f64] {
        let g = self.theta.n_components();
        let j = patterns.unit_pattern[s];
        &self.membership[j * g..(j + 1) * g]
    }

    /// N x G membership matrix.
    pub fn membership_matrix(&self, patterns: &Patterns) -> Vec<Vec<f64>> {
        (0..patterns.n_units)
            .map(|s| self.unit_membership(patterns, s).to_vec())
            .collect()
    }

    /// Stage-`t` normalizer of component `g` for unit `s`.
    pub fn stage_normalizer(&self, patterns: &Patterns, g: usize, s: usize, t: usize) -> f64 {
        let j = patterns.unit_pattern[s];
        self.normalizers[g * patterns.total_stages() + patterns.stage_offsets[j] + t]
    }
}

fn check_inputs(patterns: &Patterns, theta: &PLMixtureParams) -> Result<()> {
    if patterns.k != theta.n_items() {
        return Err(Error::ShapeMismatch(format!(
            "dataset has K = {} but parameters have K = {}",
            patterns.k,
            theta.n_items()
        )));
    }
    Ok(())
}

pub fn e_step(patterns: &Patterns, theta: &PLMixtureParams) -> Result<EStep> {
    check_inputs(patterns, theta)?;
    let g_count = theta.n_components();
    let total = patterns.total_stages();
    let mut membership = vec![0.0; patterns.n_patterns() * g_count];
    let mut normalizers = vec![0.0; g_count * total];
    let mut log_lik = 0.0;
    for (j, o) in patterns.orderings.iter().enumerate() {
        let row = &mut membership[j * g_count..(j + 1) * g_count];
        component_log_joint(o, theta, row);
        log_lik += patterns.counts[j] * log_sum_exp(row);
        normalize_log_weights(row);
        let off = patterns.stage_offsets[j];
        for g in 0..g_count {
            let start = g * total + off;
            stage_normalizers(o, theta.support(g), &mut normalizers[start..start + o.len()]);
        }
    }
    Ok(EStep {
        theta: theta.clone(),
        membership,
        normalizers,
        log_lik,
    })
}

/// Parameters produced by an M-step, with the (g, i) cells that hit the floor.
#[derive(Clone, Debug)]
pub struct MStep {
    pub params: PLMixtureParams,
    pub floored: Vec<(usize, usize)>,
}

pub fn m_step(patterns: &Patterns, estep: &EStep, prior: &PriorHyper) -> Result<MStep> {
    let theta = &estep.theta;
    let (g_count, k) = (theta.n_components(), theta.n_items());
    prior.check_shape(g_count, k)?;
    let total = patterns.total_stages();

    let mut gamma = vec![0.0; g_count * k];
    let mut exposure_sum = vec![0.0; g_count * k];
    let mut sizes = vec![0.0; g_count];
    let mut prefix = Vec::new();
    for (j, o) in patterns.orderings.iter().enumerate() {
        let off = patterns.stage_offsets[j];
        let exposure = &patterns.exposure[j * k..(j + 1) * k];
        for g in 0..g_count {
            let z = patterns.counts[j] * estep.membership[j * g_count + g];
            if z == 0.0 {
                continue;
            }
            sizes[g] += z;
            prefix.clear();
            let mut acc = 0.0;
            for &d in &estep.normalizers[g * total + off..g * total + off + o.len()] {
                acc += 1.0 / d;
                prefix.push(acc);
            }
            for &item in o.items() {
                gamma[g * k + item] += z;
            }
            for (i, &e) in exposure.iter().enumerate() {
                exposure_sum[g * k + i] += z * prefix[e - 1];
            }
        }
    }

    let mut support = Vec::with_capacity(g_count * k);
    let mut floored = Vec::new();
    for g in 0..g_count {
        let d = prior.rate(g);
        let mut row: Vec<f64> = (0..k)
            .map(|i| (prior.shape(g, i) - 1.0 + gamma[g * k + i]) / (d + exposure_sum[g * k + i]))
            .collect();
        if sizes[g] == 0.0 || row.iter().any(|x| !x.is_finite()) {
            // component received no mass: nothing to update from
            row = theta.support(g).to_vec();
        }
        let row_total: f64 = row.iter().sum();
        let floor = SUPPORT_FLOOR * row_total;
        for (i, x) in row.iter_mut().enumerate() {
            if *x < floor {
                *x = floor;
                floored.push((g, i));
            }
        }
        support.extend(row);
    }

    let alpha_total: f64 = prior.concentrations().iter().sum();
    let denom = alpha_total - g_count as f64 + patterns.n_units as f64;
    if denom <= 0.0 {
        return Err(Error::InvalidPrior("weight update denominator is not positive".into()));
    }
    let weights: Vec<f64> = (0..g_count)
        .map(|g| (prior.concentration(g) - 1.0 + sizes[g]) / denom)
        .collect();
    if weights.iter().any(|&w| w < 0.0) {
        return Err(Error::InvalidPrior(
            "negative weight from the M-step; use alpha >= 1".into(),
        ));
    }
    Ok(MStep {
        params: PLMixtureParams::from_flat(k, support, weights)?,
        floored,
    })
}

/// Unaugmented log posterior `log L(theta) + log f0(theta)` up to a constant.
pub fn log_posterior(ds: &RankingDataset, theta: &PLMixtureParams, prior: &PriorHyper) -> Result<f64> {
    Ok(mixture_log_lik(ds, theta)? + prior.log_density(theta)?)
}

#[derive(Clone, Debug)]
pub struct MapResult {
    /// Estimate on the internal scale.
    pub params: PLMixtureParams,
    /// N x G posterior membership probabilities at the estimate.
    pub membership: Vec<Vec<f64>>,
    /// Log posterior at every iterate, starting from the initial value.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    /// Support cells floored in the final M-step.
    pub floored: Vec<(usize, usize)>,
    /// Index of the winning random start.
    pub start: usize,
}

impl MapResult {
    pub fn canonical(&self) -> PLMixtureParams {
        self.params.canonical()
    }

    pub fn log_posterior(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }

    /// `-2 log L` at the estimate.
    pub fn deviance(&self) -> f64 {
        -2.0 * self.log_likelihood
    }

    /// Per-unit argmax membership, ties to the lower component.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.membership
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |best, (g, &z)| if z > best.1 { (g, z) } else { best },
                    )
                    .0
            })
            .collect()
    }

    pub fn report(&self) -> MapReport {
        let g = self.params.n_components();
        let mut expected_sizes = vec![0.0; g];
        for row in &self.membership {
            for (e, z) in expected_sizes.iter_mut().zip(row) {
                *e += z;
            }
        }
        let mut hard_counts = vec![0; g];
        for l in self.hard_labels() {
            hard_counts[l] += 1;
        }
        MapReport {
            params: self.canonical(),
            internal_support: self.params.support_rows(),
            log_posterior: self.log_posterior(),
            log_likelihood: self.log_likelihood,
            deviance: self.deviance(),
            iterations: self.iterations,
            converged: self.converged,
            start: self.start,
            floored: self.floored.iter().map(|&(g, i)| (g + 1, i + 1)).collect(),
            expected_sizes,
            hard_counts,
            trace: self.trace.clone(),
        }
    }
}

/// Serializable view of a [`MapResult`]: canonical estimate, trace and a
/// membership summary. Cell indices in `floored` are 1-based.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapReport {
    #[serde(flatten)]
    pub params: PLMixtureParams,
    pub internal_support: Vec<Vec<f64>>,
    pub log_posterior: f64,
    pub log_likelihood: f64,
    pub deviance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub start: usize,
    pub floored: Vec<(usize, usize)>,
    pub expected_sizes: Vec<f64>,
    pub hard_counts: Vec<usize>,
    pub trace: Vec<f64>,
}

/// Run EM from a given starting point.
pub fn run_em(patterns: &Patterns, init: &PLMixtureParams, prior: &PriorHyper, config: &EmConfig) -> Result<MapResult> {
    prior.check_shape(init.n_components(), init.n_items())?;
    prior.check_map_compatible()?;
    let mut theta = init.clone();
    let mut trace = Vec::new();
    let mut floored = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let es = e_step(patterns, &theta)?;
        let lp = es.log_lik + prior.log_density(&theta)?;
        if !lp.is_finite() {
            return Err(Error::Numerical(format!("log posterior became {lp}")));
        }
        if let Some(&prev) = trace.last() {
            let change = (lp - prev) / if prev == 0.0 { 1.0 } else { f64::abs(prev) };
            converged = change.abs() < config.tol;
        }
        trace.push(lp);
        if converged || iterations >= config.max_iter {
            return Ok(MapResult {
                membership: es.membership_matrix(patterns),
                params: theta,
                trace,
                iterations,
                converged,
                log_likelihood: es.log_lik,
                floored,
                start: 0,
            });
        }
        let ms = m_step(patterns, &es, prior)?;
        theta = ms.params;
        floored = ms.floored;
        iterations += 1;
    }
}

/// Random starting point: supports drawn from the Gamma prior (Uniform(0.1, 1)
/// when the prior rate is zero) and rescaled to sum to one per component;
/// uniform weights.
pub fn random_start<R: Rng + ?Sized>(prior: &PriorHyper, rng: &mut R) -> Result<PLMixtureParams> {
    let (g_count, k) = (prior.n_components(), prior.n_items());
    let mut support = Vec::with_capacity(g_count * k);
    for g in 0..g_count {
        let d = prior.rate(g);
        let mut row = Vec::with_capacity(k);
        for i in 0..k {
            let x = if d > 0.0 {
                let gamma = Gamma::new(prior.shape(g, i), 1.0 / d).map_err(|e| Error::InvalidPrior(e.to_string()))?;
                gamma.sample(rng)
            } else {
                rng.random_range(0.1..1.0)
            };
            row.push(x.max(f64::MIN_POSITIVE));
        }
        let total: f64 = row.iter().sum();
        support.extend(row.into_iter().map(|x| (x / total).max(f64::MIN_POSITIVE)));
    }
    PLMixtureParams::from_flat(k, support, vec![1.0 / g_count as f64; g_count])
}

/// Best of `config.n_starts` EM runs from random starts, by final log
/// posterior. Starts run in parallel on independent streams.
pub fn fit_map(ds: &RankingDataset, g: usize, prior: &PriorHyper, config: &EmConfig) -> Result<MapResult> {
    if g == 0 {
        return Err(Error::InvalidConfig("number of components must be at least 1".into()));
    }
    if config.n_starts == 0 {
        return Err(Error::InvalidConfig("n_starts must be at least 1".into()));
    }
    prior.check_shape(g, ds.n_items())?;
    prior.check_map_compatible()?;
    let patterns = Patterns::new(ds);
    let runs: Vec<Result<MapResult>> = (0..config.n_starts)
        .into_par_iter()
        .map(|start| {
            let mut rng = stream(config.seed, &[start as u64]);
            let init = random_start(prior, &mut rng)?;
            let mut fit = run_em(&patterns, &init, prior, config)?;
            fit.start = start;
            Ok(fit)
        })
        .collect();
    let mut best: Option<MapResult> = None;
    let mut last_err = None;
    for run in runs {
        match run {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.log_posterior() > b.log_posterior()) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one start ran"))
}

/// EM from a supplied starting point, e.g. to refine one fit under another prior.
pub fn fit_map_from(
    ds: &RankingDataset,
    init: &PLMixtureParams,
    prior: &PriorHyper,
    config: &EmConfig,
) -> Result<MapResult> {
    run_em(&Patterns::new(ds), init, prior, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{posterior_membership, sample_mixture_dataset, Lengths};
    use crate::rng::seeded;

    fn toy(seed: u64, n: usize, g: usize, k: usize) -> RankingDataset {
        let mut rng = seeded(seed);
        let rows: Vec<Vec<f64>> = (0..g)
            .map(|_| (0..k).map(|_| rng.random_range(0.05..1.0)).collect())
            .collect();
        let theta = PLMixtureParams::new(rows, vec![1.0 / g as f64; g]).unwrap();
        let lengths: Vec<usize> = (0..n).map(|_| rng.random_range(1..k)).collect();
        sample_mixture_dataset(&theta, n, Lengths::PerUnit(&lengths), &mut rng)
            .unwrap()
            .0
    }

    #[test]
    fn patterns_compress_duplicates() {
        let ds = RankingDataset::parse("1,2\n1,2\n3\n1,2\n", Some(3)).unwrap();
        let p = Patterns::new(&ds);
        assert_eq!(p.n_patterns(), 2);
        assert_eq!(p.counts, vec![3.0, 1.0]);
        assert_eq!(p.unit_pattern, vec![0, 0, 1, 0]);
    }

    #[test]
    fn e_step_identical_components_uniform() {
        let ds = toy(1, 30, 1, 4);
        let theta = PLMixtureParams::new(vec![vec![0.1, 0.2, 0.3, 0.4]; 3], vec![0.2, 0.3, 0.5]).unwrap();
        let same = PLMixtureParams::new(vec![vec![0.1, 0.2, 0.3, 0.4]; 3], vec![1.0 / 3.0; 3]).unwrap();
        let p = Patterns::new(&ds);
        let es = e_step(&p, &same).unwrap();
        for row in es.membership_matrix(&p) {
            for z in row {
                assert!((z - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        // the likelihood does not depend on the weights here
        let es2 = e_step(&p, &theta).unwrap();
        assert!((es.log_lik() - es2.log_lik()).abs() < 1e-9);
        assert!((es.log_lik() - mixture_log_lik(&ds, &same).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn e_step_single_component_normalizers() {
        let ds = RankingDataset::parse("1,2\n3\n", Some(3)).unwrap();
        let theta = PLMixtureParams::single(vec![0.5, 0.3, 0.2]).unwrap();
        let p = Patterns::new(&ds);
        let es = e_step(&p, &theta).unwrap();
        assert_eq!(es.membership_matrix(&p), vec![vec![1.0], vec![1.0]]);
        assert!((es.stage_normalizer(&p, 0, 0, 0) - 1.0).abs() < 1e-15);
        assert!((es.stage_normalizer(&p, 0, 0, 1) - 0.5).abs() < 1e-15);
        assert!((es.stage_normalizer(&p, 0, 1, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn e_step_matches_posterior_membership() {
        let ds = RankingDataset::parse("1,2\n", Some(3)).unwrap();
        let theta = PLMixtureParams::new(vec![vec![0.5, 0.3, 0.2], vec![1.0 / 3.0; 3]], vec![0.5, 0.5]).unwrap();
        let p = Patterns::new(&ds);
        let es = e_step(&p, &theta).unwrap();
        let direct = posterior_membership(ds.ordering(0), &theta);
        assert_eq!(es.unit_membership(&p, 0), direct.as_slice());
        assert!((direct[0] - 0.3 / (0.3 + 1.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn flat_weight_update_is_column_mean() {
        let ds = toy(2, 100, 2, 4);
        let p = Patterns::new(&ds);
        let theta =
            PLMixtureParams::new(vec![vec![0.1, 0.2, 0.3, 0.4], vec![0.4, 0.3, 0.2, 0.1]], vec![0.3, 0.7]).unwrap();
        let es = e_step(&p, &theta).unwrap();
        let ms = m_step(&p, &es, &PriorHyper::flat(2, 4).unwrap()).unwrap();
        let z = es.membership_matrix(&p);
        for g in 0..2 {
            let mean = z.iter().map(|r| r[g]).sum::<f64>() / 100.0;
            assert!((ms.params.weights()[g] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_formula_arithmetic() {
        // 30 units certainly in component 1, 70 in component 2
        let mut text = String::new();
        for _ in 0..30 {
            text.push_str("1,2,3\n");
        }
        for _ in 0..70 {
            text.push_str("4,3,2\n");
        }
        let ds = RankingDataset::parse(&text, Some(4)).unwrap();
        let theta = PLMixtureParams::new(
            vec![vec![1e6, 1e3, 1.0, 1e-3], vec![1e-3, 1.0, 1e3, 1e6]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let p = Patterns::new(&ds);
        let es = e_step(&p, &theta).unwrap();
        let ms = m_step(&p, &es, &PriorHyper::flat(2, 4).unwrap()).unwrap();
        assert!((ms.params.weights()[0] - 0.3).abs() < 1e-12);
        assert!((ms.params.weights()[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn unranked_item_is_floored_and_reported() {
        let ds = RankingDataset::parse("1\n2\n1\n", Some(3)).unwrap();
        let fit = fit_map(&ds, 1, &PriorHyper::flat(1, 3).unwrap(), &EmConfig::default()).unwrap();
        assert!(fit.floored.contains(&(0, 2)));
        let c = fit.canonical();
        assert!(c.support(0)[2] < 1e-11);
        assert!((c.support(0)[0] - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn trace_is_monotone() {
        for seed in 0..10 {
            let ds = toy(seed, 80, 2, 5);
            for prior in [PriorHyper::default_for(3, 5).unwrap(), PriorHyper::flat(3, 5).unwrap()] {
                let cfg = EmConfig {
                    n_starts: 2,
                    seed,
                    ..EmConfig::default()
                };
                let fit = fit_map(&ds, 3, &prior, &cfg).unwrap();
                for w in fit.trace.windows(2) {
                    assert!(w[1] >= w[0] - 1e-9, "trace decreased: {} -> {}", w[0], w[1]);
                }
            }
        }
    }

    #[test]
    fn fixed_point_at_convergence() {
        let ds = toy(3, 200, 2, 4);
        let prior = PriorHyper::default_for(2, 4).unwrap();
        let cfg = EmConfig {
            tol: 1e-15,
            max_iter: 20_000,
            n_starts: 3,
            seed: 3,
        };
        let fit = fit_map(&ds, 2, &prior, &cfg).unwrap();
        let p = Patterns::new(&ds);
        let again = m_step(&p, &e_step(&p, &fit.params).unwrap(), &prior).unwrap().params;
        let a = fit.canonical();
        let b = again.canonical();
        for (x, y) in a.support_flat().iter().zip(b.support_flat()) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
        for (x, y) in a.weights().iter().zip(b.weights()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn log_posterior_flat_equals_log_lik() {
        let ds = toy(4, 40, 1, 4);
        let theta = PLMixtureParams::single(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let flat = log_posterior(&ds, &theta, &PriorHyper::flat(1, 4).unwrap()).unwrap();
        assert_eq!(flat, mixture_log_lik(&ds, &theta).unwrap());
        let d = log_posterior(&ds, &theta, &PriorHyper::default_for(1, 4).unwrap()).unwrap();
        assert!((flat - d - 0.001).abs() < 1e-12);
    }

    #[test]
    fn permutation_equivariance() {
        let ds = toy(5, 120, 3, 5);
        let prior = PriorHyper::default_for(3, 5).unwrap();
        let mut rng = seeded(11);
        let init = random_start(&prior, &mut rng).unwrap();
        let cfg = EmConfig::default();
        let a = fit_map_from(&ds, &init, &prior, &cfg).unwrap();
        let perm = [2, 0, 1];
        let b = fit_map_from(&ds, &init.permuted(&perm), &prior, &cfg).unwrap();
        let a_perm = a.params.permuted(&perm);
        for (x, y) in a_perm.support_flat().iter().zip(b.params.support_flat()) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} vs {y}");
        }
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn fit_map_errors() {
        let ds = toy(6, 10, 1, 3);
        let cfg = EmConfig::default();
        assert!(fit_map(&ds, 0, &PriorHyper::flat(1, 3).unwrap(), &cfg).is_err());
        assert!(fit_map(&ds, 2, &PriorHyper::flat(1, 3).unwrap(), &cfg).is_err());
        let bad = EmConfig { n_starts: 0, ..cfg };
        assert!(fit_map(&ds, 1, &PriorHyper::flat(1, 3).unwrap(), &bad).is_err());
    }

    #[test]
    fn recovers_single_component_supports() {
        let mut rng = seeded(12);
        let truth = [0.35, 0.25, 0.2, 0.12, 0.08];
        let theta = PLMixtureParams::single(truth.to_vec()).unwrap();
        let (ds, _) = sample_mixture_dataset(&theta, 5000, Lengths::Fixed(4), &mut rng).unwrap();
        let fit = fit_map(&ds, 1, &PriorHyper::default_for(1, 5).unwrap(), &EmConfig::default()).unwrap();
        let l1: f64 = fit
            .canonical()
            .support(0)
            .iter()
            .zip(truth)
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(l1 < 0.02, "L1 = {l1}");
    }

    #[test]
    fn report_round_trips_through_json() {
        let ds = toy(7, 50, 2, 4);
        let fit = fit_map(&ds, 2, &PriorHyper::default_for(2, 4).unwrap(), &EmConfig::default()).unwrap();
        let json = serde_json::to_string(&fit.report()).unwrap();
        let back: MapReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.params, fit.canonical());
        assert_eq!(back.hard_counts.iter().sum::<usize>(), 50);
    }
}
