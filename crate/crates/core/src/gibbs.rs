//! Gibbs sampling for PL mixtures via exponential data augmentation.
//!
//! Each unit `s` carries a label `z_s` and one latent time `y_st` per
//! observed stage, `y_st ~ Exp(D_st)` where `D_st` is the stage normalizer
//! of the unit's component. Given `(y, z)` the supports are independent
//! Gammas and the weights Dirichlet, so a sweep `y -> z -> p -> omega` only
//! draws from standard families. Latent times are regenerated every sweep
//! and never stored.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::RankingDataset;
use crate::em::{random_start, MapResult, Patterns};
use crate::math::sample_log_weighted;
use crate::model::{stage_normalizers, PLMixtureParams};
use crate::prior::PriorHyper;
use crate::rng::seeded;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    /// Total sweeps, burn-in included.
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Store the per-draw label vectors (needs G <= 255).
    pub keep_labels: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            n_iter: 22_000,
            burn_in: 2_000,
            thin: 1,
            seed: 0,
            keep_labels: true,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::InvalidConfig(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.n_iter
            )));
        }
        Ok(())
    }

    /// Number of draws kept after burn-in and thinning.
    pub fn n_retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

/// Retained draws of one chain. Supports are on the sampler's internal scale;
/// call [`PLMixtureParams::canonical`] for comparisons.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    g: usize,
    k: usize,
    n_units: usize,
    draws: Vec<PLMixtureParams>,
    /// 0-based labels per draw, when kept.
    labels: Option<Vec<Vec<u8>>>,
    deviance: Vec<f64>,
    config: GibbsConfig,
    prior: PriorHyper,
}

impl Chain {
    pub fn from_parts(
        n_units: usize,
        draws: Vec<PLMixtureParams>,
        labels: Option<Vec<Vec<u8>>>,
        deviance: Vec<f64>,
        config: GibbsConfig,
        prior: PriorHyper,
    ) -> Result<Self> {
        let first = draws.first().ok_or_else(|| Error::Trace("chain has no draws".into()))?;
        let (g, k) = (first.n_components(), first.n_items());
        if draws.iter().any(|d| d.n_components() != g || d.n_items() != k) {
            return Err(Error::Trace("draws disagree on (G, K)".into()));
        }
        prior.check_shape(g, k)?;
        if deviance.len() != draws.len() {
            return Err(Error::Trace(format!(
                "{} deviance values for {} draws",
                deviance.len(),
                draws.len()
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != draws.len() {
                return Err(Error::Trace(format!(
                    "{} label rows for {} draws",
                    labels.len(),
                    draws.len()
                )));
            }
            if labels
                .iter()
                .any(|row| row.len() != n_units || row.iter().any(|&l| l as usize >= g))
            {
                return Err(Error::Trace("label rows must hold one label in 1..G per unit".into()));
            }
        }
        Ok(Self {
            g,
            k,
            n_units,
            draws,
            labels,
            deviance,
            config,
            prior,
        })
    }

    pub fn n_components(&self) -> usize {
        self.g
    }

    pub fn n_items(&self) -> usize {
        self.k
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn draws(&self) -> &[PLMixtureParams] {
        &self.draws
    }

    pub fn labels(&self) -> Option<&[Vec<u8>]> {
        self.labels.as_deref()
    }

    /// `D(theta) = -2 log L(theta)` per retained draw.
    pub fn deviance(&self) -> &[f64] {
        &self.deviance
    }

    pub fn config(&self) -> &GibbsConfig {
        &self.config
    }

    pub fn prior(&self) -> &PriorHyper {
        &self.prior
    }

    /// Apply a per-draw component permutation (`new g = old perm[g]`).
    pub(crate) fn permuted(&self, perms: &[Vec<usize>]) -> Self {
        let draws = self.draws.iter().zip(perms).map(|(d, p)| d.permuted(p)).collect();
        let labels = self.labels.as_ref().map(|rows| {
            rows.iter()
                .zip(perms)
                .map(|(row, perm)| {
                    let mut inverse = vec![0u8; perm.len()];
                    for (new, &old) in perm.iter().enumerate() {
                        inverse[old] = new as u8;
                    }
                    row.iter().map(|&l| inverse[l as usize]).collect()
                })
                .collect()
        });
        Self {
            draws,
            labels,
            ..self.clone()
        }
    }
}

/// Stage normalizers selected by each unit's label, flat per stage.
pub fn y_rates(ds: &RankingDataset, labels: &[usize], theta: &PLMixtureParams) -> Vec<f64> {
    let mut rates = vec![0.0; ds.total_stages()];
    for (s, o) in ds.orderings().iter().enumerate() {
        let off = ds.stage_offset(s);
        stage_normalizers(o, theta.support(labels[s]), &mut rates[off..off + o.len()]);
    }
    rates
}

/// Draw the latent times, one per observed stage; unit `s` occupies
/// `ds.stage_offset(s)..` in the result.
pub fn sample_y<R: Rng + ?Sized>(
    ds: &RankingDataset,
    labels: &[usize],
    theta: &PLMixtureParams,
    rng: &mut R,
) -> Vec<f64> {
    let mut y = y_rates(ds, labels, theta);
    for r in y.iter_mut() {
        let e: f64 = Exp1.sample(rng);
        *r = e / *r;
    }
    y
}

/// Unnormalized log masses of the label full conditional, N x G flat:
/// `log omega_g + sum_i u_si log p_gi - sum_t y_st D_gst`.
pub fn label_log_masses(ds: &RankingDataset, y: &[f64], theta: &PLMixtureParams) -> Vec<f64> {
    let g_count = theta.n_components();
    let log_w: Vec<f64> = theta.weights().iter().map(|w| w.ln()).collect();
    let log_p: Vec<f64> = theta.support_flat().iter().map(|p| p.ln()).collect();
    let k = theta.n_items();
    let mut out = vec![0.0; ds.n_units() * g_count];
    let mut norm = vec![0.0; k];
    for (s, o) in ds.orderings().iter().enumerate() {
        let ys = &y[ds.stage_offset(s)..ds.stage_offset(s) + o.len()];
        for g in 0..g_count {
            stage_normalizers(o, theta.support(g), &mut norm);
            let mut m = log_w[g];
            for (t, &item) in o.items().iter().enumerate() {
                m += log_p[g * k + item] - ys[t] * norm[t];
            }
            out[s * g_count + g] = m;
        }
    }
    out
}

pub fn sample_z<R: Rng + ?Sized>(ds: &RankingDataset, y: &[f64], theta: &PLMixtureParams, rng: &mut R) -> Vec<usize> {
    let g_count = theta.n_components();
    let masses = label_log_masses(ds, y, theta);
    let mut scratch = Vec::with_capacity(g_count);
    masses
        .chunks(g_count)
        .map(|row| sample_log_weighted(row, &mut scratch, rng))
        .collect()
}

/// Shape and rate (G x K, row-major) of the Gamma full conditionals of
/// the supports.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaParams {
    pub shape: Vec<f64>,
    pub rate: Vec<f64>,
}

pub fn support_conditional(
    ds: &RankingDataset,
    y: &[f64],
    labels: &[usize],
    prior: &PriorHyper,
) -> Result<GammaParams> {
    let (g_count, k) = (prior.n_components(), prior.n_items());
    let mut ranked = vec![0.0; g_count * k];
    // Every item of a unit is exposed for all its stages, except ranked items
    // which leave after their own stage. Track the full total per component
    // and the shortfall per ranked item.
    let mut total = vec![0.0; g_count];
    let mut shortfall = vec![0.0; g_count * k];
    for (s, o) in ds.orderings().iter().enumerate() {
        let g = labels[s];
        let ys = &y[ds.stage_offset(s)..ds.stage_offset(s) + o.len()];
        let unit_total: f64 = ys.iter().sum();
        total[g] += unit_total;
        let mut prefix = 0.0;
        for (t, &item) in o.items().iter().enumerate() {
            prefix += ys[t];
            ranked[g * k + item] += 1.0;
            shortfall[g * k + item] += unit_total - prefix;
        }
    }
    let mut shape = Vec::with_capacity(g_count * k);
    let mut rate = Vec::with_capacity(g_count * k);
    for g in 0..g_count {
        for i in 0..k {
            shape.push(prior.shape(g, i) + ranked[g * k + i]);
            let r = prior.rate(g) + (total[g] - shortfall[g * k + i]).max(0.0);
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Numerical(format!(
                    "support full conditional for component {} item {} has rate {r}; use a positive prior rate",
                    g + 1,
                    i + 1
                )));
            }
            rate.push(r);
        }
    }
    Ok(GammaParams { shape, rate })
}

/// Draw all supports, G x K row-major.
pub fn sample_p<R: Rng + ?Sized>(
    ds: &RankingDataset,
    y: &[f64],
    labels: &[usize],
    prior: &PriorHyper,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let post = support_conditional(ds, y, labels, prior)?;
    post.shape
        .iter()
        .zip(&post.rate)
        .map(|(&a, &b)| gamma_draw(a, b, rng))
        .collect()
}

fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let dist = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(dist.sample(rng).max(f64::MIN_POSITIVE))
}

/// Dirichlet parameters `alpha_g + #{s : z_s = g}`.
pub fn omega_conditional(labels: &[usize], prior: &PriorHyper) -> Vec<f64> {
    let mut conc = prior.concentrations().to_vec();
    for &l in labels {
        conc[l] += 1.0;
    }
    conc
}

pub fn sample_omega<R: Rng + ?Sized>(labels: &[usize], prior: &PriorHyper, rng: &mut R) -> Result<Vec<f64>> {
    let conc = omega_conditional(labels, prior);
    if conc.len() == 1 {
        return Ok(vec![1.0]);
    }
    let mut draws = Vec::with_capacity(conc.len());
    for &a in &conc {
        let dist = Gamma::new(a, 1.0).map_err(|e| Error::Numerical(e.to_string()))?;
        draws.push(dist.sample(rng));
    }
    let total: f64 = draws.iter().sum();
    if total <= 0.0 || total.is_nan() {
        // every Gamma underflowed: fall back to the Dirichlet mean
        let sum: f64 = conc.iter().sum();
        return Ok(conc.iter().map(|a| a / sum).collect());
    }
    Ok(draws.into_iter().map(|x| x / total).collect())
}

/// Current position of the sampler.
#[derive(Clone, Debug)]
pub struct GibbsState {
    theta: PLMixtureParams,
    labels: Vec<usize>,
}

impl GibbsState {
    pub fn new(theta: PLMixtureParams, labels: Vec<usize>) -> Result<Self> {
        if labels.iter().any(|&l| l >= theta.n_components()) {
            return Err(Error::InvalidConfig("label outside 1..G".into()));
        }
        Ok(Self { theta, labels })
    }

    pub fn params(&self) -> &PLMixtureParams {
        &self.theta
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// One systematic sweep `y -> z -> p -> omega`.
    pub fn sweep<R: Rng + ?Sized>(&mut self, ds: &RankingDataset, prior: &PriorHyper, rng: &mut R) -> Result<()> {
        if self.labels.len() != ds.n_units() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} units",
                self.labels.len(),
                ds.n_units()
            )));
        }
        let y = sample_y(ds, &self.labels, &self.theta, rng);
        self.labels = sample_z(ds, &y, &self.theta, rng);
        let support = sample_p(ds, &y, &self.labels, prior, rng)?;
        let weights = sample_omega(&self.labels, prior, rng)?;
        self.theta = PLMixtureParams::from_flat(self.theta.n_items(), support, weights)?;
        Ok(())
    }
}

/// Run one chain. With `init` the sampler starts from the MAP estimate and
/// its argmax memberships; otherwise from a random prior-based start with
/// uniform random labels.
pub fn run_chain(
    ds: &RankingDataset,
    g: usize,
    prior: &PriorHyper,
    config: &GibbsConfig,
    init: Option<&MapResult>,
) -> Result<Chain> {
    config.validate()?;
    if g == 0 {
        return Err(Error::InvalidConfig("number of components must be at least 1".into()));
    }
    if config.keep_labels && g > u8::MAX as usize {
        return Err(Error::InvalidConfig("labels can only be kept for G <= 255".into()));
    }
    prior.check_shape(g, ds.n_items())?;
    let mut rng = seeded(config.seed);
    let mut state = match init {
        Some(map) => {
            if map.params.n_components() != g {
                return Err(Error::ShapeMismatch(format!(
                    "MAP estimate has G = {}",
                    map.params.n_components()
                )));
            }
            if map.membership.len() != ds.n_units() {
                return Err(Error::ShapeMismatch(
                    "MAP estimate was fitted on another dataset".into(),
                ));
            }
            GibbsState::new(map.params.clone(), map.hard_labels())?
        }
        None => {
            let theta = random_start(prior, &mut rng)?;
            let labels = (0..ds.n_units()).map(|_| rng.random_range(0..g)).collect();
            GibbsState::new(theta, labels)?
        }
    };

    let patterns = Patterns::new(ds);
    let mut scratch = Vec::new();
    let n = config.n_retained();
    let mut draws = Vec::with_capacity(n);
    let mut deviance = Vec::with_capacity(n);
    let mut labels = config.keep_labels.then(|| Vec::with_capacity(n));
    for it in 1..=config.n_iter {
        state.sweep(ds, prior, &mut rng)?;
        if it > config.burn_in && (it - config.burn_in).is_multiple_of(config.thin) {
            deviance.push(-2.0 * patterns.log_lik(&state.theta, &mut scratch));
            draws.push(state.theta.clone());
            if let Some(rows) = labels.as_mut() {
                rows.push(state.labels.iter().map(|&l| l as u8).collect());
            }
        }
    }
    Chain::from_parts(ds.n_units(), draws, labels, deviance, config.clone(), prior.clone())
}
