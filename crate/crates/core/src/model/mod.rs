//! Plackett-Luce (PL) and finite PL-mixture probabilities.
//!
//! Under PL with supports `p`, a top-m ordering is built stagewise: at each
//! stage the next item is chosen among those still available with probability
//! proportional to its support. The probability of an ordering is the product
//! over stages of `p[chosen] / sum(p[available])`. Probabilities are
//! invariant to rescaling `p`, so parameters have a canonical form in which
//! each component's supports sum to one.

mod censoring;
pub(crate) mod sampling;

use serde::{Deserialize, Serialize};

pub use censoring::{apply_censoring, CensoringProportions};
pub use sampling::{sample_mixture_dataset, sample_pl, Lengths};

use crate::data::{PartialOrdering, RankingDataset};
use crate::math::{log_sum_exp, normalize_log_weights};
use crate::{Error, Result};

/// Tolerance on `sum(weights) == 1` and on canonical row sums.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Supports `p` (G x K, row-major) and weights `omega` of a PL mixture.
///
/// Rows need not sum to one: EM and the Gibbs sampler work on their own
/// scale. [`PLMixtureParams::canonical`] gives the normalized form used for
/// reporting and expected frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsJson", into = "ParamsJson")]
pub struct PLMixtureParams {
    k: usize,
    support: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsJson {
    #[serde(rename = "G")]
    g: usize,
    p: Vec<Vec<f64>>,
    omega: Vec<f64>,
}

impl TryFrom<ParamsJson> for PLMixtureParams {
    type Error = Error;

    fn try_from(v: ParamsJson) -> Result<Self> {
        if v.g != v.p.len() {
            return Err(Error::InvalidParams(format!(
                "G = {} but {} support rows",
                v.g,
                v.p.len()
            )));
        }
        Self::new(v.p, v.omega)
    }
}

impl From<PLMixtureParams> for ParamsJson {
    fn from(t: PLMixtureParams) -> Self {
        ParamsJson {
            g: t.n_components(),
            p: t.support_rows(),
            omega: t.weights,
        }
    }
}

impl PLMixtureParams {
    pub fn new(support: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let k = support.first().map_or(0, Vec::len);
        if support.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidParams("ragged support matrix".into()));
        }
        Self::from_flat(k, support.concat(), weights)
    }

    pub fn from_flat(k: usize, support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let g = weights.len();
        if g == 0 || k < 2 {
            return Err(Error::InvalidParams(format!(
                "need G >= 1 and K >= 2, got G = {g}, K = {k}"
            )));
        }
        if support.len() != g * k {
            return Err(Error::InvalidParams(format!(
                "support has {} entries, expected G*K = {}",
                support.len(),
                g * k
            )));
        }
        if let Some(bad) = support.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParams(format!("nonpositive support entry {bad}")));
        }
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParams("negative mixture weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidParams(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { k, support, weights })
    }

    /// A single-component model.
    pub fn single(p: Vec<f64>) -> Result<Self> {
        Self::from_flat(p.len(), p, vec![1.0])
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn n_items(&self) -> usize {
        self.k
    }

    pub fn support(&self, g: usize) -> &[f64] {
        &self.support[g * self.k..(g + 1) * self.k]
    }

    pub fn support_flat(&self) -> &[f64] {
        &self.support
    }

    pub fn support_rows(&self) -> Vec<Vec<f64>> {
        self.support.chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Rows rescaled to sum to one.
    pub fn canonical(&self) -> Self {
        let mut support = self.support.clone();
        for row in support.chunks_mut(self.k) {
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
        }
        Self {
            k: self.k,
            support,
            weights: self.weights.clone(),
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.support
            .chunks(self.k)
            .all(|row| (row.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL)
    }

    /// Weighted average of the component supports, `sum_g omega_g p_g`.
    /// Meaningful on canonical parameters.
    pub fn marginal_support(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for (g, &w) in self.weights.iter().enumerate() {
            for (o, &p) in out.iter_mut().zip(self.support(g)) {
                *o += w * p;
            }
        }
        out
    }

    /// Component `g` of the result is component `perm[g]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut support = Vec::with_capacity(self.support.len());
        for &src in perm {
            support.extend_from_slice(self.support(src));
        }
        Self {
            k: self.k,
            support,
            weights: perm.iter().map(|&src| self.weights[src]).collect(),
        }
    }
}

/// Fill `out[t]` with the stage-`t` normalizer `sum of p over items still
/// available`. Accumulated backwards from the unranked mass so no
/// subtraction is involved.
pub(crate) fn stage_normalizers(ordering: &PartialOrdering, p: &[f64], out: &mut [f64]) {
    let items = ordering.items();
    let mut tail = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        if !items.contains(&i) {
            tail += pi;
        }
    }
    for t in (0..items.len()).rev() {
        tail += p[items[t]];
        out[t] = tail;
    }
}

pub(crate) fn pl_log_prob_unchecked(ordering: &PartialOrdering, p: &[f64]) -> f64 {
    let items = ordering.items();
    let mut tail = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        if !items.contains(&i) {
            tail += pi;
        }
    }
    let mut lp = 0.0;
    for &item in items.iter().rev() {
        tail += p[item];
        lp += p[item].ln() - tail.ln();
    }
    lp
}

/// Log-probability of a top-m ordering under a single PL with supports `p`.
pub fn pl_log_prob(ordering: &PartialOrdering, p: &[f64]) -> Result<f64> {
    if let Some(bad) = p.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidParams(format!("nonpositive support entry {bad}")));
    }
    if ordering.items().iter().any(|&i| i >= p.len()) {
        return Err(Error::ShapeMismatch("ordering item beyond support length".into()));
    }
    Ok(pl_log_prob_unchecked(ordering, p))
}

/// Per-component `log omega_g + log P_PL(ordering | p_g)`; components with
/// zero weight get `-inf`.
pub(crate) fn component_log_joint(ordering: &PartialOrdering, theta: &PLMixtureParams, out: &mut [f64]) {
    for (g, o) in out.iter_mut().enumerate() {
        let w = theta.weights[g];
        *o = if w > 0.0 {
            w.ln() + pl_log_prob_unchecked(ordering, theta.support(g))
        } else {
            f64::NEG_INFINITY
        };
    }
}

/// Log-likelihood of one ordering under the mixture.
pub fn unit_log_lik(ordering: &PartialOrdering, theta: &PLMixtureParams) -> f64 {
    let mut buf = vec![0.0; theta.n_components()];
    component_log_joint(ordering, theta, &mut buf);
    log_sum_exp(&buf)
}

fn check_shape(ds: &RankingDataset, theta: &PLMixtureParams) -> Result<()> {
    if ds.n_items() != theta.n_items() {
        return Err(Error::ShapeMismatch(format!(
            "dataset has K = {} but parameters have K = {}",
            ds.n_items(),
            theta.n_items()
        )));
    }
    Ok(())
}

/// Observed-data log-likelihood `sum_s log sum_g omega_g P_PL(pi_s | p_g)`.
pub fn mixture_log_lik(ds: &RankingDataset, theta: &PLMixtureParams) -> Result<f64> {
    check_shape(ds, theta)?;
    let mut buf = vec![0.0; theta.n_components()];
    let mut total = 0.0;
    for o in ds.orderings() {
        component_log_joint(o, theta, &mut buf);
        total += log_sum_exp(&buf);
    }
    Ok(total)
}

/// Posterior component membership of one ordering; sums to one.
pub fn posterior_membership(ordering: &PartialOrdering, theta: &PLMixtureParams) -> Vec<f64> {
    let mut buf = vec![0.0; theta.n_components()];
    component_log_joint(ordering, theta, &mut buf);
    normalize_log_weights(&mut buf);
    buf
}

/// Items sorted by decreasing support, ties by increasing index.
pub fn modal_ordering(p: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ord(items: &[usize], k: usize) -> PartialOrdering {
        PartialOrdering::new(items.iter().map(|i| i - 1).collect(), k).unwrap()
    }

    /// All permutations of 0..k, by recursion.
    fn permutations(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for perm in permutations(k - 1) {
            for pos in 0..=perm.len() {
                let mut p = perm.clone();
                p.insert(pos, k - 1);
                out.push(p);
            }
        }
        out
    }

    /// Direct product formula with explicit remaining-set sums.
    fn brute_prob(items: &[usize], p: &[f64]) -> f64 {
        let mut prob = 1.0;
        let mut used = vec![false; p.len()];
        for &it in items {
            let denom: f64 = (0..p.len()).filter(|&i| !used[i]).map(|i| p[i]).sum();
            prob *= p[it] / denom;
            used[it] = true;
        }
        prob
    }

    #[test]
    fn worked_examples() {
        let p = [0.5, 0.3, 0.2];
        let lp = pl_log_prob(&ord(&[1, 2], 3), &p).unwrap();
        assert!((lp - 0.3f64.ln()).abs() < 1e-14);
        let lp = pl_log_prob(&ord(&[3], 3), &p).unwrap();
        assert!((lp - 0.2f64.ln()).abs() < 1e-14);
        assert!(pl_log_prob(&ord(&[3], 3), &[0.5, 0.0, 0.5]).is_err());
    }

    #[test]
    fn uniform_full_orderings_have_probability_one_over_k_factorial() {
        let p = [0.25; 4];
        for perm in permutations(4) {
            let o = PartialOrdering::new(perm[..3].to_vec(), 4).unwrap();
            assert!((pl_log_prob(&o, &p).unwrap().exp() - 1.0 / 24.0).abs() < 1e-15);
        }
    }

    #[test]
    fn stage_normalizers_match_remaining_sums() {
        let p = [0.5, 0.3, 0.2];
        let mut out = [0.0; 2];
        stage_normalizers(&ord(&[1, 2], 3), &p, &mut out);
        assert!((out[0] - 1.0).abs() < 1e-15);
        assert!((out[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mixture_reductions() {
        let d = RankingDataset::new(3, vec![ord(&[1, 2], 3), ord(&[3], 3), ord(&[2, 1], 3)]).unwrap();
        let p = vec![0.5, 0.3, 0.2];
        let single = PLMixtureParams::single(p.clone()).unwrap();
        let direct: f64 = d.orderings().iter().map(|o| pl_log_prob(o, &p).unwrap()).sum();
        assert!((mixture_log_lik(&d, &single).unwrap() - direct).abs() < 1e-12);

        let twin = PLMixtureParams::new(vec![p.clone(), p], vec![0.3, 0.7]).unwrap();
        assert!((mixture_log_lik(&d, &twin).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn mixture_probabilities_sum_to_one_over_full_orderings() {
        let theta = PLMixtureParams::new(vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.1, 0.8]], vec![0.4, 0.6]).unwrap();
        let total: f64 = permutations(3)
            .iter()
            .map(|perm| unit_log_lik(&PartialOrdering::new(perm[..2].to_vec(), 3).unwrap(), &theta).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn membership_examples() {
        let same = PLMixtureParams::new(vec![vec![0.5, 0.3, 0.2]; 2], vec![0.5, 0.5]).unwrap();
        let z = posterior_membership(&ord(&[1, 2], 3), &same);
        assert!((z[0] - 0.5).abs() < 1e-15 && (z[1] - 0.5).abs() < 1e-15);

        let degenerate = PLMixtureParams::new(vec![vec![0.5, 0.3, 0.2], vec![0.2, 0.3, 0.5]], vec![1.0, 0.0]).unwrap();
        assert_eq!(posterior_membership(&ord(&[1, 2], 3), &degenerate), vec![1.0, 0.0]);

        let theta = PLMixtureParams::new(vec![vec![0.5, 0.3, 0.2], vec![1.0 / 3.0; 3]], vec![0.5, 0.5]).unwrap();
        let z = posterior_membership(&ord(&[1, 2], 3), &theta);
        let a = 0.3 / (0.3 + 1.0 / 6.0);
        assert!((z[0] - a).abs() < 1e-12 && (z[1] - (1.0 - a)).abs() < 1e-12);
        assert!((z[0] - 0.6429).abs() < 1e-4);
    }

    #[test]
    fn modal_orderings() {
        assert_eq!(modal_ordering(&[0.1, 0.7, 0.2]), vec![1, 2, 0]);
        assert_eq!(modal_ordering(&[0.25; 4]), vec![0, 1, 2, 3]);
        // estimates of the first component of a published two-group car fit
        let p = [0.079, 0.263, 0.185, 0.191, 0.071, 0.211];
        let one_based: Vec<usize> = modal_ordering(&p).iter().map(|i| i + 1).collect();
        assert_eq!(one_based, vec![2, 6, 4, 3, 1, 5]);
    }

    #[test]
    fn params_validation_and_json() {
        assert!(PLMixtureParams::new(vec![vec![0.5, 0.5]], vec![0.9]).is_err());
        assert!(PLMixtureParams::new(vec![vec![0.5, -0.5]], vec![1.0]).is_err());
        assert!(PLMixtureParams::new(vec![vec![0.5, 0.5], vec![0.5]], vec![0.5, 0.5]).is_err());
        let theta = PLMixtureParams::new(vec![vec![2.0, 6.0], vec![1.0, 1.0]], vec![0.25, 0.75]).unwrap();
        let c = theta.canonical();
        assert!(c.is_canonical() && !theta.is_canonical());
        let json = serde_json::to_value(&c).unwrap();
        assert_eq!(json["G"], 2);
        assert_eq!(json["p"][0], serde_json::json!([0.25, 0.75]));
        let back: PLMixtureParams = serde_json::from_value(json).unwrap();
        assert_eq!(back, c);
        let bad = serde_json::json!({"G": 1, "p": [[0.5, 0.5]], "omega": [0.3]});
        assert!(serde_json::from_value::<PLMixtureParams>(bad).is_err());
    }

    #[test]
    fn permuted_reorders_components() {
        let theta = PLMixtureParams::new(vec![vec![1.0, 2.0], vec![3.0, 4.0]], vec![0.25, 0.75]).unwrap();
        let sw = theta.permuted(&[1, 0]);
        assert_eq!(sw.support(0), &[3.0, 4.0]);
        assert_eq!(sw.weights(), &[0.75, 0.25]);
    }

    fn arb_support(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..10.0, k)
    }

    proptest! {
        #[test]
        fn scale_invariance(p in arb_support(5), c in 0.001f64..1000.0, m in 1usize..5) {
            let o = PartialOrdering::new((0..m).rev().collect(), 5).unwrap();
            let scaled: Vec<f64> = p.iter().map(|x| x * c).collect();
            let a = pl_log_prob(&o, &p).unwrap();
            let b = pl_log_prob(&o, &scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert_eq!(modal_ordering(&p), modal_ordering(&scaled));
        }

        #[test]
        fn marginalization_matches_enumeration(p in arb_support(4), m in 1usize..3) {
            let perms = permutations(4);
            let prefix = &perms[7][..m];
            let o = PartialOrdering::new(prefix.to_vec(), 4).unwrap();
            let brute: f64 = perms.iter().filter(|q| &q[..m] == prefix).map(|q| brute_prob(q, &p)).sum();
            prop_assert!((pl_log_prob(&o, &p).unwrap().exp() - brute).abs() < 1e-12);
        }

        #[test]
        fn membership_in_simplex(
            p1 in arb_support(4), p2 in arb_support(4), w in 0.0f64..1.0, m in 1usize..4
        ) {
            let theta = PLMixtureParams::new(vec![p1, p2], vec![w, 1.0 - w]).unwrap();
            let o = PartialOrdering::new((0..m).collect(), 4).unwrap();
            let z = posterior_membership(&o, &theta);
            prop_assert!(z.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
