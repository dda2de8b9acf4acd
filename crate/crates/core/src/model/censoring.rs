use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{PartialOrdering, RankingDataset};
use crate::math::sample_weighted;
use crate::{Error, Result};

/// Distribution of the number `m` of ranked items, `m = 1..=K-1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<usize, f64>", into = "BTreeMap<usize, f64>")]
pub struct CensoringProportions {
    /// `probs[m - 1]` is the probability of keeping the top `m` items.
    probs: Vec<f64>,
}

impl TryFrom<BTreeMap<usize, f64>> for CensoringProportions {
    type Error = Error;

    fn try_from(map: BTreeMap<usize, f64>) -> Result<Self> {
        let k = map.keys().max().map_or(0, |m| m + 1);
        Self::new(k, &map)
    }
}

impl From<CensoringProportions> for BTreeMap<usize, f64> {
    fn from(c: CensoringProportions) -> Self {
        c.probs.iter().enumerate().map(|(i, &p)| (i + 1, p)).collect()
    }
}

impl CensoringProportions {
    /// Proportions over `m = 1..=k-1`; absent lengths get zero.
    pub fn new(k: usize, proportions: &BTreeMap<usize, f64>) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidConfig(format!("K = {k}, need K >= 2")));
        }
        let mut probs = vec![0.0; k - 1];
        for (&m, &f) in proportions {
            if m == 0 || m >= k {
                return Err(Error::InvalidConfig(format!("length {m} outside 1..={}", k - 1)));
            }
            if !(f >= 0.0 && f.is_finite()) {
                return Err(Error::InvalidConfig(format!("negative proportion {f} for m = {m}")));
            }
            probs[m - 1] = f;
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "censoring proportions sum to {total}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    fn from_percentages(pct: &[f64]) -> Self {
        Self {
            probs: pct.iter().map(|p| p / 100.0).collect(),
        }
    }

    /// K = 6 setting with 84% complete rankings.
    pub fn setting_a() -> Self {
        Self::from_percentages(&[0.0, 2.0, 4.0, 10.0, 84.0])
    }

    /// K = 6 setting with 45% complete rankings.
    pub fn setting_b() -> Self {
        Self::from_percentages(&[5.0, 15.0, 15.0, 20.0, 45.0])
    }

    /// K = 6 setting with 30% complete rankings.
    pub fn setting_c() -> Self {
        Self::from_percentages(&[5.0, 20.0, 20.0, 25.0, 30.0])
    }

    /// No censoring.
    pub fn full(k: usize) -> Self {
        let mut probs = vec![0.0; k - 1];
        probs[k - 2] = 1.0;
        Self { probs }
    }

    pub fn n_items(&self) -> usize {
        self.probs.len() + 1
    }

    pub fn probability(&self, m: usize) -> f64 {
        self.probs.get(m.wrapping_sub(1)).copied().unwrap_or(0.0)
    }

    /// Expected share of orderings with fewer than K-1 items.
    pub fn strictly_partial_fraction(&self) -> f64 {
        1.0 - self.probs[self.probs.len() - 1]
    }

    pub fn draw_length<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_weighted(&self.probs, rng) + 1
    }
}

/// Truncate each complete ordering to an independently drawn length.
pub fn apply_censoring<R: Rng + ?Sized>(
    ds: &RankingDataset,
    proportions: &CensoringProportions,
    rng: &mut R,
) -> Result<RankingDataset> {
    let k = ds.n_items();
    if proportions.n_items() != k {
        return Err(Error::ShapeMismatch(format!(
            "censoring proportions for K = {} applied to K = {k}",
            proportions.n_items()
        )));
    }
    let orderings: Vec<PartialOrdering> = ds
        .orderings()
        .iter()
        .enumerate()
        .map(|(s, o)| {
            if !o.is_full(k) {
                return Err(Error::InvalidDataset(format!("ordering {} is not complete", s + 1)));
            }
            Ok(o.truncated(proportions.draw_length(rng)))
        })
        .collect::<Result<_>>()?;
    RankingDataset::new(k, orderings)
}
