use rand::Rng;

use super::{CensoringProportions, PLMixtureParams};
use crate::data::{PartialOrdering, RankingDataset};
use crate::math::sample_weighted;
use crate::{Error, Result};

/// How many items each simulated unit ranks.
#[derive(Clone, Copy, Debug)]
pub enum Lengths<'a> {
    /// Every unit ranks the same number of items.
    Fixed(usize),
    /// One length per unit.
    PerUnit(&'a [usize]),
    /// Each unit draws its length independently.
    Proportions(&'a CensoringProportions),
}

/// Draw a top-`n` ordering stagewise: each stage picks among the remaining
/// items with probability proportional to their support.
pub fn sample_pl<R: Rng + ?Sized>(p: &[f64], n: usize, rng: &mut R) -> Result<PartialOrdering> {
    let k = p.len();
    if n == 0 || n + 1 > k {
        return Err(Error::InvalidConfig(format!(
            "ordering length {n} outside 1..={}",
            k.saturating_sub(1)
        )));
    }
    if let Some(bad) = p.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidParams(format!("nonpositive support entry {bad}")));
    }
    Ok(sample_pl_unchecked(p, n, &mut p.to_vec(), rng))
}

/// `scratch` must hold a copy of `p`; it is consumed.
pub(crate) fn sample_pl_unchecked<R: Rng + ?Sized>(
    p: &[f64],
    n: usize,
    scratch: &mut [f64],
    rng: &mut R,
) -> PartialOrdering {
    scratch.copy_from_slice(p);
    let mut items = Vec::with_capacity(n);
    for _ in 0..n {
        let pick = sample_weighted(scratch, rng);
        scratch[pick] = 0.0;
        items.push(pick);
    }
    PartialOrdering::from_vec_unchecked(items)
}

/// Simulate `n` units from a PL mixture. Returns the dataset and the
/// 0-based component label of each unit.
pub fn sample_mixture_dataset<R: Rng + ?Sized>(
    theta: &PLMixtureParams,
    n: usize,
    lengths: Lengths<'_>,
    rng: &mut R,
) -> Result<(RankingDataset, Vec<usize>)> {
    let k = theta.n_items();
    let check = |m: usize| {
        if m == 0 || m + 1 > k {
            Err(Error::InvalidConfig(format!(
                "ordering length {m} outside 1..={}",
                k - 1
            )))
        } else {
            Ok(())
        }
    };
    match lengths {
        Lengths::Fixed(m) => check(m)?,
        Lengths::PerUnit(ms) => {
            if ms.len() != n {
                return Err(Error::InvalidConfig(format!("{} lengths for {n} units", ms.len())));
            }
            ms.iter().try_for_each(|&m| check(m))?;
        }
        Lengths::Proportions(props) => {
            if props.n_items() != k {
                return Err(Error::ShapeMismatch(format!(
                    "censoring proportions for K = {} but model has K = {k}",
                    props.n_items()
                )));
            }
        }
    }

    let mut scratch = vec![0.0; k];
    let mut labels = Vec::with_capacity(n);
    let mut orderings = Vec::with_capacity(n);
    for s in 0..n {
        let g = sample_weighted(theta.weights(), rng);
        let m = match lengths {
            Lengths::Fixed(m) => m,
            Lengths::PerUnit(ms) => ms[s],
            Lengths::Proportions(props) => props.draw_length(rng),
        };
        orderings.push(sample_pl_unchecked(theta.support(g), m, &mut scratch, rng));
        labels.push(g);
    }
    Ok((RankingDataset::new(k, orderings)?, labels))
}
