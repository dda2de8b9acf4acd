//! Conjugate priors: independent `Gamma(shape c_gi, rate d_g)` supports and
//! `Dirichlet(alpha)` weights.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::PLMixtureParams;
use crate::{Error, Result};

/// Hyperparameters shared by every component and item.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub shape: f64,
    pub rate: f64,
    pub concentration: f64,
}

impl Default for PriorSpec {
    /// Weakly informative default: `c = 1`, `d = 0.001`, `alpha = 1`.
    fn default() -> Self {
        Self {
            shape: 1.0,
            rate: 0.001,
            concentration: 1.0,
        }
    }
}

impl PriorSpec {
    /// Flat configuration under which the MAP estimate is the MLE.
    pub fn flat() -> Self {
        Self {
            shape: 1.0,
            rate: 0.0,
            concentration: 1.0,
        }
    }

    pub fn hyper(&self, g: usize, k: usize) -> Result<PriorHyper> {
        PriorHyper::new(
            g,
            k,
            vec![self.shape; g * k],
            vec![self.rate; g],
            vec![self.concentration; g],
        )
    }
}

impl fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c={},d={},alpha={}", self.shape, self.rate, self.concentration)
    }
}

impl FromStr for PriorSpec {
    type Err = Error;

    /// `default`, `flat`, or `c=<shape>,d=<rate>,alpha=<concentration>` with
    /// any subset of keys overriding the defaults.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "default" => return Ok(Self::default()),
            "flat" => return Ok(Self::flat()),
            _ => {}
        }
        let mut spec = Self::default();
        for part in s.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidPrior(format!("expected key=value, got {part:?}")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidPrior(format!("bad number {value:?}")))?;
            match key.trim() {
                "c" | "shape" => spec.shape = v,
                "d" | "rate" => spec.rate = v,
                "alpha" | "concentration" => spec.concentration = v,
                other => return Err(Error::InvalidPrior(format!("unknown key {other:?}"))),
            }
        }
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorHyper {
    g: usize,
    k: usize,
    /// `c_gi`, row-major G x K.
    shape: Vec<f64>,
    /// `d_g`.
    rate: Vec<f64>,
    /// `alpha_g`.
    concentration: Vec<f64>,
}

impl PriorHyper {
    pub fn new(g: usize, k: usize, shape: Vec<f64>, rate: Vec<f64>, concentration: Vec<f64>) -> Result<Self> {
        if g == 0 || k < 2 {
            return Err(Error::InvalidPrior(format!(
                "need G >= 1 and K >= 2, got G = {g}, K = {k}"
            )));
        }
        if shape.len() != g * k || rate.len() != g || concentration.len() != g {
            return Err(Error::InvalidPrior(
                "hyperparameter dimensions do not match (G, K)".into(),
            ));
        }
        if shape.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidPrior("Gamma shapes must be positive".into()));
        }
        if rate.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
            return Err(Error::InvalidPrior("Gamma rates must be nonnegative".into()));
        }
        if concentration.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidPrior("Dirichlet parameters must be positive".into()));
        }
        Ok(Self {
            g,
            k,
            shape,
            rate,
            concentration,
        })
    }

    pub fn default_for(g: usize, k: usize) -> Result<Self> {
        PriorSpec::default().hyper(g, k)
    }

    pub fn flat(g: usize, k: usize) -> Result<Self> {
        PriorSpec::flat().hyper(g, k)
    }

    pub fn n_components(&self) -> usize {
        self.g
    }

    pub fn n_items(&self) -> usize {
        self.k
    }

    pub fn shape(&self, g: usize, i: usize) -> f64 {
        self.shape[g * self.k + i]
    }

    pub fn shape_row(&self, g: usize) -> &[f64] {
        &self.shape[g * self.k..(g + 1) * self.k]
    }

    pub fn rate(&self, g: usize) -> f64 {
        self.rate[g]
    }

    pub fn concentration(&self, g: usize) -> f64 {
        self.concentration[g]
    }

    pub fn concentrations(&self) -> &[f64] {
        &self.concentration
    }

    pub(crate) fn check_shape(&self, g: usize, k: usize) -> Result<()> {
        if self.g != g || self.k != k {
            return Err(Error::ShapeMismatch(format!(
                "prior is for (G, K) = ({}, {}) but model is ({g}, {k})",
                self.g, self.k
            )));
        }
        Ok(())
    }

    /// The posterior mode is interior only for `c_gi >= 1` and `alpha_g >= 1`.
    pub fn check_map_compatible(&self) -> Result<()> {
        if self.shape.iter().any(|&c| c < 1.0) {
            return Err(Error::InvalidPrior(
                "MAP estimation requires Gamma shapes c >= 1".into(),
            ));
        }
        if self.concentration.iter().any(|&a| a < 1.0) {
            return Err(Error::InvalidPrior(
                "MAP estimation requires Dirichlet alpha >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Unnormalized log prior density
    /// `sum (c-1) log p - d p + sum (alpha-1) log omega`.
    /// Terms with a zero coefficient are skipped, so zero weights are allowed
    /// when `alpha_g = 1`.
    pub fn log_density(&self, theta: &PLMixtureParams) -> Result<f64> {
        self.check_shape(theta.n_components(), theta.n_items())?;
        let mut total = 0.0;
        for g in 0..self.g {
            let d = self.rate[g];
            for (&c, &p) in self.shape_row(g).iter().zip(theta.support(g)) {
                if c != 1.0 {
                    total += (c - 1.0) * p.ln();
                }
                total -= d * p;
            }
            let a = self.concentration[g];
            if a != 1.0 {
                let w = theta.weights()[g];
                if w <= 0.0 {
                    return Err(Error::Numerical(format!("log of zero weight for component {}", g + 1)));
                }
                total += (a - 1.0) * w.ln();
            }
        }
        Ok(total)
    }
}
