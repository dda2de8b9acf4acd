//! Model-selection criteria from posterior deviance samples.
//!
//! With `D(theta) = -2 log L(theta)`, `D_bar` its posterior mean and `VAR`
//! its posterior variance:
//!
//! ```text
//! DIC1  = D_bar + (D_bar - D(theta_MAP))      DIC2  = D_bar + VAR/2
//! BPIC1 = D_bar + 2 (D_bar - D(theta_MAP))    BPIC2 = D_bar + VAR
//! BICM1 = D_bar + VAR/2 (log N - 1)           BICM2 = D(theta_MAP) + VAR/2 log N
//! BIC   = D(theta_MLE) + nu log N,            nu = G (K - 1) + (G - 1)
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::RankingDataset;
use crate::em::MapResult;
use crate::gibbs::Chain;
use crate::math::{mean, variance};
use crate::model::mixture_log_lik;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    Dic1,
    Dic2,
    Bpic1,
    Bpic2,
    Bicm1,
    Bicm2,
    Bic,
}

impl Criterion {
    pub const ALL: [Criterion; 7] = [
        Criterion::Dic1,
        Criterion::Dic2,
        Criterion::Bpic1,
        Criterion::Bpic2,
        Criterion::Bicm1,
        Criterion::Bicm2,
        Criterion::Bic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Dic1 => "DIC1",
            Criterion::Dic2 => "DIC2",
            Criterion::Bpic1 => "BPIC1",
            Criterion::Bpic2 => "BPIC2",
            Criterion::Bicm1 => "BICM1",
            Criterion::Bicm2 => "BICM2",
            Criterion::Bic => "BIC",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown criterion {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    #[serde(rename = "G")]
    pub g: usize,
    pub n_units: usize,
    pub n_draws: usize,
    /// Posterior mean deviance.
    pub d_bar: f64,
    /// Unbiased posterior variance of the deviance.
    pub d_var: f64,
    /// Deviance at the MAP estimate.
    pub d_map: f64,
    /// Smallest deviance among the draws.
    pub d_min: f64,
    pub dic1: f64,
    pub dic2: f64,
    pub bpic1: f64,
    pub bpic2: f64,
    pub bicm1: f64,
    /// `D_min + VAR/2 log N`: BICM with the best draw standing in for the mode.
    pub bicm1_best_draw: f64,
    pub bicm2: f64,
    pub bic: f64,
    /// Deviance used by BIC.
    pub d_bic: f64,
    /// Free parameters counted by BIC.
    pub nu: usize,
    /// False when BIC fell back to the MAP deviance under the fitting prior.
    pub bic_from_flat_fit: bool,
}

impl CriteriaReport {
    /// Criteria from deviance samples and point deviances. `d_flat` is the
    /// deviance at the flat-prior fit; without it BIC uses `d_map`.
    pub fn from_deviance(
        deviance: &[f64],
        d_map: f64,
        d_flat: Option<f64>,
        g: usize,
        k: usize,
        n_units: usize,
    ) -> Result<Self> {
        if deviance.len() < 2 {
            return Err(Error::InvalidConfig(
                "at least two retained draws are needed for the deviance variance".into(),
            ));
        }
        if g == 0 || k < 2 || n_units == 0 {
            return Err(Error::InvalidConfig(format!(
                "invalid (G, K, N) = ({g}, {k}, {n_units})"
            )));
        }
        let d_bar = mean(deviance);
        let d_var = variance(deviance);
        let d_min = deviance.iter().copied().fold(f64::INFINITY, f64::min);
        let log_n = (n_units as f64).ln();
        let p_d = d_bar - d_map;
        let nu = g * (k - 1) + (g - 1);
        let d_bic = d_flat.unwrap_or(d_map);
        Ok(Self {
            g,
            n_units,
            n_draws: deviance.len(),
            d_bar,
            d_var,
            d_map,
            d_min,
            dic1: d_bar + p_d,
            dic2: d_bar + d_var / 2.0,
            bpic1: d_bar + 2.0 * p_d,
            bpic2: d_bar + d_var,
            bicm1: d_bar + d_var / 2.0 * (log_n - 1.0),
            bicm1_best_draw: d_min + d_var / 2.0 * log_n,
            bicm2: d_map + d_var / 2.0 * log_n,
            bic: d_bic + nu as f64 * log_n,
            d_bic,
            nu,
            bic_from_flat_fit: d_flat.is_some(),
        })
    }

    pub fn value(&self, c: Criterion) -> f64 {
        match c {
            Criterion::Dic1 => self.dic1,
            Criterion::Dic2 => self.dic2,
            Criterion::Bpic1 => self.bpic1,
            Criterion::Bpic2 => self.bpic2,
            Criterion::Bicm1 => self.bicm1,
            Criterion::Bicm2 => self.bicm2,
            Criterion::Bic => self.bic,
        }
    }
}

/// Criteria for one G. `flat_fit` is the flat-prior (maximum likelihood)
/// fit used by BIC; without it BIC uses the MAP deviance and the report
/// says so.
pub fn compute_criteria(
    chain: &Chain,
    map: &MapResult,
    flat_fit: Option<&MapResult>,
    ds: &RankingDataset,
) -> Result<CriteriaReport> {
    let (g, k) = (chain.n_components(), chain.n_items());
    let fits = std::iter::once(map).chain(flat_fit);
    for fit in fits {
        if fit.params.n_components() != g || fit.params.n_items() != k {
            return Err(Error::ShapeMismatch(
                "chain and point estimates disagree on (G, K)".into(),
            ));
        }
        if fit.membership.len() != ds.n_units() {
            return Err(Error::ShapeMismatch(
                "point estimate was fitted on another dataset".into(),
            ));
        }
    }
    if chain.n_units() != ds.n_units() || k != ds.n_items() {
        return Err(Error::ShapeMismatch("chain was fitted on another dataset".into()));
    }
    let d_map = -2.0 * mixture_log_lik(ds, &map.params)?;
    let d_flat = flat_fit
        .map(|f| mixture_log_lik(ds, &f.params).map(|l| -2.0 * l))
        .transpose()?;
    CriteriaReport::from_deviance(chain.deviance(), d_map, d_flat, g, k, ds.n_units())
}

/// The G minimizing each criterion (ties to the smaller G).
pub fn select_g(reports: &[CriteriaReport]) -> Result<Vec<(Criterion, usize)>> {
    if reports.is_empty() {
        return Err(Error::InvalidConfig("no criteria reports to compare".into()));
    }
    let mut sorted: Vec<&CriteriaReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.g);
    if sorted.windows(2).any(|w| w[0].g == w[1].g) {
        return Err(Error::InvalidConfig("reports must be for distinct G".into()));
    }
    Ok(Criterion::ALL
        .iter()
        .map(|&c| {
            let best = sorted
                .iter()
                .fold(sorted[0], |best, r| if r.value(c) < best.value(c) { r } else { best });
            (c, best.g)
        })
        .collect())
}

/// CSV table with one row per G and columns `G,DIC1,DIC2,BPIC1,BPIC2,BICM1,BICM2,BIC`.
/// Values use 6 significant digits.
pub fn criteria_csv(reports: &[CriteriaReport]) -> String {
    let mut out = String::from("G");
    for c in Criterion::ALL {
        out.push(',');
        out.push_str(c.name());
    }
    out.push('\n');
    for r in reports {
        out.push_str(&r.g.to_string());
        for c in Criterion::ALL {
            out.push(',');
            out.push_str(&format_sig(r.value(c), 6));
        }
        out.push('\n');
    }
    out
}

/// Format with `digits` significant digits, without exponent for moderate
/// magnitudes.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&magnitude) {
        return format!("{:.*e}", digits.saturating_sub(1), x);
    }
    let decimals = digits as i32 - 1 - magnitude;
    let s = if decimals >= 0 {
        let s = format!("{x:.*}", decimals as usize);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let unit = 10f64.powi(-decimals);
        format!("{:.0}", (x / unit).round() * unit)
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

/// Round to `digits` significant digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    format_sig(x, digits).parse().unwrap_or(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{fit_map, EmConfig};
    use crate::gibbs::{run_chain, GibbsConfig};
    use crate::prior::PriorHyper;
    use crate::relabel::pivotal_relabel;

    #[test]
    fn constant_deviance() {
        let r = CriteriaReport::from_deviance(&[50.0; 10], 50.0, None, 2, 4, 30).unwrap();
        for c in [
            Criterion::Dic1,
            Criterion::Dic2,
            Criterion::Bpic1,
            Criterion::Bpic2,
            Criterion::Bicm1,
        ] {
            assert_eq!(r.value(c), 50.0);
        }
        assert!(!r.bic_from_flat_fit);
        assert_eq!(r.nu, 7);
    }

    #[test]
    fn formula_arithmetic() {
        // mean 100, unbiased variance 64 / 3
        let r = CriteriaReport::from_deviance(&[96.0, 104.0, 96.0, 104.0], 96.0, Some(90.0), 2, 5, 20).unwrap();
        let v = 64.0 / 3.0;
        assert!((r.d_var - v).abs() < 1e-12);
        assert_eq!(r.dic1, 104.0);
        assert!((r.bpic2 - (100.0 + v)).abs() < 1e-12);
        assert!((r.bicm2 - (96.0 + v / 2.0 * 20f64.ln())).abs() < 1e-12);
        assert_eq!(r.nu, 9);
        assert!((r.bic - (90.0 + 9.0 * 20f64.ln())).abs() < 1e-12);
        assert!(r.bic_from_flat_fit);
        assert_eq!(r.d_min, 96.0);
        assert!((r.bicm1_best_draw - (96.0 + v / 2.0 * 20f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn worked_example() {
        // two draws at 98 and 102: mean 100, unbiased variance 8
        let r = CriteriaReport::from_deviance(&[98.0, 102.0], 96.0, None, 1, 3, 100).unwrap();
        assert_eq!(r.d_var, 8.0);
        assert_eq!(r.dic1, 104.0);
        assert_eq!(r.dic2, 104.0);
        assert_eq!(r.bpic1, 108.0);
        assert_eq!(r.bpic2, 108.0);
        assert_eq!(r.bicm2, 96.0 + 4.0 * 100f64.ln());
        assert_eq!(r.bicm1, 100.0 + 4.0 * (100f64.ln() - 1.0));
    }

    #[test]
    fn report_identities_and_shift() {
        let dev: Vec<f64> = (0..50).map(|i| 200.0 + ((i * 37) % 11) as f64).collect();
        let a = CriteriaReport::from_deviance(&dev, 199.0, Some(198.0), 3, 5, 80).unwrap();
        assert!((a.dic2 - (a.d_bar + a.d_var / 2.0)).abs() < 1e-12);
        assert!(((a.bpic1 - a.dic1) - (a.dic1 - a.d_bar)).abs() < 1e-9);
        assert!(((a.bpic2 - a.dic2) - (a.dic2 - a.d_bar)).abs() < 1e-9);
        let shifted: Vec<f64> = dev.iter().map(|d| d + 13.5).collect();
        let b = CriteriaReport::from_deviance(&shifted, 212.5, Some(211.5), 3, 5, 80).unwrap();
        for c in Criterion::ALL {
            assert!((b.value(c) - a.value(c) - 13.5).abs() < 1e-9, "{c}");
        }
        assert!((b.d_var - a.d_var).abs() < 1e-9);
    }

    #[test]
    fn too_few_draws() {
        assert!(CriteriaReport::from_deviance(&[1.0], 1.0, None, 1, 3, 10).is_err());
    }

    #[test]
    fn selection_and_ties() {
        let mk = |g, v: f64| CriteriaReport::from_deviance(&[v, v], v, None, g, 4, 100).unwrap();
        let single = select_g(&[mk(3, 10.0)]).unwrap();
        assert!(single.iter().all(|&(_, g)| g == 3));
        // BIC penalty favours G = 1 at equal deviance; the rest tie
        let picks = select_g(&[mk(2, 10.0), mk(1, 10.0)]).unwrap();
        assert!(picks.iter().all(|&(_, g)| g == 1));
        assert!(select_g(&[]).is_err());
        assert!(select_g(&[mk(1, 1.0), mk(1, 2.0)]).is_err());
    }

    #[test]
    fn csv_layout() {
        let r = CriteriaReport::from_deviance(&[98.0, 102.0], 96.0, None, 1, 3, 100).unwrap();
        let csv = criteria_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "G,DIC1,DIC2,BPIC1,BPIC2,BICM1,BICM2,BIC");
        assert!(lines.next().unwrap().starts_with("1,104,104,108,108,"));
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(5268.7312, 6), "5268.73");
        assert_eq!(format_sig(0.0712345678, 6), "0.0712346");
        assert_eq!(format_sig(-12.0, 6), "-12");
        assert_eq!(format_sig(1234567.0, 6), "1234570");
        assert_eq!(format_sig(9.9999996, 6), "10");
        assert_eq!(round_sig(0.123456789, 3), 0.123);
        assert_eq!(format_sig(1e-9, 6), "1.00000e-9");
    }

    #[test]
    fn invariant_to_relabeling() {
        let ds = RankingDataset::parse("1,2\n2,1\n3,1\n1,3\n2,3\n1,2\n", Some(3)).unwrap();
        let prior = PriorHyper::default_for(2, 3).unwrap();
        let map = fit_map(&ds, 2, &prior, &EmConfig::default()).unwrap();
        let cfg = GibbsConfig {
            n_iter: 200,
            burn_in: 50,
            seed: 1,
            ..GibbsConfig::default()
        };
        let chain = run_chain(&ds, 2, &prior, &cfg, Some(&map)).unwrap();
        let swapped = map.params.permuted(&[1, 0]);
        let relabeled = pivotal_relabel(&chain, &swapped).unwrap();
        let a = compute_criteria(&chain, &map, None, &ds).unwrap();
        let b = compute_criteria(relabeled.chain(), &map, None, &ds).unwrap();
        assert_eq!(a, b);
    }
}
