//! Simulation study: generate mixtures with U-shaped Beta supports, censor
//! the orderings, fit every G of a grid and record which G each criterion
//! picks.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{compute_criteria, select_g, CriteriaReport, Criterion};
use crate::data::RankingDataset;
use crate::em::{fit_map, fit_map_from, EmConfig};
use crate::gibbs::{run_chain, GibbsConfig};
use crate::model::{apply_censoring, sample_mixture_dataset, CensoringProportions, Lengths, PLMixtureParams};
use crate::prior::{PriorHyper, PriorSpec};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

/// Censoring patterns for K = 6, plus no censoring and custom proportions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CensoringSetting {
    A,
    B,
    C,
    /// Every unit ranks K - 1 items.
    Full,
    Custom(CensoringProportions),
}

impl CensoringSetting {
    pub fn proportions(&self, k: usize) -> Result<CensoringProportions> {
        let fixed = |props: CensoringProportions| {
            if k != props.n_items() {
                Err(Error::InvalidConfig(format!(
                    "censoring setting {self} is defined for K = {}, not K = {k}",
                    props.n_items()
                )))
            } else {
                Ok(props)
            }
        };
        match self {
            CensoringSetting::A => fixed(CensoringProportions::setting_a()),
            CensoringSetting::B => fixed(CensoringProportions::setting_b()),
            CensoringSetting::C => fixed(CensoringProportions::setting_c()),
            CensoringSetting::Full => Ok(CensoringProportions::full(k)),
            CensoringSetting::Custom(p) => fixed(p.clone()),
        }
    }
}

impl fmt::Display for CensoringSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CensoringSetting::A => "A",
            CensoringSetting::B => "B",
            CensoringSetting::C => "C",
            CensoringSetting::Full => "full",
            CensoringSetting::Custom(_) => "custom",
        })
    }
}

impl FromStr for CensoringSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(CensoringSetting::A),
            "b" => Ok(CensoringSetting::B),
            "c" => Ok(CensoringSetting::C),
            "full" | "none" => Ok(CensoringSetting::Full),
            other => Err(Error::InvalidConfig(format!("unknown censoring setting {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub g_star: usize,
    pub k: usize,
    pub n: usize,
    pub censoring: CensoringSetting,
    /// Both shapes of the symmetric Beta generating each support entry.
    #[serde(default = "default_beta_shape")]
    pub beta_shape: f64,
}

fn default_beta_shape() -> f64 {
    0.3
}

impl Scenario {
    pub fn new(g_star: usize, censoring: CensoringSetting) -> Self {
        Self {
            g_star,
            k: 6,
            n: 1000,
            censoring,
            beta_shape: default_beta_shape(),
        }
    }

    pub fn label(&self) -> String {
        format!(
            "G*={} K={} N={} censoring={}",
            self.g_star, self.k, self.n, self.censoring
        )
    }

    fn validate(&self) -> Result<()> {
        if self.g_star == 0 || self.k < 2 || self.n == 0 {
            return Err(Error::InvalidConfig(format!("invalid scenario {}", self.label())));
        }
        if self.beta_shape.is_nan() || self.beta_shape <= 0.0 {
            return Err(Error::InvalidConfig("Beta shape must be positive".into()));
        }
        self.censoring.proportions(self.k).map(|_| ())
    }

    /// Supports with i.i.d. symmetric Beta entries (exact 0 or 1 redrawn)
    /// and equal weights.
    pub fn draw_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PLMixtureParams> {
        let beta = Beta::new(self.beta_shape, self.beta_shape).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let rows = (0..self.g_star)
            .map(|_| {
                (0..self.k)
                    .map(|_| loop {
                        let x: f64 = beta.sample(rng);
                        if x > 0.0 && x < 1.0 {
                            break x;
                        }
                    })
                    .collect()
            })
            .collect();
        PLMixtureParams::new(rows, vec![1.0 / self.g_star as f64; self.g_star])
    }

    /// Draw parameters, simulate full orderings and censor them.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GeneratedData> {
        self.validate()?;
        let props = self.censoring.proportions(self.k)?;
        let theta = self.draw_params(rng)?;
        let (full, labels) = sample_mixture_dataset(&theta, self.n, Lengths::Fixed(self.k - 1), rng)?;
        let dataset = apply_censoring(&full, &props, rng)?;
        Ok(GeneratedData { theta, dataset, labels })
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedData {
    pub theta: PLMixtureParams,
    pub dataset: RankingDataset,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenarios: Vec<Scenario>,
    pub replicates: usize,
    pub g_grid: Vec<usize>,
    pub prior: PriorSpec,
    pub gibbs: GibbsConfig,
    pub em: EmConfig,
    /// Fit the flat-prior MAP for BIC; otherwise BIC uses the MAP deviance.
    pub bic_flat_fit: bool,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![Scenario::new(1, CensoringSetting::A)],
            replicates: 20,
            g_grid: (1..=4).collect(),
            prior: PriorSpec::default(),
            gibbs: GibbsConfig {
                n_iter: 5000,
                burn_in: 1000,
                keep_labels: false,
                ..GibbsConfig::default()
            },
            em: EmConfig::default(),
            bic_flat_fit: true,
            seed: 0,
        }
    }
}

/// Outcome of one replicate of one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub scenario: usize,
    pub replicate: usize,
    pub seed: u64,
    pub strictly_partial_fraction: f64,
    /// Chosen G per criterion; empty when the replicate failed.
    pub selected: BTreeMap<Criterion, usize>,
    pub reports: Vec<CriteriaReport>,
    pub error: Option<String>,
}

/// Fit every G of the grid on one dataset and compute the criteria.
pub fn fit_grid(
    ds: &RankingDataset,
    g_grid: &[usize],
    prior: &PriorSpec,
    gibbs: &GibbsConfig,
    em: &EmConfig,
    bic_flat_fit: bool,
    seed: u64,
) -> Result<Vec<CriteriaReport>> {
    g_grid
        .par_iter()
        .map(|&g| {
            let k = ds.n_items();
            let hyper = prior.hyper(g, k)?;
            let em_cfg = EmConfig {
                seed: derive_seed(seed, &[g as u64, 0]),
                ..em.clone()
            };
            let map = fit_map(ds, g, &hyper, &em_cfg)?;
            let gibbs_cfg = GibbsConfig {
                seed: derive_seed(seed, &[g as u64, 1]),
                ..gibbs.clone()
            };
            let chain = run_chain(ds, g, &hyper, &gibbs_cfg, Some(&map))?;
            let flat = if bic_flat_fit {
                Some(fit_map_from(ds, &map.params, &PriorHyper::flat(g, k)?, &em_cfg)?)
            } else {
                None
            };
            compute_criteria(&chain, &map, flat.as_ref(), ds)
        })
        .collect()
}

fn run_replicate(config: &StudyConfig, scenario: usize, replicate: usize) -> ReplicateRecord {
    let seed = derive_seed(config.seed, &[scenario as u64, replicate as u64]);
    let mut record = ReplicateRecord {
        scenario,
        replicate,
        seed,
        strictly_partial_fraction: f64::NAN,
        selected: BTreeMap::new(),
        reports: Vec::new(),
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let data = config.scenarios[scenario].generate(&mut stream(seed, &[0]))?;
        let ds = &data.dataset;
        let k = ds.n_items();
        record.strictly_partial_fraction =
            ds.orderings().iter().filter(|o| o.len() < k - 1).count() as f64 / ds.n_units() as f64;
        let reports = fit_grid(
            ds,
            &config.g_grid,
            &config.prior,
            &config.gibbs,
            &config.em,
            config.bic_flat_fit,
            derive_seed(seed, &[1]),
        )?;
        record.selected = select_g(&reports)?.into_iter().collect();
        record.reports = reports;
        Ok(())
    })();
    if let Err(e) = outcome {
        record.error = Some(e.to_string());
    }
    record
}

/// Distribution of the selected G and agreement with the truth for one
/// (scenario, criterion) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub scenario: usize,
    pub g_star: usize,
    pub censoring: String,
    pub criterion: Criterion,
    /// Count of replicates selecting each G of the grid.
    pub distribution: BTreeMap<usize, usize>,
    pub replicates: usize,
    /// Percentage of replicates selecting `g_star`.
    pub agreement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub rows: Vec<AgreementRow>,
    pub failed: usize,
}

impl AgreementTable {
    pub fn from_records(config: &StudyConfig, records: &[ReplicateRecord]) -> Self {
        let mut rows = Vec::new();
        for (s, scenario) in config.scenarios.iter().enumerate() {
            let ok: Vec<&ReplicateRecord> = records
                .iter()
                .filter(|r| r.scenario == s && r.error.is_none())
                .collect();
            for c in Criterion::ALL {
                let mut distribution: BTreeMap<usize, usize> = config.g_grid.iter().map(|&g| (g, 0)).collect();
                for r in &ok {
                    *distribution.entry(r.selected[&c]).or_default() += 1;
                }
                let hits = distribution.get(&scenario.g_star).copied().unwrap_or(0);
                rows.push(AgreementRow {
                    scenario: s,
                    g_star: scenario.g_star,
                    censoring: scenario.censoring.to_string(),
                    criterion: c,
                    agreement: if ok.is_empty() {
                        f64::NAN
                    } else {
                        100.0 * hits as f64 / ok.len() as f64
                    },
                    distribution,
                    replicates: ok.len(),
                });
            }
        }
        Self {
            rows,
            failed: records.iter().filter(|r| r.error.is_some()).count(),
        }
    }

    pub fn agreement(&self, scenario: usize, criterion: Criterion) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.criterion == criterion)
            .map(|r| r.agreement)
    }

    /// One row per scenario, agreement percentages per criterion.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("censoring,G_star,replicates");
        for c in Criterion::ALL {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        let mut scenarios: Vec<usize> = self.rows.iter().map(|r| r.scenario).collect();
        scenarios.dedup();
        for s in scenarios {
            let rows: Vec<&AgreementRow> = self.rows.iter().filter(|r| r.scenario == s).collect();
            let _ = write!(out, "{},{},{}", rows[0].censoring, rows[0].g_star, rows[0].replicates);
            for r in rows {
                let _ = write!(out, ",{:.1}", r.agreement);
            }
            out.push('\n');
        }
        out
    }

    /// Long format: `censoring,G_star,criterion,G_hat,count`.
    pub fn distribution_csv(&self) -> String {
        let mut out = String::from("censoring,G_star,criterion,G_hat,count\n");
        for r in &self.rows {
            for (g, n) in &r.distribution {
                let _ = writeln!(out, "{},{},{},{g},{n}", r.censoring, r.g_star, r.criterion);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub table: AgreementTable,
    pub records: Vec<ReplicateRecord>,
}

impl StudyResult {
    /// Messages for replicates that failed and were left out of the table.
    pub fn warnings(&self) -> Vec<String> {
        self.records
            .iter()
            .filter_map(|r| {
                r.error
                    .as_ref()
                    .map(|e| format!("scenario {} replicate {} failed: {e}", r.scenario + 1, r.replicate + 1))
            })
            .collect()
    }

    /// Per-replicate log: selections per criterion, blank on failure.
    pub fn records_csv(&self) -> String {
        let mut out = String::from("scenario,replicate,seed,strictly_partial");
        for c in Criterion::ALL {
            let _ = write!(out, ",{c}");
        }
        out.push_str(",error\n");
        for r in &self.records {
            let _ = write!(
                out,
                "{},{},{},{}",
                r.scenario + 1,
                r.replicate + 1,
                r.seed,
                r.strictly_partial_fraction
            );
            for c in Criterion::ALL {
                match r.selected.get(&c) {
                    Some(g) => {
                        let _ = write!(out, ",{g}");
                    }
                    None => out.push(','),
                }
            }
            let _ = writeln!(out, ",{}", r.error.as_deref().unwrap_or("").replace(',', ";"));
        }
        out
    }
}

pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    if config.g_grid.is_empty() || config.g_grid.contains(&0) {
        return Err(Error::InvalidConfig("the G grid must be nonempty and positive".into()));
    }
    let mut grid = config.g_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    if grid.len() != config.g_grid.len() {
        return Err(Error::InvalidConfig("the G grid has repeated values".into()));
    }
    if config.scenarios.is_empty() || config.replicates == 0 {
        return Err(Error::InvalidConfig(
            "need at least one scenario and one replicate".into(),
        ));
    }
    for s in &config.scenarios {
        s.validate()?;
    }
    config.gibbs.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.scenarios.len())
        .flat_map(|s| (0..config.replicates).map(move |r| (s, r)))
        .collect();
    let records: Vec<ReplicateRecord> = jobs.into_par_iter().map(|(s, r)| run_replicate(config, s, r)).collect();
    Ok(StudyResult {
        table: AgreementTable::from_records(config, &records),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn beta_supports_inside_unit_interval() {
        let s = Scenario::new(4, CensoringSetting::A);
        let mut rng = seeded(1);
        for _ in 0..100 {
            let theta = s.draw_params(&mut rng).unwrap();
            assert!(theta.support_flat().iter().all(|&x| x > 0.0 && x < 1.0));
            assert!(theta.weights().iter().all(|&w| (w - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn generated_data_follow_censoring() {
        let s = Scenario {
            n: 4000,
            ..Scenario::new(2, CensoringSetting::C)
        };
        let data = s.generate(&mut seeded(2)).unwrap();
        assert_eq!(data.dataset.n_units(), 4000);
        let partial = data.dataset.orderings().iter().filter(|o| o.len() < 5).count() as f64 / 4000.0;
        let sd = (0.7f64 * 0.3 / 4000.0).sqrt();
        assert!((partial - 0.7).abs() < 3.0 * sd, "{partial}");
    }

    #[test]
    fn fixed_settings_need_k_six() {
        let s = Scenario {
            k: 5,
            ..Scenario::new(1, CensoringSetting::B)
        };
        assert!(s.generate(&mut seeded(3)).is_err());
        let full = Scenario {
            k: 5,
            n: 10,
            ..Scenario::new(1, CensoringSetting::Full)
        };
        let d = full.generate(&mut seeded(3)).unwrap();
        assert!(d.dataset.lengths().iter().all(|&m| m == 4));
    }

    #[test]
    fn setting_parsing() {
        assert_eq!("a".parse::<CensoringSetting>().unwrap(), CensoringSetting::A);
        assert_eq!("Full".parse::<CensoringSetting>().unwrap(), CensoringSetting::Full);
        assert!("d".parse::<CensoringSetting>().is_err());
    }

    fn tiny_config() -> StudyConfig {
        StudyConfig {
            scenarios: vec![Scenario {
                n: 60,
                k: 4,
                ..Scenario::new(1, CensoringSetting::Full)
            }],
            replicates: 2,
            g_grid: vec![1],
            gibbs: GibbsConfig {
                n_iter: 60,
                burn_in: 20,
                keep_labels: false,
                ..GibbsConfig::default()
            },
            em: EmConfig {
                n_starts: 2,
                ..EmConfig::default()
            },
            seed: 11,
            ..StudyConfig::default()
        }
    }

    #[test]
    fn single_model_grid_agrees_trivially() {
        let result = run_study(&tiny_config()).unwrap();
        assert_eq!(result.table.failed, 0);
        for row in &result.table.rows {
            assert_eq!(row.agreement, 100.0);
            assert_eq!(row.distribution.values().sum::<usize>(), 2);
        }
        let csv = result.table.to_csv();
        assert!(csv.starts_with("censoring,G_star,replicates,DIC1,DIC2,BPIC1,BPIC2,BICM1,BICM2,BIC\n"));
        assert!(csv.contains("full,1,2,100.0"));
    }

    #[test]
    fn study_is_reproducible() {
        let cfg = StudyConfig {
            g_grid: vec![1, 2],
            ..tiny_config()
        };
        let a = run_study(&cfg).unwrap();
        let b = run_study(&cfg).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.records_csv(), b.records_csv());
        for r in &a.table.rows {
            assert_eq!(r.distribution.values().sum::<usize>(), r.replicates);
        }
    }

    #[test]
    fn invalid_study() {
        assert!(run_study(&StudyConfig {
            g_grid: vec![],
            ..tiny_config()
        })
        .is_err());
        assert!(run_study(&StudyConfig {
            g_grid: vec![1, 1],
            ..tiny_config()
        })
        .is_err());
        assert!(run_study(&StudyConfig {
            replicates: 0,
            ..tiny_config()
        })
        .is_err());
    }

    #[test]
    fn failed_replicates_are_excluded() {
        // with a zero prior rate an emptied component has an improper full
        // conditional, which the sampler reports as an error
        let cfg = StudyConfig {
            scenarios: vec![Scenario {
                n: 5,
                k: 4,
                ..Scenario::new(1, CensoringSetting::Full)
            }],
            prior: PriorSpec::flat(),
            g_grid: vec![4],
            ..tiny_config()
        };
        let result = run_study(&cfg).unwrap();
        assert_eq!(result.table.failed, 2);
        assert_eq!(result.table.rows[0].replicates, 0);
        assert_eq!(result.warnings().len(), 2);
        assert!(result
            .records_csv()
            .lines()
            .nth(1)
            .unwrap()
            .ends_with("use a positive prior rate"));
    }
}
