use std::path::{Path, PathBuf};

use clap::Args;
use plmix::criteria::{compute_criteria, criteria_csv, select_g, CriteriaReport};
use plmix::em::{fit_map, fit_map_from, EmConfig};
use plmix::gibbs::{run_chain, GibbsConfig};
use plmix::relabel::{pivotal_relabel, summarize};
use plmix::rng::derive_seed;
use plmix::trace::{chain_trace, labels_trace, relabeled_trace};
use plmix::{PriorHyper, PriorSpec, RankingDataset};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifest::RunManifest;
use crate::output::{read_text, resolve_input, write_json, write_summary_json, write_text, CliError, CliResult};

pub const MAP_FILE: &str = "map.json";
pub const CHAIN_FILE: &str = "chain.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const RELABELED_FILE: &str = "relabeled.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CRITERIA_CSV: &str = "criteria.csv";
pub const CRITERIA_JSON: &str = "criteria.json";
pub const SELECTION_FILE: &str = "selection.json";

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct DataArgs {
    /// Ragged CSV of top-m orderings, 1-based item indices
    pub data: PathBuf,
    /// Number of items, when the file has no `# K=` header
    #[arg(long)]
    pub k: Option<usize>,
}

impl DataArgs {
    pub fn resolve(&mut self) -> CliResult<()> {
        self.data = resolve_input(&self.data)?;
        Ok(())
    }

    pub fn load(&self) -> CliResult<RankingDataset> {
        load_dataset(&self.data, self.k)
    }
}

pub fn load_dataset(path: &Path, k: Option<usize>) -> CliResult<RankingDataset> {
    let text = read_text(path)?;
    RankingDataset::parse(&text, k).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SamplerArgs {
    /// Prior hyperparameters as `c=<shape>,d=<rate>,alpha=<concentration>`
    #[arg(long, default_value_t = PriorSpec::default())]
    pub prior: PriorSpec,
    /// Gibbs sweeps, burn-in included
    #[arg(long, default_value_t = 22_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 2_000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    /// Random EM starts
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    #[arg(long, default_value_t = 1000)]
    pub em_max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub em_tol: f64,
    #[arg(long, env = "PLMIX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Do not store per-draw component labels
    #[arg(long)]
    pub no_labels: bool,
}

impl SamplerArgs {
    fn em(&self, seed: u64) -> EmConfig {
        EmConfig {
            max_iter: self.em_max_iter,
            tol: self.em_tol,
            n_starts: self.starts,
            seed,
        }
    }

    fn gibbs(&self, seed: u64) -> GibbsConfig {
        GibbsConfig {
            n_iter: self.iters,
            burn_in: self.burnin,
            thin: self.thin,
            seed,
            keep_labels: !self.no_labels,
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of mixture components
    #[arg(short = 'G', long = "components")]
    pub components: usize,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Output directory
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1)]
    pub gmin: usize,
    #[arg(long, default_value_t = 4)]
    pub gmax: usize,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Compute BIC from the MAP deviance instead of a flat-prior refit
    #[arg(long)]
    pub no_flat_bic: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

/// Posterior summary written next to the traces. Orderings are 1-based.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitSummary {
    #[serde(rename = "G")]
    pub g: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item_labels: Option<Vec<String>>,
    pub map: MapSummary,
    pub posterior: PosteriorBlock,
    pub criteria: CriteriaReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapSummary {
    pub p: Vec<Vec<f64>>,
    pub omega: Vec<f64>,
    pub log_posterior: f64,
    pub deviance: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PosteriorBlock {
    pub n_draws: usize,
    pub p_mean: Vec<Vec<f64>>,
    pub p_sd: Vec<Vec<f64>>,
    pub omega_mean: Vec<f64>,
    pub omega_sd: Vec<f64>,
    pub modal_orderings: Vec<Vec<usize>>,
    pub deviance_mean: f64,
}

/// MAP, MAP-initialized chain, relabeling and criteria for one G, written
/// into `out`. Returns the criteria and the file names written.
pub fn fit_one(
    ds: &RankingDataset,
    g: usize,
    sampler: &SamplerArgs,
    flat_bic: bool,
    out: &Path,
) -> CliResult<(CriteriaReport, Vec<String>)> {
    let k = ds.n_items();
    let hyper = sampler.prior.hyper(g, k)?;
    let em = sampler.em(derive_seed(sampler.seed, &[g as u64, 0]));
    let gibbs = sampler.gibbs(derive_seed(sampler.seed, &[g as u64, 1]));
    gibbs.validate()?;

    let map = fit_map(ds, g, &hyper, &em)?;
    let chain = run_chain(ds, g, &hyper, &gibbs, Some(&map))?;
    let flat = if flat_bic {
        Some(fit_map_from(ds, &map.params, &PriorHyper::flat(g, k)?, &em)?)
    } else {
        None
    };
    let criteria = compute_criteria(&chain, &map, flat.as_ref(), ds)?;
    let relabeled = pivotal_relabel(&chain, &map.canonical())?;
    let post = summarize(&relabeled)?;

    let mut written = vec![MAP_FILE, CHAIN_FILE, RELABELED_FILE, SUMMARY_FILE];
    write_json(&out.join(MAP_FILE), &map.report())?;
    write_text(&out.join(CHAIN_FILE), &chain_trace(&chain))?;
    if let Some(labels) = labels_trace(&chain) {
        write_text(&out.join(LABELS_FILE), &labels)?;
        written.push(LABELS_FILE);
    }
    write_text(&out.join(RELABELED_FILE), &relabeled_trace(&relabeled))?;

    let canon = map.canonical();
    let summary = FitSummary {
        g,
        k,
        n: ds.n_units(),
        item_labels: ds.item_labels().map(<[String]>::to_vec),
        map: MapSummary {
            p: canon.support_rows(),
            omega: canon.weights().to_vec(),
            log_posterior: map.log_posterior(),
            deviance: map.deviance(),
            iterations: map.iterations,
            converged: map.converged,
        },
        posterior: PosteriorBlock {
            n_draws: post.n_draws,
            p_mean: post.p_mean,
            p_sd: post.p_sd,
            omega_mean: post.omega_mean,
            omega_sd: post.omega_sd,
            modal_orderings: post
                .modal_orderings
                .into_iter()
                .map(|o| o.into_iter().map(|i| i + 1).collect())
                .collect(),
            deviance_mean: post.deviance_mean,
        },
        criteria: criteria.clone(),
    };
    write_summary_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok((criteria, written.into_iter().map(String::from).collect()))
}

pub fn cmd_fit(mut args: FitArgs) -> CliResult<()> {
    args.data.resolve()?;
    if args.components == 0 {
        return Err(CliError::Usage("--components must be at least 1".into()));
    }
    let ds = args.data.load()?;
    let manifest = RunManifest::new("fit", args.sampler.seed, &args, &[&args.data.data])?;
    let (criteria, outputs) = fit_one(&ds, args.components, &args.sampler, true, &args.out)?;
    manifest.write(&args.out, outputs)?;
    println!(
        "fit G={} on N={} K={}: DIC1={:.6} BPIC1={:.6} BIC={:.6}",
        criteria.g,
        ds.n_units(),
        ds.n_items(),
        criteria.dic1,
        criteria.bpic1,
        criteria.bic
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn grid_dir(g: usize) -> String {
    format!("G{g}")
}

pub fn cmd_select(mut args: SelectArgs) -> CliResult<()> {
    args.data.resolve()?;
    if args.gmin == 0 || args.gmin > args.gmax {
        return Err(CliError::Usage(format!(
            "need 1 <= --gmin <= --gmax, got {}..{}",
            args.gmin, args.gmax
        )));
    }
    let ds = args.data.load()?;
    let manifest = RunManifest::new("select", args.sampler.seed, &args, &[&args.data.data])?;
    let grid: Vec<usize> = (args.gmin..=args.gmax).collect();
    let fits = grid
        .par_iter()
        .map(|&g| fit_one(&ds, g, &args.sampler, !args.no_flat_bic, &args.out.join(grid_dir(g))))
        .collect::<CliResult<Vec<_>>>()?;

    let mut outputs = Vec::new();
    let mut reports = Vec::new();
    for (g, (report, files)) in grid.iter().zip(fits) {
        outputs.extend(files.into_iter().map(|f| format!("{}/{f}", grid_dir(*g))));
        reports.push(report);
    }
    let winners = select_g(&reports)?;
    write_text(&args.out.join(CRITERIA_CSV), &criteria_csv(&reports))?;
    write_summary_json(&args.out.join(CRITERIA_JSON), &reports)?;
    let selection: Vec<serde_json::Value> = winners
        .iter()
        .map(|(c, g)| serde_json::json!({ "criterion": c.name(), "G": g }))
        .collect();
    write_json(&args.out.join(SELECTION_FILE), &selection)?;
    outputs.extend([CRITERIA_CSV, CRITERIA_JSON, SELECTION_FILE].map(String::from));
    manifest.write(&args.out, outputs)?;

    println!("criterion  selected G");
    for (c, g) in &winners {
        println!("{:<10} {g}", c.name());
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
