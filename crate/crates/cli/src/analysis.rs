use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use plmix::criteria::{format_sig, CriteriaReport, Criterion};
use plmix::gof::{posterior_predictive, Discrepancy, GofConfig, GofReport};
use plmix::trace::{parse_chain, parse_relabeled};
use plmix::PLMixtureParams;
use serde::{Deserialize, Serialize};

use crate::fit::{load_dataset, FitSummary, CHAIN_FILE, CRITERIA_JSON, RELABELED_FILE, SUMMARY_FILE};
use crate::manifest::RunManifest;
use crate::output::{read_text, resolve_input, write_summary_json, write_text, CliError, CliResult, SUMMARY_DIGITS};

pub const GOF_DIR: &str = "gof";
pub const GOF_FILE: &str = "gof.json";
pub const GOF_DRAWS_FILE: &str = "gof_draws.csv";
pub const CURVES_FILE: &str = "criteria_curves.csv";
pub const QUANTILES_FILE: &str = "support_quantiles.csv";
pub const PAIRS_FILE: &str = "discrepancy_pairs.csv";

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct GofArgs {
    /// Directory written by `fit` (needs chain.csv)
    pub run: PathBuf,
    /// Dataset the chain was fitted on
    pub data: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    /// Posterior draws to use; defaults to min(2000, retained draws)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub nrep: Option<u64>,
    #[arg(long, env = "PLMIX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output directory, defaults to <RUN>/gof
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// gof.json: p values and bookkeeping without the per-draw values.
#[derive(Serialize)]
struct GofSummary<'a> {
    n_rep: usize,
    p_b1: f64,
    p_b2: f64,
    p_b1_cond: Option<f64>,
    p_b2_cond: Option<f64>,
    n_strata: usize,
    skipped: &'a [usize; 4],
}

pub fn cmd_gof(mut args: GofArgs) -> CliResult<()> {
    args.run = resolve_input(&args.run)?;
    args.data = resolve_input(&args.data)?;
    let chain_path = args.run.join(CHAIN_FILE);
    let chain = parse_chain(&read_text(&chain_path)?, None).map_err(|source| CliError::Input {
        path: chain_path.clone(),
        source,
    })?;
    let ds = load_dataset(&args.data, Some(args.k.unwrap_or(chain.n_items())))?;
    let out = args.out.clone().unwrap_or_else(|| args.run.join(GOF_DIR));
    let manifest = RunManifest::new("gof", args.seed, &args, &[&chain_path, &args.data])?;

    let config = GofConfig {
        n_rep: args.nrep.map(|n| n as usize),
        seed: args.seed,
    };
    let report = posterior_predictive(&chain, &ds, &config)?;
    let summary = GofSummary {
        n_rep: report.n_rep,
        p_b1: report.p_b1,
        p_b2: report.p_b2,
        p_b1_cond: report.p_b1_cond,
        p_b2_cond: report.p_b2_cond,
        n_strata: report.n_strata,
        skipped: &report.skipped,
    };
    write_summary_json(&out.join(GOF_FILE), &summary)?;
    write_text(&out.join(GOF_DRAWS_FILE), &report.draws_csv())?;
    manifest.write(&out, vec![GOF_FILE.into(), GOF_DRAWS_FILE.into()])?;

    print_p_values(&report);
    println!("wrote {}", out.display());
    Ok(())
}

fn print_p_values(report: &GofReport) {
    for d in Discrepancy::ALL {
        match report.p_value(d) {
            Some(p) => println!("p_{:<10} {}", d.name(), format_sig(p, SUMMARY_DIGITS)),
            None => println!("p_{:<10} n/a (single ordering length)", d.name()),
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Directory written by `fit` or `select`
    pub run: PathBuf,
    /// Output directory, defaults to <RUN>/report
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// A fitted model found under the run directory.
struct FitDir {
    g: usize,
    dir: PathBuf,
}

fn fit_dirs(run: &Path) -> CliResult<Vec<FitDir>> {
    if run.join(RELABELED_FILE).is_file() {
        let summary = read_summary(&run.join(SUMMARY_FILE))?;
        return Ok(vec![FitDir {
            g: summary.g,
            dir: run.to_path_buf(),
        }]);
    }
    let entries = fs::read_dir(run).map_err(|source| CliError::Read {
        path: run.to_path_buf(),
        source,
    })?;
    let mut dirs: Vec<FitDir> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let g = name.strip_prefix('G')?.parse().ok()?;
            let dir = e.path();
            dir.join(RELABELED_FILE).is_file().then_some(FitDir { g, dir })
        })
        .collect();
    dirs.sort_by_key(|d| d.g);
    if dirs.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no {RELABELED_FILE} found; expected a fit or select output directory",
            run.display()
        )));
    }
    Ok(dirs)
}

fn read_summary(path: &Path) -> CliResult<FitSummary> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Usage(format!("{}: unreadable summary: {e}", path.display())))
}

/// Linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn criteria_curves(run: &Path, fits: &[FitDir]) -> CliResult<String> {
    let reports: Vec<CriteriaReport> = if run.join(CRITERIA_JSON).is_file() {
        let path = run.join(CRITERIA_JSON);
        serde_json::from_str(&read_text(&path)?)
            .map_err(|e| CliError::Usage(format!("{}: unreadable criteria: {e}", path.display())))?
    } else {
        fits.iter()
            .map(|f| read_summary(&f.dir.join(SUMMARY_FILE)).map(|s| s.criteria))
            .collect::<CliResult<_>>()?
    };
    let mut out = String::from("G,criterion,value\n");
    for r in &reports {
        for c in Criterion::ALL {
            let _ = writeln!(out, "{},{c},{}", r.g, format_sig(r.value(c), SUMMARY_DIGITS));
        }
    }
    Ok(out)
}

fn support_quantiles(fits: &[FitDir]) -> CliResult<String> {
    let mut out = String::from("G,component,item,label,min,q25,median,q75,max,mean\n");
    for fit in fits {
        let path = fit.dir.join(RELABELED_FILE);
        let chain = parse_relabeled(&read_text(&path)?, None).map_err(|source| CliError::Input {
            path: path.clone(),
            source,
        })?;
        let summary = read_summary(&fit.dir.join(SUMMARY_FILE)).ok();
        let labels = summary.and_then(|s| s.item_labels);
        let canon: Vec<PLMixtureParams> = chain.chain().draws().iter().map(PLMixtureParams::canonical).collect();
        let (g, k) = (chain.chain().n_components(), chain.chain().n_items());
        let mut column = Vec::with_capacity(canon.len());
        for c in 0..g {
            for i in 0..k {
                column.clear();
                column.extend(canon.iter().map(|d| d.support(c)[i]));
                column.sort_by(f64::total_cmp);
                let mean = column.iter().sum::<f64>() / column.len() as f64;
                let label = labels.as_ref().map_or_else(|| (i + 1).to_string(), |l| l[i].clone());
                let _ = write!(out, "{},{},{},{label}", fit.g, c + 1, i + 1);
                for q in [0.0, 0.25, 0.5, 0.75, 1.0] {
                    let _ = write!(out, ",{}", format_sig(quantile(&column, q), SUMMARY_DIGITS));
                }
                let _ = writeln!(out, ",{}", format_sig(mean, SUMMARY_DIGITS));
            }
        }
    }
    Ok(out)
}

/// Observed against replicated discrepancies, one row per draw and measure.
fn discrepancy_pairs(gof_draws: &Path) -> CliResult<String> {
    let text = read_text(gof_draws)?;
    let mut out = String::from("draw,measure,observed,replicated\n");
    for (n, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 1 + 2 * Discrepancy::ALL.len() {
            return Err(CliError::Usage(format!(
                "{} line {}: expected {} fields",
                gof_draws.display(),
                n + 1,
                1 + 2 * Discrepancy::ALL.len()
            )));
        }
        for (j, d) in Discrepancy::ALL.iter().enumerate() {
            let obs: f64 = fields[1 + 2 * j].parse().unwrap_or(f64::NAN);
            let rep: f64 = fields[2 + 2 * j].parse().unwrap_or(f64::NAN);
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fields[0],
                d.name(),
                format_sig(obs, SUMMARY_DIGITS),
                format_sig(rep, SUMMARY_DIGITS)
            );
        }
    }
    Ok(out)
}

pub fn cmd_report(mut args: ReportArgs) -> CliResult<()> {
    args.run = resolve_input(&args.run)?;
    let out = args.out.clone().unwrap_or_else(|| args.run.join("report"));
    let fits = fit_dirs(&args.run)?;

    let mut inputs: Vec<PathBuf> = fits.iter().map(|f| f.dir.join(RELABELED_FILE)).collect();
    let mut outputs = vec![CURVES_FILE.to_string(), QUANTILES_FILE.to_string()];
    write_text(&out.join(CURVES_FILE), &criteria_curves(&args.run, &fits)?)?;
    write_text(&out.join(QUANTILES_FILE), &support_quantiles(&fits)?)?;
    let mut gof_found = 0;
    for fit in &fits {
        let draws = fit.dir.join(GOF_DIR).join(GOF_DRAWS_FILE);
        if draws.is_file() {
            let name = if fits.len() == 1 {
                PAIRS_FILE.to_string()
            } else {
                format!("G{}_{PAIRS_FILE}", fit.g)
            };
            write_text(&out.join(&name), &discrepancy_pairs(&draws)?)?;
            inputs.push(draws);
            outputs.push(name);
            gof_found += 1;
        }
    }
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    RunManifest::new("report", 0, &args, &input_refs)?.write(&out, outputs)?;
    if gof_found == 0 {
        println!("no gof output found; run `plmix gof` first for discrepancy pairs");
    }
    println!("wrote {}", out.display());
    Ok(())
}
