use std::path::{Path, PathBuf};

use clap::Args;
use plmix::criteria::Criterion;
use plmix::em::EmConfig;
use plmix::gibbs::GibbsConfig;
use plmix::simulation::{run_study, CensoringSetting, Scenario, StudyConfig};
use plmix::PriorSpec;
use serde::{Deserialize, Serialize};

use crate::manifest::RunManifest;
use crate::output::{read_text, resolve_input, write_summary_json, write_text, CliError, CliResult};

pub const AGREEMENT_FILE: &str = "agreement.csv";
pub const DISTRIBUTION_FILE: &str = "distribution.csv";
pub const REPLICATES_FILE: &str = "replicates.csv";
pub const STUDY_FILE: &str = "study.json";

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Study configuration (TOML, or JSON by extension); replaces the flags below
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// True numbers of components, comma separated
    #[arg(long = "g-star", value_delimiter = ',', default_value = "1,2")]
    pub g_star: Vec<usize>,
    /// Censoring settings (A, B, C, full), comma separated
    #[arg(long, value_delimiter = ',', default_value = "A")]
    pub censoring: Vec<CensoringSetting>,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub gmin: usize,
    #[arg(long, default_value_t = 4)]
    pub gmax: usize,
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    #[arg(long, default_value_t = PriorSpec::default())]
    pub prior: PriorSpec,
    #[arg(long)]
    pub no_flat_bic: bool,
    /// Full design: G* = 1..4, settings A, B, C, 100 replicates, grid 1..7,
    /// 22000 sweeps with 2000 burn-in. Overrides the matching flags.
    #[arg(long)]
    #[serde(default)]
    pub full_scale: bool,
    #[arg(long, env = "PLMIX_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

impl SimulateArgs {
    fn study(&self) -> CliResult<StudyConfig> {
        if let Some(path) = &self.config {
            return load_study(path);
        }
        if self.full_scale {
            return self.resolved(
                &[1, 2, 3, 4],
                &[CensoringSetting::A, CensoringSetting::B, CensoringSetting::C],
                100,
                (1, 7),
                (22_000, 2_000),
            );
        }
        self.resolved(
            &self.g_star,
            &self.censoring,
            self.replicates,
            (self.gmin, self.gmax),
            (self.iters, self.burnin),
        )
    }

    fn resolved(
        &self,
        g_star: &[usize],
        censoring: &[CensoringSetting],
        replicates: usize,
        (gmin, gmax): (usize, usize),
        (iters, burnin): (usize, usize),
    ) -> CliResult<StudyConfig> {
        if gmin == 0 || gmin > gmax {
            return Err(CliError::Usage(format!(
                "need 1 <= --gmin <= --gmax, got {gmin}..{gmax}"
            )));
        }
        let mut scenarios = Vec::new();
        for censoring in censoring {
            for &g_star in g_star {
                scenarios.push(Scenario {
                    k: self.k,
                    n: self.n,
                    ..Scenario::new(g_star, censoring.clone())
                });
            }
        }
        let defaults = StudyConfig::default();
        Ok(StudyConfig {
            scenarios,
            replicates,
            g_grid: (gmin..=gmax).collect(),
            prior: self.prior,
            gibbs: GibbsConfig {
                n_iter: iters,
                burn_in: burnin,
                ..defaults.gibbs
            },
            em: EmConfig {
                n_starts: self.starts,
                ..defaults.em
            },
            bic_flat_fit: !self.no_flat_bic,
            seed: self.seed,
        })
    }
}

fn load_study(path: &Path) -> CliResult<StudyConfig> {
    let text = read_text(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Usage(format!("{}: invalid study configuration: {e}", path.display())))
}

pub fn cmd_simulate(mut args: SimulateArgs) -> CliResult<()> {
    if let Some(path) = &args.config {
        args.config = Some(resolve_input(path)?);
    }
    let study = args.study()?;
    let inputs: Vec<&Path> = args.config.iter().map(PathBuf::as_path).collect();
    let manifest = RunManifest::new("simulate", study.seed, &args, &inputs)?;

    let result = run_study(&study)?;
    for w in result.warnings() {
        eprintln!("warning: {w}");
    }
    write_text(&args.out.join(AGREEMENT_FILE), &result.table.to_csv())?;
    write_text(&args.out.join(DISTRIBUTION_FILE), &result.table.distribution_csv())?;
    write_text(&args.out.join(REPLICATES_FILE), &result.records_csv())?;
    write_summary_json(
        &args.out.join(STUDY_FILE),
        &serde_json::json!({ "config": study, "table": result.table }),
    )?;
    manifest.write(
        &args.out,
        [AGREEMENT_FILE, DISTRIBUTION_FILE, REPLICATES_FILE, STUDY_FILE]
            .map(String::from)
            .to_vec(),
    )?;

    let width = study
        .scenarios
        .iter()
        .map(|s| s.label().len())
        .max()
        .unwrap_or(0)
        .max(8);
    println!(
        "{:<width$} {}",
        "scenario",
        Criterion::ALL.map(|c| format!("{c:>6}")).join(" ")
    );
    for (s, scenario) in study.scenarios.iter().enumerate() {
        let rates: Vec<String> = Criterion::ALL
            .iter()
            .map(|&c| match result.table.agreement(s, c) {
                Some(a) => format!("{a:>6.1}"),
                None => format!("{:>6}", "-"),
            })
            .collect();
        println!("{:<width$} {}", scenario.label(), rates.join(" "));
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
