//! `hammersim` command line.
//!
//! Exit codes: 0 success, 1 error, 2 `simulate` finished but at least one
//! flip landed in a row the attacker does not own.

mod config;

pub use config::{Config, OutputFormat, OutputSpec, RemapEntry, ReportFile, Scenario, Workload, SCHEMA_VERSION};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::analysis::{max_hammers_per_window, min_safe_multiplier, para_survival, validate_para_model, WindowModel};
use crate::controller::{MitigationPolicy, SimReport};
use crate::disturbance::{DisturbanceProfile, ProfileGenParams};
use crate::dram_model::Geometry;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_BREACH: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "hammersim", version, about = "DRAM read-disturb simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one configuration and write its report.
    ///
    /// Exit status 2 means at least one flip hit a row not owned by the attacker.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.path` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a configuration across parameter values and seeds.
    ///
    /// CSV columns: value,seed,flips,breaches,activations,periodic_refreshes,para_refreshes.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form mitigation tables.
    ///
    /// `--table para` (default) columns: p,n,analytic,empirical,abs_error,sigma,log10_analytic,
    /// one row per (p, n) with `trials` Monte Carlo micro-runs each; sigma is the binomial
    /// standard error of the empirical frequency.
    ///
    /// `--table refresh` columns: t_refw,t_rc,t_min,min_safe_k,max_hammers_at_k,max_hammers_at_k_minus_1.
    Analyze {
        #[arg(long, value_enum, default_value_t = Table::Para)]
        table: Table,
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        n: Vec<u64>,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "t-min", value_delimiter = ',')]
        t_min: Vec<u64>,
        #[arg(long = "t-refw", default_value_t = crate::controller::DEFAULT_T_REFW_NS)]
        t_refw: u64,
        #[arg(long = "t-rc", default_value_t = crate::controller::DEFAULT_T_RC_NS)]
        t_rc: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a random vulnerable-cell profile.
    GenProfile {
        #[arg(long)]
        cells: usize,
        #[arg(long = "t-min", default_value_t = 32)]
        t_min: u64,
        #[arg(long = "t-max", default_value_t = 128)]
        t_max: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        banks: u32,
        #[arg(long, default_value_t = 1024)]
        rows: u32,
        #[arg(long = "row-bits", default_value_t = 8192)]
        row_bits: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Table {
    Para,
    Refresh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    ParaP,
    RefreshK,
    Iterations,
}

impl std::str::FromStr for SweepParam {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Ok(match s {
            "para_p" => SweepParam::ParaP,
            "refresh_k" => SweepParam::RefreshK,
            "iterations" => SweepParam::Iterations,
            other => bail!("unknown sweep parameter {other:?} (expected para_p, refresh_k or iterations)"),
        })
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

pub fn execute(command: Command) -> anyhow::Result<i32> {
    match command {
        Command::Simulate { config, out } => cmd_simulate(&config, out.as_deref()),
        Command::Sweep {
            config,
            param,
            values,
            seeds,
            out,
        } => {
            let scenario = Scenario::load(&config)?;
            let csv = cmd_sweep(&scenario, param.parse()?, &values, &seeds)?;
            emit(out.as_deref(), &csv)?;
            Ok(EXIT_OK)
        }
        Command::Analyze {
            table,
            p,
            n,
            trials,
            seed,
            t_min,
            t_refw,
            t_rc,
            out,
        } => {
            let csv = match table {
                Table::Para => cmd_analyze(&p, &n, trials, seed)?,
                Table::Refresh => refresh_table(t_refw, t_rc, &t_min)?,
            };
            emit(out.as_deref(), &csv)?;
            Ok(EXIT_OK)
        }
        Command::GenProfile {
            cells,
            t_min,
            t_max,
            seed,
            out,
            banks,
            rows,
            row_bits,
        } => {
            let geometry = Geometry::new(banks, rows, row_bits)?;
            let profile = DisturbanceProfile::generate(
                &geometry,
                ProfileGenParams {
                    cells,
                    t_min,
                    t_max,
                    seed,
                },
            )?;
            let mut json = serde_json::to_string_pretty(&profile)?;
            json.push('\n');
            fs::write(&out, json).with_context(|| format!("writing {}", out.display()))?;
            Ok(EXIT_OK)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn render_report(report: &ReportFile, format: OutputFormat) -> anyhow::Result<String> {
    Ok(match format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            s
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["time_ns", "bank", "row", "bit", "direction", "aggressor_row"])?;
            for f in &report.report.flips {
                let direction = serde_json::to_value(f.direction)?;
                w.write_record([
                    f.time.to_string(),
                    f.bank.to_string(),
                    f.row.to_string(),
                    f.bit.to_string(),
                    direction.as_str().unwrap_or_default().to_string(),
                    f.aggressor_row.to_string(),
                ])?;
            }
            String::from_utf8(w.into_inner()?)?
        }
    })
}

/// Run a config, write its report, and map the outcome to an exit code.
pub fn cmd_simulate(config: &Path, out: Option<&Path>) -> anyhow::Result<i32> {
    let scenario = Scenario::load(config)?;
    let report = scenario.run()?;
    let text = render_report(&report, scenario.output.format)?;
    let target = out.map(Path::to_path_buf).or_else(|| scenario.output.path.clone());
    emit(target.as_deref(), &text)?;
    let breaches = report.breaches();
    eprintln!(
        "activations={} flips={} breaches={breaches}",
        report.report.activations,
        report.report.flips.len()
    );
    Ok(if breaches > 0 { EXIT_BREACH } else { EXIT_OK })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepRow {
    pub value: String,
    pub seed: u64,
    pub flips: u64,
    pub breaches: u64,
    pub activations: u64,
    pub periodic_refreshes: u64,
    pub para_refreshes: u64,
}

fn variant(base: &Scenario, param: SweepParam, value: &str, seed: u64) -> anyhow::Result<Scenario> {
    let mut s = base.clone();
    if let MitigationPolicy::Para { p, .. } = s.policy {
        s.policy = MitigationPolicy::Para { p, rng_seed: seed };
    }
    if let Workload::Attack(a) = &mut s.workload {
        a.seed = seed;
    }
    match param {
        SweepParam::ParaP => {
            let p: f64 = value.parse().with_context(|| format!("para_p value {value:?}"))?;
            s.timing = s.policy.effective_timing(&s.timing)?;
            s.policy = MitigationPolicy::Para { p, rng_seed: seed };
            s.policy.validate()?;
        }
        SweepParam::RefreshK => {
            let k: u32 = value.parse().with_context(|| format!("refresh_k value {value:?}"))?;
            if k == 0 {
                bail!("refresh_k must be >= 1");
            }
            s.timing.refresh_multiplier_k = k;
        }
        SweepParam::Iterations => {
            let n: u64 = value.parse().with_context(|| format!("iterations value {value:?}"))?;
            match &mut s.workload {
                Workload::Attack(a) => a.iterations = n,
                Workload::Trace(_) => bail!("iterations sweep needs an `attack` config"),
            }
        }
    }
    Ok(s)
}

pub fn sweep_rows(
    base: &Scenario,
    param: SweepParam,
    values: &[String],
    seeds: &[u64],
) -> anyhow::Result<Vec<SweepRow>> {
    if values.is_empty() || seeds.is_empty() {
        bail!("sweep needs at least one value and one seed");
    }
    let jobs: Vec<(&String, u64)> = values
        .iter()
        .flat_map(|v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let scenarios = jobs
        .iter()
        .map(|(v, s)| variant(base, param, v, *s))
        .collect::<anyhow::Result<Vec<_>>>()?;
    jobs.par_iter()
        .zip(scenarios.par_iter())
        .map(|((value, seed), scenario)| {
            let r = scenario.run()?;
            let SimReport {
                activations,
                periodic_refreshes,
                para_refreshes,
                ..
            } = r.report;
            Ok(SweepRow {
                value: (*value).clone(),
                seed: *seed,
                flips: r.report.flips.len() as u64,
                breaches: r.breaches(),
                activations,
                periodic_refreshes,
                para_refreshes,
            })
        })
        .collect()
}

pub fn cmd_sweep(base: &Scenario, param: SweepParam, values: &[String], seeds: &[u64]) -> anyhow::Result<String> {
    let rows = sweep_rows(base, param, values, seeds)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "value",
        "seed",
        "flips",
        "breaches",
        "activations",
        "periodic_refreshes",
        "para_refreshes",
    ])?;
    for r in rows {
        w.write_record([
            r.value,
            r.seed.to_string(),
            r.flips.to_string(),
            r.breaches.to_string(),
            r.activations.to_string(),
            r.periodic_refreshes.to_string(),
            r.para_refreshes.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn cmd_analyze(p_grid: &[f64], n_grid: &[u64], trials: u64, seed: u64) -> anyhow::Result<String> {
    if p_grid.is_empty() || n_grid.is_empty() {
        bail!("analyze needs --p and --n");
    }
    if trials == 0 {
        bail!("--trials must be >= 1");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["p", "n", "analytic", "empirical", "abs_error", "sigma", "log10_analytic"])?;
    for &p in p_grid {
        for &n in n_grid {
            let v = validate_para_model(p, n, trials, seed)?;
            let s = para_survival(p, n)?;
            w.write_record([
                p.to_string(),
                n.to_string(),
                v.analytic.to_string(),
                v.empirical.to_string(),
                v.abs_error.to_string(),
                v.sigma.to_string(),
                s.log10.to_string(),
            ])?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn refresh_table(t_refw: u64, t_rc: u64, t_mins: &[u64]) -> anyhow::Result<String> {
    if t_mins.is_empty() {
        bail!("refresh table needs --t-min");
    }
    let w = WindowModel::new(t_refw, t_rc, 1)?;
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record([
        "t_refw",
        "t_rc",
        "t_min",
        "min_safe_k",
        "max_hammers_at_k",
        "max_hammers_at_k_minus_1",
    ])?;
    for &t_min in t_mins {
        let k = min_safe_multiplier(&w, t_min)?;
        let below = if k > 1 {
            max_hammers_per_window(&w.with_k(k - 1)).to_string()
        } else {
            String::new()
        };
        out.write_record([
            t_refw.to_string(),
            t_rc.to_string(),
            t_min.to_string(),
            k.to_string(),
            max_hammers_per_window(&w.with_k(k)).to_string(),
            below,
        ])?;
    }
    Ok(String::from_utf8(out.into_inner()?)?)
}
