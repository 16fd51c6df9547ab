//! JSON run configuration (`"schema": 1`).
//!
//! Relative paths inside a config file resolve against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use crate::attacks::{generate_trace, isolation_breach_report, AttackSpec, BreachReport, OwnerRange, PageMap};
use crate::controller::{parse_hex_bytes, parse_trace, MitigationPolicy, Request, SimReport, Simulator, TimingParams};
use crate::disturbance::DisturbanceProfile;
use crate::dram_model::{Geometry, RemapTable};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemapEntry {
    pub bank: u32,
    /// `logical_to_physical[logical_row] = physical_row`.
    pub logical_to_physical: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: u32,
    pub geometry: Geometry,
    #[serde(default)]
    pub remap: Vec<RemapEntry>,
    #[serde(default)]
    pub timing: TimingParams,
    #[serde(default)]
    pub policy: MitigationPolicy,
    pub profile_path: PathBuf,
    #[serde(default)]
    pub trace_path: Option<PathBuf>,
    #[serde(default)]
    pub attack: Option<AttackSpec>,
    #[serde(default)]
    pub page_map: Option<Vec<OwnerRange>>,
    /// Hex byte pattern every row holds before the run; zeros when absent.
    #[serde(default)]
    pub initial_fill: Option<String>,
    #[serde(default)]
    pub output: OutputSpec,
}

impl Config {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow!("config field `{path}`: {}", e.into_inner())
        })?;
        if cfg.schema != SCHEMA_VERSION {
            bail!("config field `schema`: unsupported version {} (expected {SCHEMA_VERSION})", cfg.schema);
        }
        match (&cfg.trace_path, &cfg.attack) {
            (Some(_), Some(_)) => bail!("config fields `trace_path` and `attack` conflict: give exactly one"),
            (None, None) => bail!("config needs one of `trace_path` or `attack`"),
            _ => {}
        }
        cfg.timing.validate().context("config field `timing`")?;
        cfg.policy.validate().context("config field `policy`")?;
        Ok(cfg)
    }
}

/// What the simulator replays.
#[derive(Debug, Clone, PartialEq)]
pub enum Workload {
    Trace(Vec<Request>),
    Attack(AttackSpec),
}

/// A config with every referenced file loaded and validated.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub geometry: Geometry,
    pub remaps: Vec<(u32, RemapTable)>,
    pub timing: TimingParams,
    pub policy: MitigationPolicy,
    pub profile: DisturbanceProfile,
    pub workload: Workload,
    pub pages: Option<PageMap>,
    pub fill: Vec<u8>,
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub schema: u32,
    pub report: SimReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breach: Option<BreachReport>,
}

impl ReportFile {
    pub fn breaches(&self) -> u64 {
        self.breach.map_or(0, |b| b.breaches)
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Scenario {
    pub fn load(config_path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(config_path)
            .with_context(|| format!("reading config {}", config_path.display()))?;
        let cfg = Config::from_json(&text)?;
        let base = config_path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_config(cfg, base)
    }

    pub fn from_config(cfg: Config, base: &Path) -> anyhow::Result<Self> {
        let geometry = cfg.geometry;

        let profile_path = resolve(base, &cfg.profile_path);
        let profile_text = fs::read_to_string(&profile_path)
            .with_context(|| format!("config field `profile_path`: reading {}", profile_path.display()))?;
        let profile: DisturbanceProfile = serde_json::from_str(&profile_text)
            .with_context(|| format!("profile {}", profile_path.display()))?;
        profile
            .validate_for(&geometry)
            .with_context(|| format!("profile {}", profile_path.display()))?;

        let remaps = cfg
            .remap
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let table = RemapTable::from_mapping(r.logical_to_physical.clone())
                    .with_context(|| format!("config field `remap[{i}]`"))?;
                if r.bank >= geometry.banks() || table.rows() != geometry.rows_per_bank() {
                    bail!("config field `remap[{i}]`: bank or row count does not match geometry");
                }
                Ok((r.bank, table))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;

        let pages = cfg
            .page_map
            .as_ref()
            .map(|ranges| PageMap::from_ranges(geometry, ranges))
            .transpose()
            .context("config field `page_map`")?;

        let workload = match (cfg.trace_path, cfg.attack) {
            (Some(p), None) => {
                let path = resolve(base, &p);
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("config field `trace_path`: reading {}", path.display()))?;
                Workload::Trace(parse_trace(&text).with_context(|| format!("trace {}", path.display()))?)
            }
            (None, Some(a)) => {
                if pages.is_none() {
                    bail!("config field `attack`: attacks need a `page_map`");
                }
                Workload::Attack(a)
            }
            _ => unreachable!("checked by Config::from_json"),
        };

        let fill = match &cfg.initial_fill {
            Some(s) => parse_hex_bytes(s)
                .ok_or_else(|| anyhow!("config field `initial_fill`: bad hex byte pattern {s:?}"))?,
            None => vec![0],
        };

        let mut output = cfg.output;
        if let Some(p) = &output.path {
            output.path = Some(resolve(base, p));
        }

        let scenario = Scenario {
            geometry,
            remaps,
            timing: cfg.timing,
            policy: cfg.policy,
            profile,
            workload,
            pages,
            fill,
            output,
        };
        if let Workload::Attack(spec) = &scenario.workload {
            spec.rows(&scenario.geometry, scenario.pages.as_ref().unwrap())
                .context("config field `attack`")?;
        }
        Ok(scenario)
    }

    pub fn trace(&self) -> anyhow::Result<Vec<Request>> {
        Ok(match &self.workload {
            Workload::Trace(t) => t.clone(),
            Workload::Attack(spec) => generate_trace(spec, &self.geometry, self.pages.as_ref().unwrap())?,
        })
    }

    pub fn run(&self) -> anyhow::Result<ReportFile> {
        let mut sim = Simulator::new(self.geometry, &self.timing, &self.policy, &self.profile)?
            .with_fill(&self.fill)?;
        for (bank, table) in &self.remaps {
            sim = sim.with_remap(*bank, table.clone())?;
        }
        if let Some(pages) = &self.pages {
            sim = sim.with_page_map(pages.clone())?;
        }
        let report = match &self.workload {
            Workload::Trace(t) => sim.run(t)?,
            Workload::Attack(spec) => {
                sim.run(spec.requests(&self.geometry, self.pages.as_ref().unwrap())?)?
            }
        };
        let breach = self.pages.as_ref().map(|p| isolation_breach_report(&report, p));
        Ok(ReportFile {
            schema: SCHEMA_VERSION,
            report,
            breach,
        })
    }
}
