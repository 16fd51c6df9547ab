//! Memory-controller layer.
//!
//! Closed-page policy: every request is ACT, access, PRE on its bank, which
//! occupies the bank for `t_rc`. Banks keep independent clocks. Before an
//! activation at bank time `t`, every periodic refresh of that bank due
//! before the row cycle ends (`t + t_rc`) is applied. PARA runs at PRE time.

mod para;
mod refresh;
mod trace;

pub use para::{para_on_close, ParaHook};
pub use refresh::{periodic_refresh_schedule, RefreshEvent, RefreshSchedule};
pub use trace::{format_trace, hex_bytes, parse_hex_bytes, parse_hex_u64, parse_trace, Op, Request};

use serde::{Deserialize, Serialize};

use crate::attacks::{Owner, PageMap};
use crate::disturbance::{DisturbanceEngine, DisturbanceProfile, FlipEvent};
use crate::dram_model::{CellArray, Geometry, RemapTable, RowAddress};
use crate::error::{Error, Result};

pub const DEFAULT_T_RC_NS: u64 = 50;
pub const DEFAULT_T_REFW_NS: u64 = 64_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingParams {
    /// Row cycle time in ns.
    #[serde(default = "default_t_rc")]
    pub t_rc: u64,
    /// Refresh window in ns.
    #[serde(default = "default_t_refw")]
    pub t_refw: u64,
    #[serde(default = "default_k")]
    pub refresh_multiplier_k: u32,
}

fn default_t_rc() -> u64 {
    DEFAULT_T_RC_NS
}

fn default_t_refw() -> u64 {
    DEFAULT_T_REFW_NS
}

fn default_k() -> u32 {
    1
}

impl Default for TimingParams {
    fn default() -> Self {
        TimingParams {
            t_rc: DEFAULT_T_RC_NS,
            t_refw: DEFAULT_T_REFW_NS,
            refresh_multiplier_k: 1,
        }
    }
}

impl TimingParams {
    pub fn new(t_rc: u64, t_refw: u64, refresh_multiplier_k: u32) -> Result<Self> {
        let t = TimingParams {
            t_rc,
            t_refw,
            refresh_multiplier_k,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_rc == 0 {
            return Err(Error::Timing("t_rc must be > 0".into()));
        }
        if self.t_refw < self.t_rc {
            return Err(Error::Timing(format!(
                "t_refw ({}) must be >= t_rc ({})",
                self.t_refw, self.t_rc
            )));
        }
        if self.refresh_multiplier_k == 0 {
            return Err(Error::Timing("refresh_multiplier_k must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MitigationPolicy {
    #[default]
    None,
    IncreasedRefresh { k: u32 },
    Para { p: f64, rng_seed: u64 },
}

impl MitigationPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MitigationPolicy::None => Ok(()),
            MitigationPolicy::IncreasedRefresh { k } if k < 1 => {
                Err(Error::Policy("increased_refresh requires k >= 1".into()))
            }
            MitigationPolicy::IncreasedRefresh { .. } => Ok(()),
            MitigationPolicy::Para { p, .. } if !(0.0..=1.0).contains(&p) => {
                Err(Error::Policy(format!("PARA probability {p} not in [0, 1]")))
            }
            MitigationPolicy::Para { .. } => Ok(()),
        }
    }

    /// Refresh multiplier contributed by the policy.
    pub fn refresh_multiplier(&self) -> u32 {
        match *self {
            MitigationPolicy::IncreasedRefresh { k } => k,
            _ => 1,
        }
    }

    /// Timing with the policy's multiplier folded into `refresh_multiplier_k`.
    pub fn effective_timing(&self, timing: &TimingParams) -> Result<TimingParams> {
        let k = timing
            .refresh_multiplier_k
            .checked_mul(self.refresh_multiplier())
            .ok_or_else(|| Error::Timing("refresh multiplier overflows".into()))?;
        Ok(TimingParams {
            refresh_multiplier_k: k,
            ..*timing
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimReport {
    pub activations: u64,
    pub periodic_refreshes: u64,
    /// Rows refreshed by PARA (not trigger count).
    pub para_refreshes: u64,
    pub flips: Vec<FlipEvent>,
    pub flips_in_victim_pages: u64,
    pub simulated_time_ns: u64,
    pub trace_requests: u64,
}

/// One simulation instance. Owns all mutable state, including the PARA RNG.
#[derive(Debug, Clone)]
pub struct Simulator {
    geometry: Geometry,
    t_rc_ticks: u64,
    schedule: RefreshSchedule,
    engine: DisturbanceEngine,
    data: CellArray,
    para: Option<ParaHook>,
    pages: Option<PageMap>,
    bank_clock: Vec<u64>,
    next_slot: Vec<u64>,
    report: SimReport,
}

impl Simulator {
    pub fn new(
        geometry: Geometry,
        timing: &TimingParams,
        policy: &MitigationPolicy,
        profile: &DisturbanceProfile,
    ) -> Result<Self> {
        policy.validate()?;
        let timing = policy.effective_timing(timing)?;
        let schedule = RefreshSchedule::new(&timing, geometry.rows_per_bank())?;
        let t_rc_ticks = timing
            .t_rc
            .checked_mul(schedule.ticks_per_ns())
            .ok_or_else(|| Error::Timing("t_rc overflows the refresh tick clock".into()))?;
        let para = match *policy {
            MitigationPolicy::Para { p, rng_seed } => Some(ParaHook::new(p, rng_seed)?),
            _ => None,
        };
        Ok(Simulator {
            geometry,
            t_rc_ticks,
            schedule,
            engine: DisturbanceEngine::new(geometry, profile)?,
            data: CellArray::new(geometry),
            para,
            pages: None,
            bank_clock: vec![0; geometry.banks() as usize],
            next_slot: vec![0; geometry.banks() as usize],
            report: SimReport {
                activations: 0,
                periodic_refreshes: 0,
                para_refreshes: 0,
                flips: Vec::new(),
                flips_in_victim_pages: 0,
                simulated_time_ns: 0,
                trace_requests: 0,
            },
        })
    }

    /// Initialize every row by repeating `pattern`.
    pub fn with_fill(mut self, pattern: &[u8]) -> Result<Self> {
        if pattern.is_empty() {
            return Err(Error::Format("empty fill pattern".into()));
        }
        self.data = CellArray::with_fill(self.geometry, pattern);
        Ok(self)
    }

    pub fn with_remap(mut self, bank: u32, remap: RemapTable) -> Result<Self> {
        self.engine.set_remap(bank, remap)?;
        Ok(self)
    }

    /// Count flips landing in rows not owned by the attacker.
    pub fn with_page_map(mut self, pages: PageMap) -> Result<Self> {
        if pages.geometry() != &self.geometry {
            return Err(Error::PageMap("page map geometry differs from device".into()));
        }
        self.pages = Some(pages);
        Ok(self)
    }

    pub fn cells(&self) -> &CellArray {
        &self.data
    }

    pub fn cells_mut(&mut self) -> &mut CellArray {
        &mut self.data
    }

    pub fn engine(&self) -> &DisturbanceEngine {
        &self.engine
    }

    pub fn schedule(&self) -> &RefreshSchedule {
        &self.schedule
    }

    fn refresh_bank_until(&mut self, bank: u32, limit: u64) -> Result<()> {
        loop {
            let slot = self.next_slot[bank as usize];
            let event = self
                .schedule
                .event(slot)
                .ok_or_else(|| Error::Usage("refresh clock overflow".into()))?;
            if event.ticks >= limit {
                return Ok(());
            }
            self.engine
                .on_refresh(RowAddress::new(bank, event.row), event.ticks)?;
            self.report.periodic_refreshes += 1;
            self.next_slot[bank as usize] = slot + 1;
        }
    }

    /// Execute one request: ACT, access, PRE.
    pub fn step(&mut self, req: &Request) -> Result<()> {
        let (addr, _) = self.geometry.map_address(req.addr)?;
        let start = self.bank_clock[addr.bank as usize];
        let end = start
            .checked_add(self.t_rc_ticks)
            .ok_or_else(|| Error::Usage("simulated time overflow".into()))?;
        self.refresh_bank_until(addr.bank, end)?;

        let flips = self.engine.on_activate(addr, start, &mut self.data)?;
        self.report.activations += 1;
        let tpn = self.schedule.ticks_per_ns();
        for mut f in flips {
            f.time /= tpn;
            if let Some(pages) = &self.pages {
                if pages.owner(RowAddress::new(f.bank, f.row)) != Owner::Attacker {
                    self.report.flips_in_victim_pages += 1;
                }
            }
            self.report.flips.push(f);
        }

        if let Op::Write(pattern) = &req.op {
            self.data.fill_row(addr, pattern)?;
        }

        if let Some(para) = &mut self.para {
            self.report.para_refreshes += para.on_close(addr, &mut self.engine, end)? as u64;
        }
        self.bank_clock[addr.bank as usize] = end;
        self.report.trace_requests += 1;
        Ok(())
    }

    /// Bring every bank's refresh up to the end of the run and return the report.
    pub fn finish(mut self) -> Result<SimReport> {
        let end = self.bank_clock.iter().copied().max().unwrap_or(0);
        for bank in 0..self.geometry.banks() {
            self.refresh_bank_until(bank, end)?;
        }
        self.report.simulated_time_ns = end / self.schedule.ticks_per_ns();
        Ok(self.report)
    }

    pub fn run<I, R>(mut self, trace: I) -> Result<SimReport>
    where
        I: IntoIterator<Item = R>,
        R: std::borrow::Borrow<Request>,
    {
        for req in trace {
            self.step(req.borrow())?;
        }
        self.finish()
    }
}

/// Simulate `trace` on a zero-initialized device.
pub fn run_trace<I, R>(
    trace: I,
    geometry: Geometry,
    timing: &TimingParams,
    policy: &MitigationPolicy,
    profile: &DisturbanceProfile,
) -> Result<SimReport>
where
    I: IntoIterator<Item = R>,
    R: std::borrow::Borrow<Request>,
{
    Simulator::new(geometry, timing, policy, profile)?.run(trace)
}
