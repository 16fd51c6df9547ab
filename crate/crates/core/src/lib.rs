//! Command-level DRAM simulator with read-disturb fault injection.
//!
//! - [`dram_model`]: geometry, address mapping, physical adjacency, cell data.
//! - [`disturbance`]: per-row exposure ledger and threshold-driven bit flips.
//! - [`controller`]: closed-page request replay, staggered refresh, PARA.
//! - [`attacks`]: hammering trace generators and the page-ownership overlay.
//! - [`analysis`]: closed-form PARA and refresh-rate bounds, Monte Carlo check.
//! - [`cli`]: the `hammersim` command line.

pub mod analysis;
pub mod attacks;
pub mod cli;
pub mod controller;
pub mod disturbance;
pub mod dram_model;
mod error;

pub use error::{Error, Result};

pub use attacks::{
    generate_trace, isolation_breach_report, AccessKind, AttackKind, AttackSpec, BreachReport, Owner,
    OwnerRange, PageMap,
};
pub use controller::{
    run_trace, MitigationPolicy, Op, ParaHook, RefreshSchedule, Request, SimReport, Simulator,
    TimingParams,
};
pub use disturbance::{
    CoupledSide, DisturbanceEngine, DisturbanceProfile, FlipDirection, FlipEvent, HammerLedger,
    PatternGate, VulnerableCell,
};
pub use dram_model::{map_address, CellArray, Geometry, RemapTable, RowAddress};

pub type ParaModelF64 = analysis::ParaModel<f64>;
pub type ParaModelF32 = analysis::ParaModel<f32>;
pub type SurvivalF64 = analysis::Survival<f64>;
pub type SurvivalF32 = analysis::Survival<f32>;
pub type ParaValidationF64 = analysis::ParaValidation<f64>;
pub type ParaValidationF32 = analysis::ParaValidation<f32>;
