use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("address {addr:#x} out of range (capacity {capacity} bytes)")]
    AddressOutOfRange { addr: u64, capacity: u64 },

    #[error("row address bank {bank} row {row} out of range ({banks} banks x {rows} rows)")]
    RowOutOfRange {
        bank: u32,
        row: u32,
        banks: u32,
        rows: u32,
    },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid remap table: {0}")]
    Remap(String),

    #[error("invalid profile: {0}")]
    Profile(String),

    #[error("invalid timing: {0}")]
    Timing(String),

    #[error("invalid mitigation policy: {0}")]
    Policy(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("trace line {line}: {msg}")]
    TraceFormat { line: usize, msg: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("ownership violation: bank {bank} row {row} is owned by {owner}, not the attacker")]
    Ownership { bank: u32, row: u32, owner: String },

    #[error("invalid page map: {0}")]
    PageMap(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
