//! DRAM topology, address mapping, physical row adjacency and cell storage.
//!
//! The model is a single channel with a single rank. Addresses are mapped
//! row-interleaved across banks: consecutive row-sized blocks of the byte
//! address space alternate between banks.
//!
//! Bits inside a row are numbered LSB-first within each byte, so bit `i`
//! lives in byte `i / 8` at position `i % 8`. A column is the bit offset of a
//! byte inside its row.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bank/row topology of the simulated device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GeometryRaw", into = "GeometryRaw")]
pub struct Geometry {
    banks: u32,
    rows_per_bank: u32,
    row_size_bits: u32,
    page_size_bits: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryRaw {
    banks: u32,
    rows_per_bank: u32,
    row_size_bits: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    page_size_bits: Option<u32>,
}

impl TryFrom<GeometryRaw> for Geometry {
    type Error = Error;

    fn try_from(raw: GeometryRaw) -> Result<Self> {
        Geometry::with_page_size(
            raw.banks,
            raw.rows_per_bank,
            raw.row_size_bits,
            raw.page_size_bits.unwrap_or(raw.row_size_bits),
        )
    }
}

impl From<Geometry> for GeometryRaw {
    fn from(g: Geometry) -> Self {
        GeometryRaw {
            banks: g.banks,
            rows_per_bank: g.rows_per_bank,
            row_size_bits: g.row_size_bits,
            page_size_bits: Some(g.page_size_bits),
        }
    }
}

impl Geometry {
    /// Geometry with one OS page per row.
    pub fn new(banks: u32, rows_per_bank: u32, row_size_bits: u32) -> Result<Self> {
        Self::with_page_size(banks, rows_per_bank, row_size_bits, row_size_bits)
    }

    pub fn with_page_size(
        banks: u32,
        rows_per_bank: u32,
        row_size_bits: u32,
        page_size_bits: u32,
    ) -> Result<Self> {
        if banks < 1 {
            return Err(Error::Geometry("banks must be >= 1".into()));
        }
        if rows_per_bank < 2 {
            return Err(Error::Geometry("rows_per_bank must be >= 2".into()));
        }
        if row_size_bits < 8 || !row_size_bits.is_multiple_of(8) {
            return Err(Error::Geometry(format!(
                "row_size_bits must be >= 8 and a multiple of 8, got {row_size_bits}"
            )));
        }
        if page_size_bits == 0
            || (!row_size_bits.is_multiple_of(page_size_bits) && !page_size_bits.is_multiple_of(row_size_bits))
        {
            return Err(Error::Geometry(format!(
                "page_size_bits {page_size_bits} must divide or be a multiple of row_size_bits {row_size_bits}"
            )));
        }
        (banks as u64)
            .checked_mul(rows_per_bank as u64)
            .and_then(|r| r.checked_mul(row_size_bits as u64))
            .ok_or_else(|| Error::Geometry("total capacity overflows 64 bits".into()))?;
        Ok(Geometry {
            banks,
            rows_per_bank,
            row_size_bits,
            page_size_bits,
        })
    }

    pub fn banks(&self) -> u32 {
        self.banks
    }

    pub fn rows_per_bank(&self) -> u32 {
        self.rows_per_bank
    }

    pub fn row_size_bits(&self) -> u32 {
        self.row_size_bits
    }

    pub fn page_size_bits(&self) -> u32 {
        self.page_size_bits
    }

    pub fn row_bytes(&self) -> u64 {
        self.row_size_bits as u64 / 8
    }

    pub fn total_rows(&self) -> u64 {
        self.banks as u64 * self.rows_per_bank as u64
    }

    pub fn capacity_bits(&self) -> u64 {
        self.total_rows() * self.row_size_bits as u64
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.capacity_bits() / 8
    }

    pub fn contains(&self, addr: RowAddress) -> bool {
        addr.bank < self.banks && addr.row < self.rows_per_bank
    }

    pub fn check(&self, addr: RowAddress) -> Result<()> {
        if self.contains(addr) {
            Ok(())
        } else {
            Err(Error::RowOutOfRange {
                bank: addr.bank,
                row: addr.row,
                banks: self.banks,
                rows: self.rows_per_bank,
            })
        }
    }

    /// Dense index of a row, `bank * rows_per_bank + row`.
    pub(crate) fn row_index(&self, addr: RowAddress) -> usize {
        addr.bank as usize * self.rows_per_bank as usize + addr.row as usize
    }

    /// Translate a byte offset into its bank, row and column (bit offset).
    pub fn map_address(&self, addr: u64) -> Result<(RowAddress, u64)> {
        let capacity = self.capacity_bytes();
        if addr >= capacity {
            return Err(Error::AddressOutOfRange { addr, capacity });
        }
        let row_bytes = self.row_bytes();
        let block = addr / row_bytes;
        let bank = (block % self.banks as u64) as u32;
        let row = (addr / (row_bytes * self.banks as u64)) as u32;
        let column = (addr % row_bytes) * 8;
        Ok((RowAddress { bank, row }, column))
    }

    /// Byte address of the first byte of a row; inverse of [`Geometry::map_address`]
    /// at column 0.
    pub fn row_base_address(&self, addr: RowAddress) -> Result<u64> {
        self.check(addr)?;
        Ok((addr.row as u64 * self.banks as u64 + addr.bank as u64) * self.row_bytes())
    }
}

/// Free-function form of [`Geometry::map_address`].
pub fn map_address(addr: u64, geometry: &Geometry) -> Result<(RowAddress, u64)> {
    geometry.map_address(addr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowAddress {
    pub bank: u32,
    pub row: u32,
}

impl RowAddress {
    pub fn new(bank: u32, row: u32) -> Self {
        RowAddress { bank, row }
    }
}

impl fmt::Display for RowAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bank {} row {}", self.bank, self.row)
    }
}

/// Logical-to-physical row permutation of one bank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemapTable {
    to_physical: Vec<u32>,
    to_logical: Vec<u32>,
}

/// Logical rows sitting physically on either side of a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Neighbors {
    /// Row at physical position `p - 1`.
    pub left: Option<u32>,
    /// Row at physical position `p + 1`.
    pub right: Option<u32>,
}

impl Neighbors {
    pub fn iter(&self) -> impl Iterator<Item = u32> {
        self.left.into_iter().chain(self.right)
    }

    pub fn len(&self) -> usize {
        self.left.is_some() as usize + self.right.is_some() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl RemapTable {
    pub fn identity(rows_per_bank: u32) -> Self {
        let ids: Vec<u32> = (0..rows_per_bank).collect();
        RemapTable {
            to_physical: ids.clone(),
            to_logical: ids,
        }
    }

    /// Build from `mapping[logical] = physical`; rejects anything that is not a
    /// permutation of `0..mapping.len()`.
    pub fn from_mapping(mapping: Vec<u32>) -> Result<Self> {
        let n = mapping.len();
        let mut to_logical = vec![u32::MAX; n];
        for (logical, &physical) in mapping.iter().enumerate() {
            let slot = to_logical.get_mut(physical as usize).ok_or_else(|| {
                Error::Remap(format!("physical row {physical} out of range 0..{n}"))
            })?;
            if *slot != u32::MAX {
                return Err(Error::Remap(format!(
                    "physical row {physical} is the image of rows {} and {logical}",
                    *slot
                )));
            }
            *slot = logical as u32;
        }
        Ok(RemapTable {
            to_physical: mapping,
            to_logical,
        })
    }

    pub fn rows(&self) -> u32 {
        self.to_physical.len() as u32
    }

    pub fn is_identity(&self) -> bool {
        self.to_physical.iter().enumerate().all(|(i, &p)| i as u32 == p)
    }

    pub fn to_physical(&self, logical: u32) -> u32 {
        self.to_physical[logical as usize]
    }

    pub fn to_logical(&self, physical: u32) -> u32 {
        self.to_logical[physical as usize]
    }

    pub fn mapping(&self) -> &[u32] {
        &self.to_physical
    }

    /// Logical rows physically adjacent (±1) to `row`. Panics if `row` is out of range.
    pub fn physical_neighbors(&self, row: u32) -> Neighbors {
        let p = self.to_physical(row);
        let last = self.rows() - 1;
        Neighbors {
            left: (p > 0).then(|| self.to_logical(p - 1)),
            right: (p < last).then(|| self.to_logical(p + 1)),
        }
    }
}

/// Free-function form of [`RemapTable::physical_neighbors`].
pub fn physical_neighbors(row: u32, remap: &RemapTable, rows_per_bank: u32) -> Result<Neighbors> {
    if row >= rows_per_bank || remap.rows() != rows_per_bank {
        return Err(Error::Usage(format!(
            "row {row} not in a {rows_per_bank}-row bank (remap covers {} rows)",
            remap.rows()
        )));
    }
    Ok(remap.physical_neighbors(row))
}

/// Stored data of every row. Rows never written hold the fill pattern and
/// are only materialized on first write or flip.
#[derive(Debug, Clone)]
pub struct CellArray {
    geometry: Geometry,
    fill: Vec<u8>,
    rows: HashMap<usize, Vec<u8>>,
}

impl CellArray {
    /// All rows initialized to zero.
    pub fn new(geometry: Geometry) -> Self {
        Self::with_fill(geometry, &[0])
    }

    /// All rows initialized by repeating `pattern` across the row.
    pub fn with_fill(geometry: Geometry, pattern: &[u8]) -> Self {
        let fill = cyclic_row(pattern, geometry.row_bytes() as usize);
        CellArray {
            geometry,
            fill,
            rows: HashMap::new(),
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn read_row(&self, addr: RowAddress) -> Result<Vec<u8>> {
        self.geometry.check(addr)?;
        Ok(self.row(addr).to_vec())
    }

    pub fn write_row(&mut self, addr: RowAddress, data: &[u8]) -> Result<()> {
        self.geometry.check(addr)?;
        let expected = self.geometry.row_bytes() as usize;
        if data.len() != expected {
            return Err(Error::Format(format!(
                "row data is {} bytes, rows hold {expected}",
                data.len()
            )));
        }
        let idx = self.geometry.row_index(addr);
        self.rows.insert(idx, data.to_vec());
        Ok(())
    }

    /// Overwrite a row by repeating `pattern` cyclically.
    pub fn fill_row(&mut self, addr: RowAddress, pattern: &[u8]) -> Result<()> {
        if pattern.is_empty() {
            return Err(Error::Format("empty fill pattern".into()));
        }
        self.geometry.check(addr)?;
        let data = cyclic_row(pattern, self.geometry.row_bytes() as usize);
        let idx = self.geometry.row_index(addr);
        self.rows.insert(idx, data);
        Ok(())
    }

    pub fn bit(&self, addr: RowAddress, bit: u32) -> bool {
        get_bit(self.row(addr), bit)
    }

    pub(crate) fn flip_bit(&mut self, addr: RowAddress, bit: u32) {
        let idx = self.geometry.row_index(addr);
        let fill = &self.fill;
        let row = self.rows.entry(idx).or_insert_with(|| fill.clone());
        row[(bit / 8) as usize] ^= 1 << (bit % 8);
    }

    fn row(&self, addr: RowAddress) -> &[u8] {
        self.rows
            .get(&self.geometry.row_index(addr))
            .map(Vec::as_slice)
            .unwrap_or(&self.fill)
    }
}

pub fn get_bit(row: &[u8], bit: u32) -> bool {
    row[(bit / 8) as usize] >> (bit % 8) & 1 == 1
}

fn cyclic_row(pattern: &[u8], len: usize) -> Vec<u8> {
    pattern.iter().copied().cycle().take(len).collect()
}
