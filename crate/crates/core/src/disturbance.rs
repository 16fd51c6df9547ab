//! Read-disturb fault injection.
//!
//! Each row keeps two exposure counters, one per physical side, counting
//! activations of that neighbor since the row was last refreshed. A
//! vulnerable cell flips once its gating exposure reaches its threshold,
//! provided the stored bit allows the flip. Everything here is deterministic.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dram_model::{CellArray, Geometry, RemapTable, RowAddress};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipDirection {
    OneToZero,
    ZeroToOne,
}

impl FlipDirection {
    /// Value the cell must hold for this flip to be possible.
    pub fn source_bit(self) -> bool {
        matches!(self, FlipDirection::OneToZero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternGate {
    Always,
    RequiresStoredOne,
    RequiresStoredZero,
}

impl PatternGate {
    pub fn admits(self, stored: bool) -> bool {
        match self {
            PatternGate::Always => true,
            PatternGate::RequiresStoredOne => stored,
            PatternGate::RequiresStoredZero => !stored,
        }
    }
}

/// Which aggressor side(s) drive a cell toward its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoupledSide {
    /// Left and right exposures add up.
    Either,
    LeftOnly,
    RightOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VulnerableCell {
    pub bank: u32,
    pub victim_row: u32,
    pub bit: u32,
    pub threshold: u64,
    pub flip_direction: FlipDirection,
    pub pattern_gate: PatternGate,
    pub coupled_side: CoupledSide,
}

impl VulnerableCell {
    pub fn victim(&self) -> RowAddress {
        RowAddress::new(self.bank, self.victim_row)
    }

    /// Whether a cell currently storing `stored` can flip.
    pub fn can_flip(&self, stored: bool) -> bool {
        self.pattern_gate.admits(stored) && self.flip_direction.source_bit() == stored
    }

    fn gating_exposure(&self, exposure: &RowExposure) -> u64 {
        match self.coupled_side {
            CoupledSide::Either => exposure.left + exposure.right,
            CoupledSide::LeftOnly => exposure.left,
            CoupledSide::RightOnly => exposure.right,
        }
    }
}

/// The set of vulnerable cells of a device. Serialized as a bare JSON array.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<VulnerableCell>", into = "Vec<VulnerableCell>")]
pub struct DisturbanceProfile {
    entries: Vec<VulnerableCell>,
}

impl TryFrom<Vec<VulnerableCell>> for DisturbanceProfile {
    type Error = Error;

    fn try_from(entries: Vec<VulnerableCell>) -> Result<Self> {
        DisturbanceProfile::new(entries)
    }
}

impl From<DisturbanceProfile> for Vec<VulnerableCell> {
    fn from(p: DisturbanceProfile) -> Self {
        p.entries
    }
}

/// Knobs for [`DisturbanceProfile::generate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProfileGenParams {
    pub cells: usize,
    pub t_min: u64,
    pub t_max: u64,
    pub seed: u64,
}

impl DisturbanceProfile {
    pub fn new(entries: Vec<VulnerableCell>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for c in &entries {
            if c.threshold < 1 {
                return Err(Error::Profile(format!(
                    "cell bank {} row {} bit {} has threshold 0",
                    c.bank, c.victim_row, c.bit
                )));
            }
            if !seen.insert((c.bank, c.victim_row, c.bit)) {
                return Err(Error::Profile(format!(
                    "duplicate cell bank {} row {} bit {}",
                    c.bank, c.victim_row, c.bit
                )));
            }
        }
        Ok(DisturbanceProfile { entries })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(cell: VulnerableCell) -> Self {
        DisturbanceProfile {
            entries: vec![cell],
        }
    }

    pub fn entries(&self) -> &[VulnerableCell] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn min_threshold(&self) -> Option<u64> {
        self.entries.iter().map(|c| c.threshold).min()
    }

    /// Check every entry against a geometry.
    pub fn validate_for(&self, geometry: &Geometry) -> Result<()> {
        for c in &self.entries {
            if !geometry.contains(c.victim()) {
                return Err(Error::Profile(format!(
                    "cell at bank {} row {} outside {} banks x {} rows",
                    c.bank,
                    c.victim_row,
                    geometry.banks(),
                    geometry.rows_per_bank()
                )));
            }
            if c.bit >= geometry.row_size_bits() {
                return Err(Error::Profile(format!(
                    "cell bit {} outside {}-bit row",
                    c.bit,
                    geometry.row_size_bits()
                )));
            }
        }
        Ok(())
    }

    /// Random profile with `cells` distinct vulnerable cells and thresholds
    /// uniform over `[t_min, t_max]`.
    pub fn generate(geometry: &Geometry, params: ProfileGenParams) -> Result<Self> {
        let ProfileGenParams {
            cells,
            t_min,
            t_max,
            seed,
        } = params;
        if t_min < 1 || t_max < t_min {
            return Err(Error::Profile(format!(
                "threshold range [{t_min}, {t_max}] must satisfy 1 <= t_min <= t_max"
            )));
        }
        if cells as u64 > geometry.capacity_bits() / 2 {
            return Err(Error::Profile(format!(
                "{cells} cells exceed half of the {}-bit capacity",
                geometry.capacity_bits()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = HashSet::with_capacity(cells);
        let mut entries = Vec::with_capacity(cells);
        while entries.len() < cells {
            let bank = rng.gen_range(0..geometry.banks());
            let victim_row = rng.gen_range(0..geometry.rows_per_bank());
            let bit = rng.gen_range(0..geometry.row_size_bits());
            if !seen.insert((bank, victim_row, bit)) {
                continue;
            }
            let flip_direction = *[FlipDirection::OneToZero, FlipDirection::ZeroToOne]
                .choose(&mut rng)
                .unwrap();
            let pattern_gate = if rng.gen_bool(0.5) {
                PatternGate::Always
            } else if flip_direction.source_bit() {
                PatternGate::RequiresStoredOne
            } else {
                PatternGate::RequiresStoredZero
            };
            let coupled_side = *[
                CoupledSide::Either,
                CoupledSide::LeftOnly,
                CoupledSide::RightOnly,
            ]
            .choose(&mut rng)
            .unwrap();
            entries.push(VulnerableCell {
                bank,
                victim_row,
                bit,
                threshold: rng.gen_range(t_min..=t_max),
                flip_direction,
                pattern_gate,
                coupled_side,
            });
        }
        entries.sort_by_key(|c| (c.bank, c.victim_row, c.bit));
        Ok(DisturbanceProfile { entries })
    }
}

/// Exposure of one row since its last refresh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RowExposure {
    /// Activations of the physically-left neighbor.
    pub left: u64,
    /// Activations of the physically-right neighbor.
    pub right: u64,
    pub last_refresh: u64,
}

#[derive(Debug, Clone)]
pub struct HammerLedger {
    geometry: Geometry,
    rows: Vec<RowExposure>,
}

impl HammerLedger {
    pub fn new(geometry: Geometry) -> Self {
        HammerLedger {
            geometry,
            rows: vec![RowExposure::default(); geometry.total_rows() as usize],
        }
    }

    pub fn get(&self, addr: RowAddress) -> RowExposure {
        self.rows[self.geometry.row_index(addr)]
    }

    fn get_mut(&mut self, addr: RowAddress) -> &mut RowExposure {
        let idx = self.geometry.row_index(addr);
        &mut self.rows[idx]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlipEvent {
    /// Nanoseconds in reports; engine time units inside the engine.
    pub time: u64,
    pub bank: u32,
    pub row: u32,
    pub bit: u32,
    pub direction: FlipDirection,
    pub aggressor_row: u32,
}

/// Exposure tracking and flip injection for one simulated device.
///
/// Time is an opaque monotone unit chosen by the caller. An activation whose
/// timestamp predates a victim's latest refresh is not charged to that
/// victim: its row cycle straddled the refresh.
#[derive(Debug, Clone)]
pub struct DisturbanceEngine {
    geometry: Geometry,
    remaps: Vec<RemapTable>,
    cells: Vec<VulnerableCell>,
    // Per-row [start, end) into `cells`.
    row_cells: Vec<(u32, u32)>,
    flipped: Vec<bool>,
    ledger: HammerLedger,
    last_activate: Vec<Option<u64>>,
}

impl DisturbanceEngine {
    pub fn new(geometry: Geometry, profile: &DisturbanceProfile) -> Result<Self> {
        profile.validate_for(&geometry)?;
        let mut cells = profile.entries().to_vec();
        cells.sort_by_key(|c| (c.bank, c.victim_row, c.bit));
        let mut row_cells = vec![(0u32, 0u32); geometry.total_rows() as usize];
        let mut i = 0;
        while i < cells.len() {
            let idx = geometry.row_index(cells[i].victim());
            let start = i;
            while i < cells.len() && geometry.row_index(cells[i].victim()) == idx {
                i += 1;
            }
            row_cells[idx] = (start as u32, i as u32);
        }
        Ok(DisturbanceEngine {
            geometry,
            remaps: vec![RemapTable::identity(geometry.rows_per_bank()); geometry.banks() as usize],
            flipped: vec![false; cells.len()],
            cells,
            row_cells,
            ledger: HammerLedger::new(geometry),
            last_activate: vec![None; geometry.banks() as usize],
        })
    }

    pub fn set_remap(&mut self, bank: u32, remap: RemapTable) -> Result<()> {
        if bank >= self.geometry.banks() {
            return Err(Error::Remap(format!("bank {bank} out of range")));
        }
        if remap.rows() != self.geometry.rows_per_bank() {
            return Err(Error::Remap(format!(
                "bank {bank} remap covers {} rows, bank has {}",
                remap.rows(),
                self.geometry.rows_per_bank()
            )));
        }
        self.remaps[bank as usize] = remap;
        Ok(())
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn remap(&self, bank: u32) -> &RemapTable {
        &self.remaps[bank as usize]
    }

    pub fn ledger(&self) -> &HammerLedger {
        &self.ledger
    }

    /// Charge one activation of `agg` to its physical neighbors and flip
    /// every cell that crossed its threshold.
    pub fn on_activate(
        &mut self,
        agg: RowAddress,
        time: u64,
        data: &mut CellArray,
    ) -> Result<Vec<FlipEvent>> {
        self.geometry.check(agg)?;
        let last = &mut self.last_activate[agg.bank as usize];
        if let Some(prev) = *last {
            if time < prev {
                return Err(Error::Usage(format!(
                    "activation time {time} precedes previous activation {prev} in bank {}",
                    agg.bank
                )));
            }
        }
        *last = Some(time);

        let neighbors = self.remaps[agg.bank as usize].physical_neighbors(agg.row);
        let mut flips = Vec::new();
        if let Some(row) = neighbors.left {
            // The aggressor sits on this victim's right.
            self.charge(agg, RowAddress::new(agg.bank, row), false, time, data, &mut flips);
        }
        if let Some(row) = neighbors.right {
            self.charge(agg, RowAddress::new(agg.bank, row), true, time, data, &mut flips);
        }
        Ok(flips)
    }

    fn charge(
        &mut self,
        agg: RowAddress,
        victim: RowAddress,
        from_left: bool,
        time: u64,
        data: &mut CellArray,
        flips: &mut Vec<FlipEvent>,
    ) {
        let exposure = self.ledger.get_mut(victim);
        if time < exposure.last_refresh {
            return;
        }
        if from_left {
            exposure.left += 1;
        } else {
            exposure.right += 1;
        }
        let exposure = *exposure;
        let (start, end) = self.row_cells[self.geometry.row_index(victim)];
        for i in start as usize..end as usize {
            let cell = &self.cells[i];
            if self.flipped[i] || cell.gating_exposure(&exposure) < cell.threshold {
                continue;
            }
            if !cell.can_flip(data.bit(victim, cell.bit)) {
                continue;
            }
            data.flip_bit(victim, cell.bit);
            self.flipped[i] = true;
            flips.push(FlipEvent {
                time,
                bank: victim.bank,
                row: victim.row,
                bit: cell.bit,
                direction: cell.flip_direction,
                aggressor_row: agg.row,
            });
        }
    }

    /// Restore a row's charge: zero its exposure and start a new window.
    /// Data already corrupted stays corrupted.
    pub fn on_refresh(&mut self, victim: RowAddress, time: u64) -> Result<()> {
        self.geometry.check(victim)?;
        *self.ledger.get_mut(victim) = RowExposure {
            left: 0,
            right: 0,
            last_refresh: time,
        };
        let (start, end) = self.row_cells[self.geometry.row_index(victim)];
        self.flipped[start as usize..end as usize].fill(false);
        Ok(())
    }
}
