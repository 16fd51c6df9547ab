//! Attacker trace generators and the page-ownership overlay used to detect
//! cross-page corruption.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{Request, SimReport};
use crate::dram_model::{Geometry, RowAddress};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    Attacker,
    Victim,
    Kernel,
    #[default]
    Free,
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Owner::Attacker => "attacker",
            Owner::Victim => "victim",
            Owner::Kernel => "kernel",
            Owner::Free => "free",
        })
    }
}

/// One ownership entry as written in config files: an inclusive row range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OwnerRange {
    pub owner: Owner,
    pub bank: u32,
    pub rows: [u32; 2],
}

/// Owner of every row. Rows not covered by any range are free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageMap {
    geometry: Geometry,
    owners: Vec<Owner>,
}

impl PageMap {
    pub fn new(geometry: Geometry) -> Self {
        PageMap {
            geometry,
            owners: vec![Owner::Free; geometry.total_rows() as usize],
        }
    }

    /// Build from ranges; overlapping ranges are rejected.
    pub fn from_ranges(geometry: Geometry, ranges: &[OwnerRange]) -> Result<Self> {
        let mut claimed = vec![false; geometry.total_rows() as usize];
        let mut map = PageMap::new(geometry);
        for r in ranges {
            let [lo, hi] = r.rows;
            if lo > hi {
                return Err(Error::PageMap(format!("bank {} rows [{lo}, {hi}] reversed", r.bank)));
            }
            for row in lo..=hi {
                let addr = RowAddress::new(r.bank, row);
                geometry
                    .check(addr)
                    .map_err(|e| Error::PageMap(e.to_string()))?;
                let idx = geometry.row_index(addr);
                if std::mem::replace(&mut claimed[idx], true) {
                    return Err(Error::PageMap(format!("{addr} assigned more than once")));
                }
                map.owners[idx] = r.owner;
            }
        }
        Ok(map)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn set(&mut self, addr: RowAddress, owner: Owner) -> Result<()> {
        self.geometry.check(addr)?;
        let idx = self.geometry.row_index(addr);
        self.owners[idx] = owner;
        Ok(())
    }

    pub fn owner(&self, addr: RowAddress) -> Owner {
        self.owners[self.geometry.row_index(addr)]
    }

    pub fn rows_owned_by(&self, bank: u32, owner: Owner) -> impl Iterator<Item = u32> + '_ {
        (0..self.geometry.rows_per_bank()).filter(move |&r| self.owner(RowAddress::new(bank, r)) == owner)
    }

    fn require_attacker(&self, addr: RowAddress) -> Result<()> {
        self.geometry.check(addr)?;
        match self.owner(addr) {
            Owner::Attacker => Ok(()),
            other => Err(Error::Ownership {
                bank: addr.bank,
                row: addr.row,
                owner: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    SingleSided,
    DoubleSided,
    RandomBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessKind {
    #[default]
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    #[serde(default)]
    pub target_victim_row: u32,
    #[serde(default)]
    pub bank: u32,
    pub iterations: u64,
    /// Used by `random_baseline` only.
    #[serde(default)]
    pub seed: u64,
    /// Same-bank row alternated with the aggressor in `single_sided`; picked
    /// automatically when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conflict_row: Option<u32>,
    #[serde(default)]
    pub access: AccessKind,
    /// Hex byte pattern stored by write accesses.
    #[serde(default = "default_write_pattern")]
    pub write_pattern: String,
}

fn default_write_pattern() -> String {
    "00".into()
}

impl AttackSpec {
    pub fn new(kind: AttackKind, bank: u32, target_victim_row: u32, iterations: u64) -> Self {
        AttackSpec {
            kind,
            target_victim_row,
            bank,
            iterations,
            seed: 0,
            conflict_row: None,
            access: AccessKind::Read,
            write_pattern: default_write_pattern(),
        }
    }

    /// Rows the attack will touch, in emission order for one iteration
    /// (`random_baseline` returns the candidate pool instead).
    pub fn rows(&self, geometry: &Geometry, pages: &PageMap) -> Result<Vec<u32>> {
        if pages.geometry() != geometry {
            return Err(Error::PageMap("page map geometry differs from device".into()));
        }
        let victim = RowAddress::new(self.bank, self.target_victim_row);
        let check_victim = || -> Result<()> {
            geometry.check(victim)?;
            if pages.owner(victim) == Owner::Attacker {
                return Err(Error::Usage(format!("target victim {victim} is attacker-owned")));
            }
            Ok(())
        };
        match self.kind {
            AttackKind::SingleSided => {
                check_victim()?;
                let v = self.target_victim_row;
                if v == 0 {
                    return Err(Error::Usage(
                        "single_sided needs an aggressor at victim - 1; victim row is 0".into(),
                    ));
                }
                let aggressor = v - 1;
                pages.require_attacker(RowAddress::new(self.bank, aggressor))?;
                let conflict = match self.conflict_row {
                    Some(c) => {
                        if c == aggressor {
                            return Err(Error::Usage("conflict row equals aggressor".into()));
                        }
                        c
                    }
                    None => pages
                        .rows_owned_by(self.bank, Owner::Attacker)
                        .find(|&r| r + 1 < v || r > v + 1)
                        .ok_or_else(|| {
                            Error::Usage(format!(
                                "no attacker-owned conflict row in bank {} away from victim {v}",
                                self.bank
                            ))
                        })?,
                };
                pages.require_attacker(RowAddress::new(self.bank, conflict))?;
                Ok(vec![aggressor, conflict])
            }
            AttackKind::DoubleSided => {
                check_victim()?;
                let v = self.target_victim_row;
                if v < 1 || v + 2 > geometry.rows_per_bank() {
                    return Err(Error::Usage(format!(
                        "double_sided victim row {v} needs neighbors on both sides"
                    )));
                }
                pages.require_attacker(RowAddress::new(self.bank, v - 1))?;
                pages.require_attacker(RowAddress::new(self.bank, v + 1))?;
                Ok(vec![v - 1, v + 1])
            }
            AttackKind::RandomBaseline => {
                if self.bank >= geometry.banks() {
                    return Err(Error::Usage(format!("bank {} out of range", self.bank)));
                }
                let pool: Vec<u32> = pages.rows_owned_by(self.bank, Owner::Attacker).collect();
                if pool.is_empty() && self.iterations > 0 {
                    return Err(Error::Usage(format!(
                        "bank {} has no attacker-owned rows",
                        self.bank
                    )));
                }
                Ok(pool)
            }
        }
    }

    /// Lazily generated request stream.
    pub fn requests(
        &self,
        geometry: &Geometry,
        pages: &PageMap,
    ) -> Result<impl Iterator<Item = Request>> {
        let rows = self.rows(geometry, pages)?;
        let addrs = rows
            .iter()
            .map(|&r| geometry.row_base_address(RowAddress::new(self.bank, r)))
            .collect::<Result<Vec<u64>>>()?;
        let pattern = match self.access {
            AccessKind::Read => None,
            AccessKind::Write => Some(
                crate::controller::parse_hex_bytes(&self.write_pattern).ok_or_else(|| {
                    Error::Format(format!("bad write pattern {:?}", self.write_pattern))
                })?,
            ),
        };
        let make = move |a: u64| match &pattern {
            Some(p) => Request::write(a, p.clone()),
            None => Request::read(a),
        };
        let stream: Box<dyn Iterator<Item = u64>> = match self.kind {
            AttackKind::SingleSided | AttackKind::DoubleSided => {
                let n = self.iterations.saturating_mul(addrs.len() as u64);
                Box::new(addrs.into_iter().cycle().take(n as usize))
            }
            AttackKind::RandomBaseline => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let n = self.iterations;
                Box::new((0..n).map(move |_| addrs[rng.gen_range(0..addrs.len())]))
            }
        };
        Ok(stream.map(make))
    }
}

/// Materialize an attack as a trace in controller format.
pub fn generate_trace(spec: &AttackSpec, geometry: &Geometry, pages: &PageMap) -> Result<Vec<Request>> {
    Ok(spec.requests(geometry, pages)?.collect())
}

/// `n` back-to-back reads of one row: under closed-page semantics, one
/// activation per `t_rc`, the fastest a single bank can hammer.
pub fn max_rate_trace(
    geometry: &Geometry,
    aggressor: RowAddress,
    n: u64,
) -> Result<impl Iterator<Item = Request>> {
    let addr = geometry.row_base_address(aggressor)?;
    Ok((0..n).map(move |_| Request::read(addr)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OwnerCounts {
    pub attacker: u64,
    pub victim: u64,
    pub kernel: u64,
    pub free: u64,
}

impl OwnerCounts {
    fn bump(&mut self, owner: Owner) {
        match owner {
            Owner::Attacker => self.attacker += 1,
            Owner::Victim => self.victim += 1,
            Owner::Kernel => self.kernel += 1,
            Owner::Free => self.free += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreachReport {
    pub total_flips: u64,
    pub flips_by_owner: OwnerCounts,
    /// Flips in rows the attacker does not own.
    pub breaches: u64,
}

pub fn isolation_breach_report(report: &SimReport, pages: &PageMap) -> BreachReport {
    let mut out = BreachReport::default();
    for f in &report.flips {
        let owner = pages.owner(RowAddress::new(f.bank, f.row));
        out.total_flips += 1;
        out.flips_by_owner.bump(owner);
        if owner != Owner::Attacker {
            out.breaches += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{MitigationPolicy, Simulator, TimingParams};
    use crate::disturbance::{
        CoupledSide, DisturbanceProfile, FlipDirection, PatternGate, VulnerableCell,
    };

    fn geometry() -> Geometry {
        Geometry::new(1, 8, 64).unwrap()
    }

    fn pages() -> PageMap {
        PageMap::from_ranges(
            geometry(),
            &[
                OwnerRange { owner: Owner::Attacker, bank: 0, rows: [0, 2] },
                OwnerRange { owner: Owner::Victim, bank: 0, rows: [3, 3] },
                OwnerRange { owner: Owner::Attacker, bank: 0, rows: [4, 6] },
                OwnerRange { owner: Owner::Kernel, bank: 0, rows: [7, 7] },
            ],
        )
        .unwrap()
    }

    fn rows_of(trace: &[Request]) -> Vec<u32> {
        trace
            .iter()
            .map(|r| geometry().map_address(r.addr).unwrap().0.row)
            .collect()
    }

    #[test]
    fn zero_iterations_is_empty() {
        let spec = AttackSpec::new(AttackKind::DoubleSided, 0, 3, 0);
        assert!(generate_trace(&spec, &geometry(), &pages()).unwrap().is_empty());
    }

    #[test]
    fn double_sided_alternates_neighbors() {
        let spec = AttackSpec::new(AttackKind::DoubleSided, 0, 3, 2);
        let t = generate_trace(&spec, &geometry(), &pages()).unwrap();
        assert_eq!(rows_of(&t), vec![2, 4, 2, 4]);
        assert!(t.iter().all(|r| !r.is_write() && r.addr % 8 == 0));
    }

    #[test]
    fn single_sided_uses_conflict_row() {
        let mut spec = AttackSpec::new(AttackKind::SingleSided, 0, 3, 1);
        spec.conflict_row = Some(6);
        let t = generate_trace(&spec, &geometry(), &pages()).unwrap();
        assert_eq!(rows_of(&t), vec![2, 6]);
        spec.conflict_row = None;
        let t = generate_trace(&spec, &geometry(), &pages()).unwrap();
        assert_eq!(rows_of(&t), vec![2, 0]);
    }

    #[test]
    fn ownership_violations_name_the_row() {
        let mut spec = AttackSpec::new(AttackKind::SingleSided, 0, 3, 1);
        spec.conflict_row = Some(7);
        match generate_trace(&spec, &geometry(), &pages()) {
            Err(Error::Ownership { row: 7, owner, .. }) => assert_eq!(owner, "kernel"),
            other => panic!("{other:?}"),
        }
        let kernel_above = PageMap::from_ranges(
            geometry(),
            &[
                OwnerRange { owner: Owner::Attacker, bank: 0, rows: [5, 5] },
                OwnerRange { owner: Owner::Victim, bank: 0, rows: [6, 6] },
                OwnerRange { owner: Owner::Kernel, bank: 0, rows: [7, 7] },
            ],
        )
        .unwrap();
        let spec = AttackSpec::new(AttackKind::DoubleSided, 0, 6, 1);
        assert!(matches!(
            generate_trace(&spec, &geometry(), &kernel_above),
            Err(Error::Ownership { row: 7, .. })
        ));
        let spec = AttackSpec::new(AttackKind::DoubleSided, 0, 5, 1);
        assert!(matches!(generate_trace(&spec, &geometry(), &pages()), Err(Error::Usage(_))));
        let spec = AttackSpec::new(AttackKind::DoubleSided, 0, 7, 1);
        assert!(generate_trace(&spec, &geometry(), &pages()).is_err());
    }

    #[test]
    fn random_baseline_is_seeded_and_stays_home() {
        let mut spec = AttackSpec::new(AttackKind::RandomBaseline, 0, 0, 200);
        spec.seed = 11;
        let a = generate_trace(&spec, &geometry(), &pages()).unwrap();
        let b = generate_trace(&spec, &geometry(), &pages()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 200);
        let p = pages();
        assert!(rows_of(&a)
            .into_iter()
            .all(|r| p.owner(RowAddress::new(0, r)) == Owner::Attacker));
        spec.seed = 12;
        assert_ne!(a, generate_trace(&spec, &geometry(), &pages()).unwrap());
    }

    #[test]
    fn write_flag_switches_access() {
        let mut spec = AttackSpec::new(AttackKind::DoubleSided, 0, 3, 1);
        spec.access = AccessKind::Write;
        spec.write_pattern = "a5".into();
        let t = generate_trace(&spec, &geometry(), &pages()).unwrap();
        assert_eq!(t, vec![Request::write(16, vec![0xa5]), Request::write(32, vec![0xa5])]);
    }

    #[test]
    fn page_map_rejects_overlap_and_out_of_range() {
        let g = geometry();
        let r = |owner, lo, hi| OwnerRange { owner, bank: 0, rows: [lo, hi] };
        assert!(PageMap::from_ranges(g, &[r(Owner::Victim, 0, 3), r(Owner::Kernel, 3, 4)]).is_err());
        assert!(PageMap::from_ranges(g, &[r(Owner::Victim, 6, 8)]).is_err());
        assert!(PageMap::from_ranges(g, &[r(Owner::Victim, 4, 3)]).is_err());
        let m = PageMap::from_ranges(g, &[r(Owner::Victim, 3, 3)]).unwrap();
        assert_eq!(m.owner(RowAddress::new(0, 0)), Owner::Free);
        let parsed: Vec<OwnerRange> =
            serde_json::from_str(r#"[{"owner": "victim", "bank": 0, "rows": [3,3]}]"#).unwrap();
        assert_eq!(parsed, vec![r(Owner::Victim, 3, 3)]);
    }

    fn cell(row: u32, threshold: u64) -> VulnerableCell {
        VulnerableCell {
            bank: 0,
            victim_row: row,
            bit: 9,
            threshold,
            flip_direction: FlipDirection::ZeroToOne,
            pattern_gate: PatternGate::Always,
            coupled_side: CoupledSide::Either,
        }
    }

    #[test]
    fn breach_report_classifies_by_owner() {
        let g = geometry();
        let empty = Simulator::new(g, &TimingParams::default(), &MitigationPolicy::None, &DisturbanceProfile::empty())
            .unwrap()
            .finish()
            .unwrap();
        assert_eq!(isolation_breach_report(&empty, &pages()), BreachReport::default());

        // Victim row 3 and attacker spare row 5 both vulnerable.
        let profile = DisturbanceProfile::new(vec![cell(3, 10), cell(5, 10)]).unwrap();
        let spec = AttackSpec::new(AttackKind::DoubleSided, 0, 3, 10);
        let trace = generate_trace(&spec, &g, &pages()).unwrap();
        let report = Simulator::new(g, &TimingParams::default(), &MitigationPolicy::None, &profile)
            .unwrap()
            .with_page_map(pages())
            .unwrap()
            .run(&trace)
            .unwrap();
        let b = isolation_breach_report(&report, &pages());
        assert_eq!(b.total_flips, 2);
        assert_eq!(b.flips_by_owner.victim, 1);
        assert_eq!(b.flips_by_owner.attacker, 1);
        assert_eq!(b.breaches, 1);
        assert_eq!(report.flips_in_victim_pages, 1);
        let touched = rows_of(&trace);
        for f in report.flips.iter().filter(|f| f.row == 3) {
            assert!(!touched.contains(&f.row));
        }
    }
}
