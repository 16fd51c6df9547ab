//! Staggered periodic refresh.
//!
//! Row `r` of every bank is refreshed at `r * W / rows + n * W` for
//! `n = 0, 1, ...`, where `W = t_refw / k`. These instants are generally not
//! whole nanoseconds, so the schedule runs on a tick clock with
//! `k * rows` ticks per nanosecond. On that clock refresh slot `s`
//! (row `s % rows`, epoch `s / rows`) lands exactly on tick `s * t_refw`.

use crate::error::{Error, Result};

use super::TimingParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefreshSchedule {
    t_refw: u64,
    multiplier: u64,
    rows: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefreshEvent {
    pub slot: u64,
    pub row: u32,
    pub epoch: u64,
    /// Exact time on the schedule's tick clock.
    pub ticks: u64,
}

impl RefreshSchedule {
    pub fn new(timing: &TimingParams, rows_per_bank: u32) -> Result<Self> {
        timing.validate()?;
        if rows_per_bank == 0 {
            return Err(Error::Timing("refresh schedule needs at least one row".into()));
        }
        (timing.refresh_multiplier_k as u64)
            .checked_mul(rows_per_bank as u64)
            .and_then(|s| s.checked_mul(timing.t_refw))
            .ok_or_else(|| Error::Timing("refresh tick scale overflows 64 bits".into()))?;
        Ok(RefreshSchedule {
            t_refw: timing.t_refw,
            multiplier: timing.refresh_multiplier_k as u64,
            rows: rows_per_bank,
        })
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn ticks_per_ns(&self) -> u64 {
        self.multiplier * self.rows as u64
    }

    /// Ticks between two consecutive refreshes of the same row.
    pub fn window_ticks(&self) -> u64 {
        self.t_refw * self.rows as u64
    }

    pub fn slot_ticks(&self, slot: u64) -> Option<u64> {
        slot.checked_mul(self.t_refw)
    }

    pub fn event(&self, slot: u64) -> Option<RefreshEvent> {
        Some(RefreshEvent {
            slot,
            row: (slot % self.rows as u64) as u32,
            epoch: slot / self.rows as u64,
            ticks: self.slot_ticks(slot)?,
        })
    }

    /// Refresh time of `row` in `epoch`, in ticks.
    pub fn time_of(&self, row: u32, epoch: u64) -> Option<u64> {
        epoch
            .checked_mul(self.rows as u64)?
            .checked_add(row as u64)
            .and_then(|s| self.slot_ticks(s))
    }

    pub fn ticks_to_ns(&self, ticks: u64) -> f64 {
        ticks as f64 / self.ticks_per_ns() as f64
    }

    /// All refresh events in time order; ends only when ticks overflow.
    pub fn events(&self) -> impl Iterator<Item = RefreshEvent> + '_ {
        (0u64..).map_while(|s| self.event(s))
    }
}

/// Schedule of a device with `rows_per_bank` rows under `timing`.
pub fn periodic_refresh_schedule(timing: &TimingParams, rows_per_bank: u32) -> Result<RefreshSchedule> {
    RefreshSchedule::new(timing, rows_per_bank)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MS: u64 = 1_000_000;

    fn timing(k: u32) -> TimingParams {
        TimingParams {
            t_rc: 50,
            t_refw: 64 * MS,
            refresh_multiplier_k: k,
        }
    }

    fn times_ns(s: &RefreshSchedule, row: u32, n: usize) -> Vec<u64> {
        let tpn = s.ticks_per_ns();
        s.events()
            .filter(|e| e.row == row)
            .take(n)
            .map(|e| {
                assert_eq!(e.ticks % tpn, 0);
                e.ticks / tpn
            })
            .collect()
    }

    #[test]
    fn baseline_schedule() {
        let s = periodic_refresh_schedule(&timing(1), 8).unwrap();
        assert_eq!(times_ns(&s, 0, 3), vec![0, 64 * MS, 128 * MS]);
        assert_eq!(times_ns(&s, 1, 2), vec![8 * MS, 72 * MS]);
    }

    #[test]
    fn doubled_rate_halves_gaps() {
        let s = periodic_refresh_schedule(&timing(2), 8).unwrap();
        assert_eq!(times_ns(&s, 0, 3), vec![0, 32 * MS, 64 * MS]);
        assert_eq!(times_ns(&s, 1, 2), vec![4 * MS, 36 * MS]);
    }

    #[test]
    fn single_row_refreshes_every_window() {
        let s = periodic_refresh_schedule(&timing(4), 1).unwrap();
        assert_eq!(times_ns(&s, 0, 3), vec![0, 16 * MS, 32 * MS]);
    }

    #[test]
    fn gaps_are_exact_even_when_not_whole_nanoseconds() {
        // 64 ms / 7 is not an integer number of nanoseconds.
        let s = periodic_refresh_schedule(&timing(7), 8).unwrap();
        for row in 0..8 {
            let a = s.time_of(row, 3).unwrap();
            let b = s.time_of(row, 4).unwrap();
            assert_eq!(b - a, s.window_ticks());
            // window_ticks / ticks_per_ns == t_refw / k exactly
            assert_eq!(s.window_ticks() * 7, 64 * MS * s.ticks_per_ns());
        }
        let mut prev = None;
        for e in s.events().take(100) {
            if let Some(p) = prev {
                assert!(e.ticks > p);
            }
            prev = Some(e.ticks);
        }
    }

    #[test]
    fn rejects_invalid_timing() {
        let mut t = timing(1);
        t.refresh_multiplier_k = 0;
        assert!(RefreshSchedule::new(&t, 8).is_err());
    }
}
