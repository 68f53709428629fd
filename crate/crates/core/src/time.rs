//! Simulation time as integer nanoseconds.
//!
//! All protocol quantities here (320 us backoff slots, 4 us per bit at
//! 250 kbps, 192 us turnaround) are exact in nanoseconds, so slot
//! arithmetic never drifts no matter how many slots a run accumulates.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

/// A point on the simulation clock, in nanoseconds since t=0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

/// A span of simulated time, in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimDuration(u64);

pub const NANOS_PER_SEC: f64 = 1e9;

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    /// Rounds to the nearest nanosecond. Negative inputs are invalid.
    pub fn from_secs_f64(secs: f64) -> Self {
        debug_assert!(secs >= 0.0 && secs.is_finite());
        SimTime((secs * NANOS_PER_SEC).round() as u64)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC
    }

    /// Next slot boundary at or after this instant (slot grid anchored at t=0).
    pub fn ceil_to_slot(self, slot: SimDuration) -> SimTime {
        let w = slot.0;
        assert!(w > 0, "slot width must be positive");
        SimTime(self.0.div_ceil(w) * w)
    }

    /// True if this instant lies on the slot grid.
    pub fn is_slot_aligned(self, slot: SimDuration) -> bool {
        slot.0 > 0 && self.0 % slot.0 == 0
    }

    pub fn saturating_sub(self, other: SimTime) -> SimDuration {
        SimDuration(self.0.saturating_sub(other.0))
    }
}

impl SimDuration {
    pub const ZERO: SimDuration = SimDuration(0);

    pub fn from_nanos(ns: u64) -> Self {
        SimDuration(ns)
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        debug_assert!(secs >= 0.0 && secs.is_finite());
        SimDuration((secs * NANOS_PER_SEC).round() as u64)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC
    }

    pub fn mul(self, k: u64) -> SimDuration {
        SimDuration(self.0 * k)
    }
}

impl Add<SimDuration> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign<SimDuration> for SimTime {
    fn add_assign(&mut self, rhs: SimDuration) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimDuration;
    fn sub(self, rhs: SimTime) -> SimDuration {
        debug_assert!(self.0 >= rhs.0, "negative duration");
        SimDuration(self.0 - rhs.0)
    }
}

impl Add for SimDuration {
    type Output = SimDuration;
    fn add(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0 + rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.as_secs_f64())
    }
}

impl fmt::Display for SimDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.as_secs_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SLOT: SimDuration = SimDuration(320_000); // 320 us

    #[test]
    fn slot_ceil_on_and_off_grid() {
        let t = SimTime::from_nanos(320_000);
        assert_eq!(t.ceil_to_slot(SLOT), t);
        let t2 = SimTime::from_nanos(320_001);
        assert_eq!(t2.ceil_to_slot(SLOT), SimTime::from_nanos(640_000));
        assert_eq!(SimTime::ZERO.ceil_to_slot(SLOT), SimTime::ZERO);
    }

    #[test]
    fn million_slots_accumulate_exactly() {
        // 10^6 slots of 320 us must land on exactly 320 s.
        let mut t = SimTime::ZERO;
        for _ in 0..1_000_000u64 {
            t += SLOT;
        }
        assert_eq!(t.as_nanos(), 320_000_000_000_000 / 1000);
        assert_eq!(t, SimTime::from_secs_f64(320.0));
        assert!(t.is_slot_aligned(SLOT));
    }

    #[test]
    fn microsecond_resolution_at_long_horizon() {
        // 10^4 s plus 1 us survives the round trip.
        let t = SimTime::from_secs_f64(10_000.000001);
        assert_eq!(t.as_nanos(), 10_000_000_001_000);
    }
}
