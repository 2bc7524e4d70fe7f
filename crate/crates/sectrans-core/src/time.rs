//! Integer time base shared by every analysis.
//!
//! All model times are whole ticks. A [`Resolution`] says how many ticks make
//! up one user-facing time unit, so values such as `2.1` stay exact at the
//! default of 10 ticks per unit.

use serde::{Deserialize, Serialize};

/// A point in time or a duration, counted in ticks.
pub type Tick = i64;

/// Number of ticks per user-facing time unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Resolution {
    ticks_per_unit: u32,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution { ticks_per_unit: 10 }
    }
}

impl Resolution {
    pub fn new(ticks_per_unit: u32) -> Option<Self> {
        (ticks_per_unit > 0).then_some(Resolution { ticks_per_unit })
    }

    pub fn ticks_per_unit(self) -> u32 {
        self.ticks_per_unit
    }

    /// Converts `units` to ticks, or `None` when the value falls between ticks.
    pub fn to_ticks_exact(self, units: f64) -> Option<Tick> {
        let scaled = units * f64::from(self.ticks_per_unit);
        let rounded = libm::round(scaled);
        if libm::fabs(scaled - rounded) <= 1e-6 && rounded.abs() < 9.0e15 {
            Some(rounded as Tick)
        } else {
            None
        }
    }

    /// Converts `units` to ticks, rounding partial ticks up.
    pub fn to_ticks_ceil(self, units: f64) -> Tick {
        let scaled = units * f64::from(self.ticks_per_unit);
        let rounded = libm::round(scaled);
        if libm::fabs(scaled - rounded) <= 1e-9 {
            rounded as Tick
        } else {
            libm::ceil(scaled) as Tick
        }
    }

    pub fn to_units(self, t: Tick) -> f64 {
        t as f64 / f64::from(self.ticks_per_unit)
    }
}
