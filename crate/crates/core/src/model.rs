//! System model: channel parameters, the battery recursion and the rate map.
//!
//! The transmitter battery holds at most `b_bar` units of energy (noise
//! variance is 1). At every channel use it is refilled to `b_bar` with
//! probability `p`, otherwise it keeps whatever was left after the previous
//! transmission. Rates are reported in bits per channel use.

use std::fmt;
use std::ops::{Add, Sub};

use crate::error::{Error, Result};
use crate::scalar::{half_log2_1p, Real};

/// Recharge probability and battery capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams<T> {
    p: T,
    b_bar: T,
}

impl<T: Real> ChannelParams<T> {
    /// Validates `0 < p <= 1` and finite `b_bar >= 0`.
    pub fn new(p: T, b_bar: T) -> Result<Self> {
        if !p.is_finite() || p <= T::zero() || p > T::one() {
            return Err(Error::domain(format!("recharge probability must lie in (0, 1], got {p}")));
        }
        if !b_bar.is_finite() || b_bar < T::zero() {
            return Err(Error::domain(format!(
                "battery capacity must be finite and nonnegative, got {b_bar}"
            )));
        }
        Ok(Self { p, b_bar })
    }

    #[inline]
    pub fn p(&self) -> T {
        self.p
    }

    #[inline]
    pub fn b_bar(&self) -> T {
        self.b_bar
    }

    /// Slack allowed on `spent <= level` before a step counts as a violation.
    #[inline]
    pub fn energy_slack(&self) -> T {
        T::lit(1e-12) * self.b_bar.max(T::one())
    }

    /// Probability that an epoch lasts at least `age` slots, times `p`:
    /// `p (1-p)^(age-1)`.
    pub fn age_weight(&self, age: usize) -> T {
        debug_assert!(age >= 1);
        if self.p >= T::one() {
            return if age == 1 { T::one() } else { T::zero() };
        }
        self.p * (T::from_count(age - 1) * (-self.p).ln_1p()).exp()
    }
}

/// Same as [`ChannelParams::new`].
pub fn validate_params<T: Real>(p: T, b_bar: T) -> Result<ChannelParams<T>> {
    ChannelParams::new(p, b_bar)
}

/// Battery level and the number of channel uses since the last recharge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState<T> {
    pub level: T,
    /// 1 on a recharge slot.
    pub age: usize,
}

impl<T: Real> BatteryState<T> {
    /// A freshly recharged battery.
    pub fn full(params: &ChannelParams<T>) -> Self {
        Self { level: params.b_bar(), age: 1 }
    }
}

/// Advances the battery by one channel use.
///
/// `recharge` refers to the arrival at the next slot: a recharge restores
/// `b_bar` whatever was spent, otherwise the level drops by `spent`.
pub fn battery_step<T: Real>(
    state: BatteryState<T>,
    spent: T,
    recharge: bool,
    params: &ChannelParams<T>,
) -> Result<BatteryState<T>> {
    if !spent.is_finite() || spent < T::zero() {
        return Err(Error::domain(format!("spent energy must be nonnegative, got {spent}")));
    }
    if spent > state.level + params.energy_slack() {
        return Err(Error::EnergyViolation { spent: spent.as_f64(), level: state.level.as_f64() });
    }
    if recharge {
        return Ok(BatteryState::full(params));
    }
    Ok(BatteryState { level: (state.level - spent).max(T::zero()), age: state.age + 1 })
}

/// Information rate in bits per channel use. May be negative only for the
/// unclamped analytic lower bounds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Bits<T>(pub T);

impl<T: Real> Bits<T> {
    #[inline]
    pub fn value(self) -> T {
        self.0
    }

    pub fn zero() -> Self {
        Bits(T::zero())
    }
}

impl<T: Real> Add for Bits<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Bits(self.0 + rhs.0)
    }
}

impl<T: Real> Sub for Bits<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Bits(self.0 - rhs.0)
    }
}

impl<T: Real> fmt::Display for Bits<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} bits", self.0)
    }
}

/// `r(P) = ½·log₂(1 + P)`.
pub fn rate<T: Real>(power: T) -> Result<Bits<T>> {
    if power.is_nan() || power < T::zero() {
        return Err(Error::domain(format!("power must be nonnegative, got {power}")));
    }
    Ok(Bits(half_log2_1p(power)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(p: f64, b: f64) -> ChannelParams<f64> {
        ChannelParams::new(p, b).unwrap()
    }

    #[test]
    fn validation() {
        assert!(validate_params(0.5, 2.0).is_ok());
        assert!(matches!(validate_params(0.0, 2.0), Err(Error::Domain(_))));
        assert!(validate_params(1.0, 0.0).is_ok());
        assert!(validate_params(1.2, 1.0).is_err());
        assert!(validate_params(-0.1, 1.0).is_err());
        assert!(validate_params(0.5, -1.0).is_err());
        assert!(validate_params(f64::NAN, 1.0).is_err());
        assert!(validate_params(0.5, f64::INFINITY).is_err());
    }

    #[test]
    fn battery_step_examples() {
        let pr = params(0.5, 2.0);
        let s = battery_step(BatteryState { level: 2.0, age: 1 }, 1.5, false, &pr).unwrap();
        assert_eq!(s, BatteryState { level: 0.5, age: 2 });

        let s = battery_step(BatteryState { level: 0.5, age: 2 }, 0.5, true, &pr).unwrap();
        assert_eq!(s, BatteryState { level: 2.0, age: 1 });

        let e = battery_step(BatteryState { level: 1.0, age: 3 }, 1.2, false, &pr);
        assert!(matches!(e, Err(Error::EnergyViolation { .. })));
    }

    #[test]
    fn battery_slack_absorbs_rounding() {
        let pr = params(0.5, 2.0);
        let s = battery_step(BatteryState { level: 1.0, age: 3 }, 1.0 + 1e-13, false, &pr).unwrap();
        assert_eq!(s.level, 0.0);
        assert!(battery_step(BatteryState { level: 1.0, age: 3 }, 1.0 + 1e-9, false, &pr).is_err());
        assert!(battery_step(BatteryState { level: 1.0, age: 3 }, -0.1, false, &pr).is_err());
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate(0.0f64).unwrap().value(), 0.0);
        assert!((rate(1.0f64).unwrap().value() - 0.5).abs() < 1e-15);
        assert!((rate(3.0f64).unwrap().value() - 1.0).abs() < 1e-15);
        assert!(rate(-1.0f64).is_err());
        assert!((rate(3.0f32).unwrap().value() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn age_weight_is_geometric() {
        let pr = params(0.25, 1.0);
        assert!((pr.age_weight(1) - 0.25).abs() < 1e-15);
        assert!((pr.age_weight(3) - 0.25 * 0.75 * 0.75).abs() < 1e-15);
        let one = params(1.0, 1.0);
        assert_eq!(one.age_weight(1), 1.0);
        assert_eq!(one.age_weight(2), 0.0);
    }

    proptest! {
        #[test]
        fn battery_stays_in_range(
            p in 0.01f64..=1.0,
            b in 0.0f64..100.0,
            moves in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..200),
        ) {
            let pr = params(p, b);
            let mut s = BatteryState::full(&pr);
            for (frac, recharge) in moves {
                let spend = frac * s.level;
                s = battery_step(s, spend, recharge, &pr).unwrap();
                prop_assert!(s.level >= 0.0 && s.level <= b);
                prop_assert!(s.age >= 1);
                if recharge {
                    prop_assert_eq!(s, BatteryState { level: b, age: 1 });
                }
            }
        }

        #[test]
        fn rate_increasing_and_concave(a in 0.0f64..1e3, d in 1e-6f64..1e3) {
            let b = a + d;
            let ra = rate(a).unwrap().value();
            let rb = rate(b).unwrap().value();
            let rm = rate(0.5 * (a + b)).unwrap().value();
            prop_assert!(ra < rb);
            prop_assert!(rm >= 0.5 * (ra + rb) - 1e-15);
        }
    }
}
