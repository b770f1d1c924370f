use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::counter_hash;

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;

/// Point of the base space. For rotations this is the phase in units of
/// `2^-64`; for the shift and periodic drivers it is a two's-complement
/// orbit index. In both cases `sigma` is a wrapping addition, which makes
/// `sigma^n` followed by `sigma^-n` the identity bit for bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DriverState(pub u64);

impl DriverState {
    pub fn index(self) -> i64 {
        self.0 as i64
    }
}

/// Invertible ergodic base transformation.
#[derive(Clone, Debug, PartialEq)]
pub enum DrivingSystem {
    /// `omega -> omega + alpha mod 1`, held in 64-bit fixed point.
    IrrationalRotation { alpha: f64, step: u64 },
    /// Two-sided shift on `symbols` letters; the letter at orbit index `n`
    /// is a hash of `(seed, n)`.
    TwoSidedBernoulli { seed: u64, symbols: u32 },
    /// Periodic cycle of fiber labels in `[0, 1)`.
    Periodic { labels: Vec<f64> },
}

impl DrivingSystem {
    pub fn rotation(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rotation number {alpha} must lie in (0, 1)"
            )));
        }
        Ok(Self::IrrationalRotation {
            alpha,
            step: phase_to_fixed(alpha),
        })
    }

    pub fn bernoulli(seed: u64, symbols: u32) -> Result<Self> {
        if symbols < 2 {
            return Err(Error::InvalidArgument(
                "a Bernoulli shift needs at least two symbols".into(),
            ));
        }
        Ok(Self::TwoSidedBernoulli { seed, symbols })
    }

    pub fn periodic(labels: Vec<f64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("periodic cycle is empty".into()));
        }
        if let Some(bad) = labels.iter().find(|l| !(**l >= 0.0 && **l < 1.0)) {
            return Err(Error::InvalidArgument(format!("periodic label {bad} outside [0, 1)")));
        }
        Ok(Self::Periodic { labels })
    }

    /// Single-fiber driver, i.e. a deterministic system.
    pub fn deterministic() -> Self {
        Self::Periodic { labels: vec![0.0] }
    }

    /// State with the given phase (rotation) or orbit index (other variants,
    /// `origin` truncated to an integer).
    pub fn state(&self, origin: f64) -> DriverState {
        match self {
            Self::IrrationalRotation { .. } => DriverState(phase_to_fixed(origin.rem_euclid(1.0))),
            _ => DriverState(origin as i64 as u64),
        }
    }

    fn step(&self) -> u64 {
        match self {
            Self::IrrationalRotation { step, .. } => *step,
            _ => 1,
        }
    }

    /// `sigma^n(omega)` for any signed `n`.
    pub fn advance(&self, omega: DriverState, n: i64) -> DriverState {
        DriverState(omega.0.wrapping_add(self.step().wrapping_mul(n as u64)))
    }

    pub fn forward(&self, omega: DriverState) -> DriverState {
        self.advance(omega, 1)
    }

    pub fn backward(&self, omega: DriverState) -> DriverState {
        self.advance(omega, -1)
    }

    /// `[sigma^start omega, ..., sigma^(start+len-1) omega]`.
    pub fn orbit(&self, omega: DriverState, start: i64, len: usize) -> Vec<DriverState> {
        (0..len as i64).map(|j| self.advance(omega, start + j)).collect()
    }

    /// Letter of the shift at the current position, if this is a shift.
    pub fn symbol(&self, omega: DriverState) -> Option<u32> {
        match self {
            Self::TwoSidedBernoulli { seed, symbols } => Some((counter_hash(*seed, omega.0) % *symbols as u64) as u32),
            _ => None,
        }
    }

    /// Fiber label in `[0, 1)` that selects the map acting at `omega`.
    pub fn label(&self, omega: DriverState) -> f64 {
        match self {
            Self::IrrationalRotation { .. } => omega.0 as f64 / TWO_POW_64,
            Self::TwoSidedBernoulli { symbols, .. } => self.symbol(omega).unwrap_or(0) as f64 / *symbols as f64,
            Self::Periodic { labels } => labels[omega.index().rem_euclid(labels.len() as i64) as usize],
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::IrrationalRotation { alpha, .. } => format!("rotation(alpha={alpha})"),
            Self::TwoSidedBernoulli { seed, symbols } => {
                format!("bernoulli(seed={seed}, symbols={symbols})")
            }
            Self::Periodic { labels } => format!("periodic(len={})", labels.len()),
        }
    }
}

fn phase_to_fixed(x: f64) -> u64 {
    // The product is below 2^64 for x in [0, 1); the cast saturates at 1.
    let v = (x * TWO_POW_64).round();
    if v >= TWO_POW_64 {
        0
    } else {
        v as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rotation_example() {
        let alpha = 2f64.sqrt() - 1.0;
        let d = DrivingSystem::rotation(alpha).unwrap();
        let w = d.advance(d.state(0.0), 2);
        assert!((d.label(w) - (2.0 * alpha).rem_euclid(1.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_is_identity() {
        let drivers = [
            DrivingSystem::rotation(0.3).unwrap(),
            DrivingSystem::bernoulli(42, 3).unwrap(),
            DrivingSystem::periodic(vec![0.0, 0.25, 0.5]).unwrap(),
        ];
        for d in &drivers {
            let w = d.state(0.7);
            assert_eq!(d.advance(w, 0), w);
        }
    }

    #[test]
    fn bernoulli_round_trip_and_determinism() {
        let d = DrivingSystem::bernoulli(42, 2).unwrap();
        let w = d.state(0.0);
        assert_eq!(d.advance(d.advance(w, 5), -5), w);
        let again = DrivingSystem::bernoulli(42, 2).unwrap();
        let a: Vec<_> = d.orbit(w, -20, 41).into_iter().map(|s| d.symbol(s)).collect();
        let b: Vec<_> = again.orbit(w, -20, 41).into_iter().map(|s| again.symbol(s)).collect();
        assert_eq!(a, b);
        // Both letters occur.
        assert!(a.contains(&Some(0)) && a.contains(&Some(1)));
    }

    #[test]
    fn periodic_labels_cycle() {
        let d = DrivingSystem::periodic(vec![0.1, 0.2]).unwrap();
        let w = d.state(0.0);
        assert_eq!(d.label(d.advance(w, -1)), 0.2);
        assert_eq!(d.label(d.advance(w, 4)), 0.1);
    }

    #[test]
    fn constructor_errors() {
        assert!(DrivingSystem::rotation(1.5).is_err());
        assert!(DrivingSystem::bernoulli(1, 1).is_err());
        assert!(DrivingSystem::periodic(vec![]).is_err());
        assert!(DrivingSystem::periodic(vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn advance_inverts(alpha in 0.001f64..0.999, origin in 0.0f64..1.0, n in -1_000_000i64..1_000_000) {
            let d = DrivingSystem::rotation(alpha).unwrap();
            let w = d.state(origin);
            prop_assert_eq!(d.advance(d.advance(w, n), -n), w);
            prop_assert_eq!(d.backward(d.forward(w)), w);
        }

        #[test]
        fn shift_composes(seed in any::<u64>(), a in -1000i64..1000, b in -1000i64..1000) {
            let d = DrivingSystem::bernoulli(seed, 4).unwrap();
            let w = d.state(0.0);
            prop_assert_eq!(d.advance(d.advance(w, a), b), d.advance(w, a + b));
        }
    }
}
