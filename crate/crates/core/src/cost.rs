//! Saturating cost arithmetic with an explicit infinity.
//!
//! Instance tables only ever hold finite non-negative costs; the infinite
//! sentinel exists for the search phase, where it marks values whose subtree
//! is proven infeasible under the current bound.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

/// A non-negative cost. `u64::MAX` is reserved as the infinity sentinel.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Cost(u64);

impl Cost {
    pub const ZERO: Cost = Cost(0);
    pub const INF: Cost = Cost(u64::MAX);

    pub fn finite(value: u64) -> Cost {
        debug_assert!(value != u64::MAX, "u64::MAX is reserved for Cost::INF");
        Cost(value)
    }

    pub fn is_inf(self) -> bool {
        self.0 == u64::MAX
    }

    pub fn is_finite(self) -> bool {
        !self.is_inf()
    }

    /// The finite value, or `None` for infinity.
    pub fn value(self) -> Option<u64> {
        if self.is_inf() {
            None
        } else {
            Some(self.0)
        }
    }

    /// Saturating difference: infinity minus anything stays infinity,
    /// and finite results never underflow below zero.
    pub fn saturating_sub(self, rhs: Cost) -> Cost {
        if self.is_inf() {
            Cost::INF
        } else if rhs.is_inf() {
            Cost::ZERO
        } else {
            Cost(self.0 - self.0.min(rhs.0))
        }
    }
}

impl Add for Cost {
    type Output = Cost;

    fn add(self, rhs: Cost) -> Cost {
        if self.is_inf() || rhs.is_inf() {
            Cost::INF
        } else {
            // Saturates into the sentinel on (unrealistic) overflow.
            Cost(self.0.saturating_add(rhs.0))
        }
    }
}

impl AddAssign for Cost {
    fn add_assign(&mut self, rhs: Cost) {
        *self = *self + rhs;
    }
}

impl Sub for Cost {
    type Output = Cost;

    fn sub(self, rhs: Cost) -> Cost {
        self.saturating_sub(rhs)
    }
}

impl Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::ZERO, |acc, c| acc + c)
    }
}

impl From<u64> for Cost {
    fn from(value: u64) -> Cost {
        Cost::finite(value)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_inf() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Debug for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn addition_saturates_at_infinity() {
        assert_eq!(Cost::finite(3) + Cost::finite(5), Cost::finite(8));
        assert_eq!(Cost::INF + Cost::finite(5), Cost::INF);
        assert_eq!(Cost::finite(5) + Cost::INF, Cost::INF);
        assert_eq!(Cost::INF + Cost::INF, Cost::INF);
    }

    #[test]
    fn subtraction_keeps_infinity_and_never_underflows() {
        assert_eq!(Cost::INF - Cost::finite(100), Cost::INF);
        assert_eq!(Cost::finite(5) - Cost::finite(2), Cost::finite(3));
        assert_eq!(Cost::finite(2) - Cost::finite(5), Cost::ZERO);
    }

    #[test]
    fn ordering_places_infinity_last() {
        assert!(Cost::finite(u64::MAX - 1) < Cost::INF);
        assert!(Cost::ZERO < Cost::finite(1));
    }

    #[test]
    fn sum_of_costs() {
        let total: Cost = [1u64, 2, 3].into_iter().map(Cost::finite).sum();
        assert_eq!(total, Cost::finite(6));
        let with_inf: Cost = [Cost::finite(1), Cost::INF].into_iter().sum();
        assert!(with_inf.is_inf());
    }
}
