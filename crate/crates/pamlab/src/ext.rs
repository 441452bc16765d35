//! Extended reals: finite values plus an explicit `+infinity` tag.
//!
//! Divergent quantities (recurrent-walk Green constants, supercritical
//! Lyapunov exponents) are represented by an explicit variant rather than
//! by floating-point overflow, so downstream code must handle them.

use std::fmt;

/// A nonnegative quantity that is either finite or diverges to `+infinity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    /// The finite value, or `None` when infinite.
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// Unwrap a finite value; panics on `Infinite`.
    ///
    /// Intended for contexts where finiteness was already checked.
    pub fn expect_finite(self, what: &str) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::Infinite => panic!("{what} is infinite"),
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinite => write!(f, "inf"),
        }
    }
}

impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        ExtReal::Finite(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_roundtrip() {
        assert_eq!(ExtReal::Finite(2.5).finite(), Some(2.5));
        assert_eq!(ExtReal::Infinite.finite(), None);
        assert_eq!(format!("{}", ExtReal::Infinite), "inf");
    }
}
