//! The one place where real-valued means become integer Likert labels.

/// Rule used to turn half-integer means into labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoundingMode {
    /// 1.5 -> 2, 2.5 -> 3.
    #[default]
    HalfUp,
    /// 1.5 -> 2, 2.5 -> 2.
    HalfEven,
}

pub const LABEL_ROUNDING: RoundingMode = RoundingMode::HalfUp;

pub fn round_with(x: f64, mode: RoundingMode) -> f64 {
    match mode {
        RoundingMode::HalfUp => (x + 0.5).floor(),
        RoundingMode::HalfEven => x.round_ties_even(),
    }
}

/// Rounds to the nearest integer, halves toward +inf.
pub fn round_half_up(x: f64) -> f64 {
    round_with(x, LABEL_ROUNDING)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves() {
        assert_eq!(round_half_up(1.5), 2.0);
        assert_eq!(round_half_up(2.5), 3.0);
        assert_eq!(round_half_up(2.4999), 2.0);
        assert_eq!(round_with(2.5, RoundingMode::HalfEven), 2.0);
        assert_eq!(round_with(1.5, RoundingMode::HalfEven), 2.0);
    }
}
