//! Points on the unit-circumference circle `[0, 1)` and the arc distance.

/// Reduce a real number to its circle representative in `[0, 1)`.
pub fn wrap(x: f64) -> f64 {
    let y = x - x.floor();
    // x.floor() can leave y == 1.0 when x is a tiny negative number.
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// Arc distance between two circle points; the diameter is 1/2.
pub fn dist(x: f64, y: f64) -> f64 {
    let mut d = (x - y).abs();
    if d >= 1.0 {
        d -= d.floor();
    }
    d.min(1.0 - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_reduces_to_unit_interval() {
        assert_eq!(wrap(0.25), 0.25);
        assert_eq!(wrap(1.75), 0.75);
        assert_eq!(wrap(-0.25), 0.75);
        assert_eq!(wrap(3.0), 0.0);
        assert_eq!(wrap(-1e-18), 0.0);
    }

    #[test]
    fn dist_handles_wraparound() {
        assert!((dist(0.99, 0.01) - 0.02).abs() < 1e-15);
        assert!((dist(0.1, 0.2) - 0.1).abs() < 1e-15);
        assert_eq!(dist(0.4, 0.4), 0.0);
        assert!((dist(0.0, 0.5) - 0.5).abs() < 1e-15);
    }
}
