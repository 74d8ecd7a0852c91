//! Discount threshold and admissible value-function growth.

use serde::Serialize;

/// `rho0(C, m)`: 0 for `m = 0`, `Cm + C^2 m / 2` for `0 < m < 2`,
/// `Cm + C^2 m (m-1) / 2` for `m >= 2`.
pub fn rho_zero(c: f64, m: f64) -> f64 {
    if m == 0.0 {
        0.0
    } else if m < 2.0 {
        c * m + 0.5 * c * c * m
    } else {
        c * m + 0.5 * c * c * m * (m - 1.0)
    }
}

/// Supremum of admissible growth exponents `k` for candidate value functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum GrowthBound {
    /// Both conditions are vacuous (`C = 0`).
    Unconstrained,
    /// Admissible iff `k < sup`.
    Below(f64),
}

impl GrowthBound {
    pub fn admits(&self, k: f64) -> bool {
        match self {
            GrowthBound::Unconstrained => true,
            GrowthBound::Below(s) => k < *s,
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            GrowthBound::Unconstrained => f64::INFINITY,
            GrowthBound::Below(s) => *s,
        }
    }
}

/// `k < rho/(C + C^2/2)` when that ratio is at most 2, otherwise the positive
/// root of `C^2 k^2 / 2 + (C - C^2/2) k - rho = 0`.
pub fn admissible_growth_k(c: f64, rho: f64) -> GrowthBound {
    if c == 0.0 {
        return GrowthBound::Unconstrained;
    }
    let ratio = rho / (c + 0.5 * c * c);
    if ratio <= 2.0 {
        GrowthBound::Below(ratio)
    } else {
        let a = 0.5 * c * c;
        let b = c - 0.5 * c * c;
        let disc = b * b + 4.0 * a * rho;
        // Stable form of (-b + sqrt(disc)) / (2a).
        let root = if b >= 0.0 {
            2.0 * rho / (b + disc.sqrt())
        } else {
            (-b + disc.sqrt()) / (2.0 * a)
        };
        GrowthBound::Below(root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_zero_branches() {
        assert_eq!(rho_zero(3.7, 0.0), 0.0);
        assert!((rho_zero(1.0, 1.0) - 1.5).abs() < 1e-15);
        assert!((rho_zero(2.0, 3.0) - 18.0).abs() < 1e-12);
    }

    #[test]
    fn growth_k_branches() {
        assert_eq!(admissible_growth_k(0.0, 1.0), GrowthBound::Unconstrained);
        match admissible_growth_k(1.0, 1.0) {
            GrowthBound::Below(s) => assert!((s - 2.0 / 3.0).abs() < 1e-15),
            _ => panic!(),
        }
        match admissible_growth_k(1.0, 10.0) {
            GrowthBound::Below(s) => {
                assert!((s - 4.0).abs() < 1e-12);
                assert!((s + 0.5 * s * (s - 1.0) - 10.0).abs() < 1e-10);
            }
            _ => panic!(),
        }
    }
}
