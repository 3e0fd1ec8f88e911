//! Hurst-index vectors and axis-aligned time boxes.
//!
//! A `HurstVector` stores the per-axis smoothness exponents in the order
//! the caller gave them plus a permutation into ascending order; the
//! exponent machinery works on the sorted view while covariance code uses
//! the stored order. A `Rect` is a nondegenerate axis-aligned box in the
//! time domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-axis Hurst exponents together with the ambient (spatial) dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstVector {
    h: Vec<f64>,
    ambient_dim: usize,
    sort_perm: Vec<usize>,
}

impl HurstVector {
    /// Validates raw exponents: every entry must lie strictly inside (0,1).
    pub fn new(h: Vec<f64>, ambient_dim: usize) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::invalid("h", "at least one axis is required"));
        }
        if ambient_dim == 0 {
            return Err(Error::invalid("ambient_dim", "must be at least 1"));
        }
        for (axis, &v) in h.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 || v >= 1.0 {
                return Err(Error::invalid(
                    "h",
                    format!("axis {axis}: {v} lies outside the open interval (0,1)"),
                ));
            }
        }
        let mut sort_perm: Vec<usize> = (0..h.len()).collect();
        // Stable sort keeps ties in stored order, so the permutation is deterministic.
        sort_perm.sort_by(|&i, &j| h[i].total_cmp(&h[j]));
        Ok(Self {
            h,
            ambient_dim,
            sort_perm,
        })
    }

    pub fn n_axes(&self) -> usize {
        self.h.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Exponent of one axis in stored order.
    pub fn axis(&self, l: usize) -> f64 {
        self.h[l]
    }

    pub fn raw(&self) -> &[f64] {
        &self.h
    }

    pub fn sort_perm(&self) -> &[usize] {
        &self.sort_perm
    }

    /// Exponents in ascending order.
    pub fn sorted(&self) -> Vec<f64> {
        self.sort_perm.iter().map(|&i| self.h[i]).collect()
    }

    pub fn min(&self) -> f64 {
        self.h[self.sort_perm[0]]
    }

    /// Σ 1/H_ℓ, the local-time existence threshold for the spatial dimension.
    pub fn inv_sum(&self) -> f64 {
        self.h.iter().map(|v| 1.0 / v).sum()
    }
}

/// Checks a time point against an axis count: finite, nonnegative coordinates.
pub fn check_point(p: &[f64], n_axes: usize) -> Result<()> {
    if p.len() != n_axes {
        return Err(Error::invalid(
            "point",
            format!("expected {n_axes} coordinates, got {}", p.len()),
        ));
    }
    for (axis, &v) in p.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::invalid(
                "point",
                format!("axis {axis}: coordinate {v} must be finite and nonnegative"),
            ));
        }
    }
    Ok(())
}

/// Closed axis-aligned box with nonempty interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Rect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::invalid("rect", "lower and upper must share a positive length"));
        }
        for axis in 0..lo.len() {
            if !lo[axis].is_finite() || !hi[axis].is_finite() || lo[axis] >= hi[axis] {
                return Err(Error::invalid(
                    "rect",
                    format!(
                        "axis {axis}: need lower < upper, got [{}, {}]",
                        lo[axis], hi[axis]
                    ),
                ));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Hypercube [corner, corner + r] in every axis.
    pub fn cube(corner: &[f64], r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::invalid("rect", "cube side must be positive"));
        }
        Self::new(corner.to_vec(), corner.iter().map(|&c| c + r).collect())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.side(a)).product()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| v >= l && v <= h)
    }

    /// True when the whole box sits in the open positive quadrant.
    pub fn strictly_positive(&self) -> bool {
        self.lo.iter().all(|&v| v > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_sorted_input_with_identity_permutation() {
        let h = HurstVector::new(vec![0.5, 0.5], 1).unwrap();
        assert_eq!(h.sort_perm(), &[0, 1]);
        assert_eq!(h.n_axes(), 2);
        assert_eq!(h.ambient_dim(), 1);
    }

    #[test]
    fn sorts_unsorted_input() {
        let h = HurstVector::new(vec![0.6, 0.4], 2).unwrap();
        assert_eq!(h.sorted(), vec![0.4, 0.6]);
        assert_eq!(h.sort_perm(), &[1, 0]);
        assert_eq!(h.min(), 0.4);
        assert_eq!(h.raw(), &[0.6, 0.4]);
    }

    #[test]
    fn rejects_out_of_range_axis() {
        let err = HurstVector::new(vec![1.0, 0.3], 1).unwrap_err();
        assert!(err.to_string().contains("axis 0"));
        assert!(HurstVector::new(vec![0.0], 1).is_err());
        assert!(HurstVector::new(vec![], 1).is_err());
        assert!(HurstVector::new(vec![0.5], 0).is_err());
    }

    #[test]
    fn inv_sum_matches_hand_value() {
        let h = HurstVector::new(vec![0.4, 0.6], 1).unwrap();
        assert!((h.inv_sum() - (2.5 + 1.0 / 0.6)).abs() < 1e-12);
    }

    #[test]
    fn rect_basics() {
        let r = Rect::new(vec![1.0, 1.0], vec![2.0, 3.0]).unwrap();
        assert_eq!(r.volume(), 2.0);
        assert!(r.contains(&[1.5, 2.0]));
        assert!(!r.contains(&[0.5, 2.0]));
        assert!(r.strictly_positive());
        assert!(Rect::new(vec![1.0], vec![1.0]).is_err());
        let c = Rect::cube(&[1.0, 2.0], 0.5).unwrap();
        assert_eq!(c.hi(), &[1.5, 2.5]);
    }
}
