//! Grid geometry for the periodic box T³ = [0,2π)³ and compact time supports.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform space-time sampling of [0,T] × T³.
///
/// Spatial fields are band-limited: every retained wavenumber k ∈ Z³ satisfies
/// |k_i| ≤ n/2 − 1 per axis (the asymmetric Nyquist plane is always dropped so
/// that real fields keep exact Hermitian symmetry).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Grid points per axis; power of two, ≥ 4.
    pub n: usize,
    /// Time samples on [0, t_end], endpoints included.
    pub n_time: usize,
    /// Time horizon T.
    pub t_end: f64,
}

impl GridSpec {
    pub fn new(n: usize, n_time: usize, t_end: f64) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "n_per_axis must be a power of two ≥ 4, got {n}"
            )));
        }
        if n_time < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_time must be ≥ 2, got {n_time}"
            )));
        }
        if !(t_end > 0.0) {
            return Err(Error::InvalidParameter(format!("t_end must be > 0, got {t_end}")));
        }
        Ok(Self { n, n_time, t_end })
    }

    /// Largest representable wavenumber per axis (Nyquist excluded).
    pub fn band(&self) -> i64 {
        self.n as i64 / 2 - 1
    }

    pub fn points(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Time step between consecutive samples.
    pub fn dt(&self) -> f64 {
        self.t_end / (self.n_time as f64 - 1.0)
    }

    pub fn time_at(&self, j: usize) -> f64 {
        self.dt() * j as f64
    }

    /// Maps a storage index along one axis to its signed wavenumber.
    #[inline]
    pub fn wavenumber(&self, idx: usize) -> i64 {
        let n = self.n as i64;
        let i = idx as i64;
        if i <= n / 2 - 1 {
            i
        } else {
            i - n
        }
    }

    /// Maps a signed wavenumber to its storage index, if it is inside the band.
    #[inline]
    pub fn index_of(&self, k: i64) -> Option<usize> {
        let b = self.band();
        if k.abs() > b {
            return None;
        }
        let n = self.n as i64;
        Some(if k >= 0 { k as usize } else { (k + n) as usize })
    }

    /// Validates that a constructed wavenumber fits the band.
    pub fn check_band(&self, k: [i64; 3]) -> Result<()> {
        let b = self.band();
        let m = k.iter().map(|c| c.abs()).max().unwrap();
        if m > b {
            Err(Error::NyquistOverflow { required: m, band: b })
        } else {
            Ok(())
        }
    }
}

/// Finite union of closed subintervals of [0, T], sorted and disjoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimeSupport {
    pub intervals: Vec<(f64, f64)>,
}

impl TimeSupport {
    pub fn empty() -> Self {
        Self { intervals: Vec::new() }
    }

    pub fn whole(t_end: f64) -> Self {
        Self { intervals: vec![(0.0, t_end)] }
    }

    /// Builds a support from per-sample activity flags, merging adjacent runs.
    pub fn from_flags(flags: &[bool], grid: &GridSpec) -> Self {
        let dt = grid.dt();
        let mut intervals = Vec::new();
        let mut start: Option<usize> = None;
        for (j, &on) in flags.iter().enumerate() {
            match (on, start) {
                (true, None) => start = Some(j),
                (false, Some(s)) => {
                    intervals.push((s as f64 * dt, (j - 1) as f64 * dt));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            intervals.push((s as f64 * dt, (flags.len() - 1) as f64 * dt));
        }
        Self { intervals }
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| t >= a && t <= b)
    }

    /// O_ε(S): every point within distance ε of S, clipped to [0, t_end].
    pub fn enlarge(&self, eps: f64, t_end: f64) -> Self {
        let widened: Vec<(f64, f64)> = self
            .intervals
            .iter()
            .map(|&(a, b)| ((a - eps).max(0.0), (b + eps).min(t_end)))
            .collect();
        Self::merge(widened)
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut all = self.intervals.clone();
        all.extend_from_slice(&other.intervals);
        Self::merge(all)
    }

    fn merge(mut intervals: Vec<(f64, f64)>) -> Self {
        intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (a, b) in intervals {
            match out.last_mut() {
                Some(last) if a <= last.1 + 1e-12 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        Self { intervals: out }
    }

    /// True when `self` ⊆ `other` up to a slack of `tol` at each edge.
    pub fn subset_of(&self, other: &Self, tol: f64) -> bool {
        self.intervals.iter().all(|&(a, b)| {
            other
                .intervals
                .iter()
                .any(|&(c, d)| a >= c - tol && b <= d + tol)
        })
    }

    /// Total length of the union.
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|&(a, b)| b - a).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(GridSpec::new(3, 4, 1.0).is_err());
        assert!(GridSpec::new(48, 4, 1.0).is_err());
        assert!(GridSpec::new(64, 1, 1.0).is_err());
        assert!(GridSpec::new(64, 4, 0.0).is_err());
    }

    #[test]
    fn wavenumber_roundtrip() {
        let g = GridSpec::new(8, 2, 1.0).unwrap();
        assert_eq!(g.band(), 3);
        for k in -3..=3 {
            let idx = g.index_of(k).unwrap();
            assert_eq!(g.wavenumber(idx), k);
        }
        assert!(g.index_of(4).is_none());
        assert!(g.index_of(-4).is_none());
    }

    #[test]
    fn support_merge_and_enlarge() {
        let s = TimeSupport { intervals: vec![(0.2, 0.3), (0.35, 0.5)] };
        let e = s.enlarge(0.05, 1.0);
        assert_eq!(e.intervals.len(), 1);
        assert!((e.intervals[0].0 - 0.15).abs() < 1e-12);
        assert!((e.intervals[0].1 - 0.55).abs() < 1e-12);
        assert!(s.subset_of(&e, 0.0));
        assert!(!e.subset_of(&s, 0.0));
    }

    #[test]
    fn support_from_flags() {
        let g = GridSpec::new(4, 9, 1.0).unwrap();
        let flags = [false, true, true, false, false, true, false, false, false];
        let s = TimeSupport::from_flags(&flags, &g);
        assert_eq!(s.intervals.len(), 2);
        assert!(s.contains(0.125 * 1.0));
        assert!(!s.contains(0.5));
    }
}
