//! Time-sampled fields: one spectral slice per time sample, with compact
//! temporal support tracked explicitly. Absent slices are identically zero.

use crate::error::{Error, Result};
use crate::field::{Rank, SpectralField};
use crate::grid::{GridSpec, TimeSupport};

/// Threshold under which a slice counts as identically zero.
pub const SLICE_ZERO_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct TimeSampledField {
    pub rank: Rank,
    pub grid: GridSpec,
    slices: Vec<Option<SpectralField>>,
}

impl TimeSampledField {
    pub fn zeros(grid: GridSpec, rank: Rank) -> Self {
        Self { rank, grid, slices: vec![None; grid.n_time] }
    }

    /// Builds from a per-sample constructor; slices with max coefficient below
    /// the zero tolerance are stored as empty.
    pub fn from_slices(grid: GridSpec, rank: Rank, f: impl Fn(usize, f64) -> SpectralField) -> Self {
        let mut out = Self::zeros(grid, rank);
        for j in 0..grid.n_time {
            let s = f(j, grid.time_at(j));
            out.set_slice(j, s);
        }
        out
    }

    pub fn n_time(&self) -> usize {
        self.grid.n_time
    }

    pub fn slice(&self, j: usize) -> Option<&SpectralField> {
        self.slices[j].as_ref()
    }

    /// The slice at j, materializing zeros when absent.
    pub fn slice_or_zero(&self, j: usize) -> SpectralField {
        match &self.slices[j] {
            Some(s) => s.clone(),
            None => SpectralField::zeros(self.grid, self.rank),
        }
    }

    pub fn set_slice(&mut self, j: usize, s: SpectralField) {
        debug_assert_eq!(s.rank, self.rank);
        debug_assert_eq!(s.grid, self.grid);
        if s.max_coeff() <= SLICE_ZERO_TOL {
            self.slices[j] = None;
        } else {
            self.slices[j] = Some(s);
        }
    }

    pub fn active(&self, j: usize) -> bool {
        self.slices[j].is_some()
    }

    /// Temporal support derived from slice activity.
    pub fn support(&self) -> TimeSupport {
        let flags: Vec<bool> = (0..self.n_time()).map(|j| self.active(j)).collect();
        TimeSupport::from_flags(&flags, &self.grid)
    }

    pub fn map(&self, f: impl Fn(&SpectralField) -> SpectralField) -> Self {
        let mut out = Self::zeros(self.grid, self.rank);
        for j in 0..self.n_time() {
            if let Some(s) = &self.slices[j] {
                let m = f(s);
                out.rank = m.rank;
                out.set_slice(j, m);
            }
        }
        out
    }

    pub fn try_map(&self, f: impl Fn(&SpectralField) -> Result<SpectralField>) -> Result<Self> {
        let mut out = Self::zeros(self.grid, self.rank);
        for j in 0..self.n_time() {
            if let Some(s) = &self.slices[j] {
                let m = f(s)?;
                out.rank = m.rank;
                out.set_slice(j, m);
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        let mut out = Self::zeros(self.grid, self.rank);
        for j in 0..self.n_time() {
            match (&self.slices[j], &other.slices[j]) {
                (Some(a), Some(b)) => out.set_slice(j, a.add(b)),
                (Some(a), None) => out.set_slice(j, a.clone()),
                (None, Some(b)) => out.set_slice(j, b.clone()),
                (None, None) => {}
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        out_sub(self, other)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|f| f.scale(s))
    }

    /// 4th-order finite-difference time derivative on the sample grid:
    /// central in the interior, one-sided closures at the endpoints.
    pub fn time_derivative(&self) -> Self {
        self.time_derivative_order(4)
    }

    /// Finite-difference ∂_t of the given order (2, 4 or 6), central stencils
    /// in the interior with matching one-sided closures at the ends.
    pub fn time_derivative_order(&self, order: usize) -> Self {
        let nt = self.n_time();
        let dt = self.grid.dt();
        let mut out = Self::zeros(self.grid, self.rank);
        let half = order / 2;
        for j in 0..nt {
            // choose stencil offsets: centered when possible, shifted at ends
            let lo = j.saturating_sub(half).min(nt - (order + 1));
            let offsets: Vec<usize> = (lo..lo + order + 1).collect();
            if offsets.iter().all(|&m| !self.active(m)) {
                continue;
            }
            let w = fd_weights(&offsets, j, dt);
            let mut acc = SpectralField::zeros(self.grid, self.rank);
            for (m, wm) in offsets.iter().zip(w.iter()) {
                if let Some(s) = &self.slices[*m] {
                    acc.axpy(*wm, s);
                }
            }
            out.set_slice(j, acc);
        }
        out
    }

    /// Sup over time samples of a per-slice norm (zero slices contribute 0).
    pub fn sup_over_time(&self, f: impl Fn(&SpectralField) -> f64) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.n_time() {
            if let Some(s) = &self.slices[j] {
                m = m.max(f(s));
            }
        }
        m
    }

    /// ‖f‖_{L^p} = sup_t ‖f(t)‖_{L^p_x} per the L^∞_t L^p_x convention.
    pub fn norm_lp(&self, p: f64) -> f64 {
        self.sup_over_time(|s| s.norm_lp(p))
    }

    pub fn norm_w1p(&self, p: f64) -> f64 {
        self.sup_over_time(|s| s.norm_w1p(p))
    }

    /// ‖f‖_{C^N_{x,t}} = Σ_{n+|ζ| ≤ N} sup |∂_t^n D^ζ f|.
    pub fn norm_cn(&self, nn: u32) -> f64 {
        let mut total = 0.0;
        let mut dt_field: TimeSampledField = self.clone();
        for n in 0..=nn {
            if n > 0 {
                dt_field = dt_field.time_derivative();
            }
            let spatial = nn - n;
            total += dt_field.sup_over_time(|s| s.norm_cn(spatial));
        }
        total
    }

    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.n_time() {
            let d = match (&self.slices[j], &other.slices[j]) {
                (Some(a), Some(b)) => a.max_coeff_diff(b),
                (Some(a), None) | (None, Some(a)) => a.max_coeff(),
                (None, None) => 0.0,
            };
            worst = worst.max(d);
        }
        worst
    }

    /// Checks the support invariant: every slice outside `support` vanishes.
    pub fn check_support(&self, support: &TimeSupport) -> Result<()> {
        for j in 0..self.n_time() {
            let t = self.grid.time_at(j);
            if self.active(j) && !support.contains(t) {
                return Err(Error::StateInvariant(format!(
                    "slice at t = {t} active outside declared support"
                )));
            }
        }
        Ok(())
    }
}

fn out_sub(a: &TimeSampledField, b: &TimeSampledField) -> TimeSampledField {
    let mut out = TimeSampledField::zeros(a.grid, a.rank);
    for j in 0..a.n_time() {
        match (&a.slices[j], &b.slices[j]) {
            (Some(x), Some(y)) => out.set_slice(j, x.sub(y)),
            (Some(x), None) => out.set_slice(j, x.clone()),
            (None, Some(y)) => out.set_slice(j, y.scale(-1.0)),
            (None, None) => {}
        }
    }
    out
}

/// Finite-difference weights for d/dt at sample `at` from samples `offsets`
/// (Fornberg's recursion, specialized to the first derivative).
pub fn fd_weights(offsets: &[usize], at: usize, dt: f64) -> Vec<f64> {
    let n = offsets.len();
    let x: Vec<f64> = offsets.iter().map(|&m| (m as f64 - at as f64) * dt).collect();
    // weights[d][j]: weight of sample j for derivative order d ∈ {0,1}
    let mut c = vec![[0.0f64; 2]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    for i in 1..n {
        let mut c2 = 1.0;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for d in (1..2).rev() {
                    c[i][d] = c1 * (d as f64 * c[i - 1][d - 1] - x[i - 1] * c[i - 1][d]) / c2;
                }
                c[i][0] = -c1 * x[i - 1] * c[i - 1][0] / c2;
            }
            for d in (1..2).rev() {
                c[j][d] = (x[i] * c[j][d] - d as f64 * c[j][d - 1]) / c3;
            }
            c[j][0] = x[i] * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|w| w[1]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Rank;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fd4_weights_interior() {
        // classic (1, −8, 0, 8, −1)/(12 dt)
        let w = fd_weights(&[0, 1, 2, 3, 4], 2, 1.0);
        let expect = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn fd4_derivative_of_polynomial_is_exact() {
        // FD-4 differentiates quartics exactly
        let grid = GridSpec::new(4, 9, 2.0).unwrap();
        let f = TimeSampledField::from_slices(grid, Rank::Scalar, |_, t| {
            SpectralField::from_fn(grid, Rank::Scalar, |_, _| t.powi(4) - 2.0 * t.powi(2) + 0.5)
        });
        let d = f.time_derivative();
        for j in 0..9 {
            let t = grid.time_at(j);
            let expect = 4.0 * t.powi(3) - 4.0 * t;
            let got = d.slice_or_zero(j).to_grid().comp(0)[0];
            assert_abs_diff_eq!(got, expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn fd4_converges_at_fourth_order() {
        let mut errs = Vec::new();
        for &nt in &[17usize, 33, 65] {
            let grid = GridSpec::new(4, nt, 1.0).unwrap();
            let f = TimeSampledField::from_slices(grid, Rank::Scalar, |_, t| {
                SpectralField::from_fn(grid, Rank::Scalar, |_, _| (5.0 * t).sin())
            });
            let d = f.time_derivative();
            let mut worst = 0.0f64;
            // interior samples only
            for j in 2..nt - 2 {
                let t = grid.time_at(j);
                let got = d.slice_or_zero(j).to_grid().comp(0)[0];
                worst = worst.max((got - 5.0 * (5.0 * t).cos()).abs());
            }
            errs.push(worst);
        }
        assert!(errs[1] < errs[0] / 12.0, "{errs:?}");
        assert!(errs[2] < errs[1] / 12.0, "{errs:?}");
    }

    #[test]
    fn support_tracking() {
        let grid = GridSpec::new(4, 9, 1.0).unwrap();
        let f = TimeSampledField::from_slices(grid, Rank::Scalar, |j, _| {
            let amp = if (3..=5).contains(&j) { 1.0 } else { 0.0 };
            SpectralField::from_fn(grid, Rank::Scalar, |_, x| amp * x[0].sin())
        });
        let s = f.support();
        assert_eq!(s.intervals.len(), 1);
        assert!(f.check_support(&s).is_ok());
        assert!((s.intervals[0].0 - 3.0 / 8.0).abs() < 1e-12);
    }
}
