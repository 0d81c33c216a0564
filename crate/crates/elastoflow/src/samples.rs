//! Canonical initial data for runs and tests: smooth, divergence-free, with
//! compact temporal support inside (0, T).

use crate::bump::bump;
use crate::error::Result;
use crate::field::{Rank, SpectralField};
use crate::grid::GridSpec;
use crate::iteration::{init_state, IterationState, StepOptions};
use crate::operators::curl;
use crate::time_field::TimeSampledField;

/// Smooth temporal envelope supported on [t0, t1].
pub fn envelope(t: f64, t0: f64, t1: f64) -> f64 {
    let c = 0.5 * (t0 + t1);
    let w = 0.5 * (t1 - t0);
    bump((t - c) / w) / bump(0.0)
}

/// A fixed low-mode divergence-free vector field (curl of a two-mode
/// potential), unit-normalized in L².
fn low_mode_profile(grid: GridSpec, phase: f64) -> SpectralField {
    let a = SpectralField::from_fn(grid, Rank::Vector3, |c, x| match c {
        0 => (x[1] + phase).sin(),
        1 => (x[2] + 0.7 * phase).sin(),
        _ => (x[0] + 0.3 * phase).cos(),
    });
    let v = curl(&a);
    let n = v.norm_lp(2.0);
    v.scale(1.0 / n)
}

/// Builds (u, G) with u = amp_v·η(t)·curl-mode and G = Id + amp_f·η(t)·modes,
/// then wraps them into a level-0 state.
pub fn single_mode_state(
    grid: GridSpec,
    amp_v: f64,
    amp_f: f64,
    support: (f64, f64),
    theta: f64,
    opts: &StepOptions,
) -> Result<IterationState> {
    let (t0, t1) = support;
    let u = TimeSampledField::from_slices(grid, Rank::Vector3, |_, t| {
        let eta = envelope(t, t0, t1);
        if eta == 0.0 {
            SpectralField::zeros(grid, Rank::Vector3)
        } else {
            low_mode_profile(grid, 0.0).scale(amp_v * eta)
        }
    });
    let mut g = Vec::new();
    for i in 0..3 {
        let gi = TimeSampledField::from_slices(grid, Rank::Vector3, |_, t| {
            let eta = envelope(t, t0, t1);
            let mut f = SpectralField::zeros(grid, Rank::Vector3);
            let _ = f.set_coeff(i, [0, 0, 0], num_complex::Complex64::new(1.0, 0.0));
            if eta != 0.0 {
                f.axpy(amp_f * eta, &low_mode_profile(grid, 1.0 + i as f64));
            }
            f
        });
        g.push(gi);
    }
    init_state(
        u,
        g.try_into().map_err(|_| crate::error::Error::Format("g".into()))?,
        theta,
        opts,
    )
}

/// The trivial steady state u = 0, G = Id (zero stresses).
pub fn trivial_state(grid: GridSpec, theta: f64, opts: &StepOptions) -> Result<IterationState> {
    single_mode_state(grid, 0.0, 0.0, (0.4 * grid.t_end, 0.6 * grid.t_end), theta, opts)
}
