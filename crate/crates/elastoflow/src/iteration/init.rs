//! Level-0 initialization: wraps smooth divergence-free data (u, G) into a
//! state of the approximate system by solving for the stresses directly,
//!   R₀^v = R(∂_t v₀ + (−Δ)^θ v₀) + v₀⊗v₀ − Σ F^i₀⊗F^i₀ + p₀ Id,
//!   R₀^i = R^F(∂_t F^i₀) + F^i₀⊗v₀ − v₀⊗F^i₀,
//!   p₀  = −⅓|v₀|² + ⅓Σ|F^i₀|²,
//! with the same 4th-order finite-difference ∂_t the verifier uses, so the
//! system holds to rounding.

use super::{FieldStore, IterationState, StepOptions};
use crate::error::{Error, Result};
use crate::field::{pad, pw, Rank, SpectralField};
use crate::operators::{divergence_vec, frac_laplacian, inv_div_skew, inv_div_sym};
use crate::time_field::TimeSampledField;

pub fn init_state(
    u: TimeSampledField,
    g: [TimeSampledField; 3],
    theta: f64,
    opts: &StepOptions,
) -> Result<IterationState> {
    let grid = u.grid;
    let nt = grid.n_time;
    let scale = u.sup_over_time(|s| s.max_coeff()).max(1.0);
    // hypotheses: div u = 0, div G^i = 0, mean(u) = 0, mean(G − Id) = 0
    for j in 0..nt {
        if let Some(s) = u.slice(j) {
            if divergence_vec(s).max_coeff() > 1e-11 * scale {
                return Err(Error::StateInvariant(format!("div u ≠ 0 at slice {j}")));
            }
            for c in 0..3 {
                if s.mean(c).norm() > 1e-12 * scale {
                    return Err(Error::StateInvariant("u must be mean-zero".into()));
                }
            }
        }
        for (i, gi) in g.iter().enumerate() {
            if let Some(s) = gi.slice(j) {
                if divergence_vec(s).max_coeff() > 1e-11 * scale {
                    return Err(Error::StateInvariant(format!("div G^{i} ≠ 0 at slice {j}")));
                }
                for c in 0..3 {
                    let target = if c == i { 1.0 } else { 0.0 };
                    if (s.mean(c) - target).norm() > 1e-12 * scale {
                        return Err(Error::StateInvariant(format!("mean(G^{i}) ≠ e_{i}")));
                    }
                }
            } else {
                return Err(Error::StateInvariant(format!(
                    "G^{i} must carry the identity part at every slice"
                )));
            }
        }
    }

    let dtv = u.time_derivative();
    let dtf: Vec<TimeSampledField> = g.iter().map(|gi| gi.time_derivative()).collect();

    let mut p = TimeSampledField::zeros(grid, Rank::Scalar);
    let mut rv = make_store(opts, "rv", Rank::Tensor3x3, grid, 0)?;
    let mut ri = [
        make_store(opts, "r1", Rank::Tensor3x3, grid, 0)?,
        make_store(opts, "r2", Rank::Tensor3x3, grid, 0)?,
        make_store(opts, "r3", Rank::Tensor3x3, grid, 0)?,
    ];

    for j in 0..nt {
        let vj = u.slice_or_zero(j);
        let fj: Vec<SpectralField> = g.iter().map(|gi| gi.slice_or_zero(j)).collect();
        let pv = pad(&vj);
        let pf: Vec<_> = fj.iter().map(pad).collect();

        // p₀ = −⅓|v|² + ⅓Σ|F^i|²  (all products in the shared truncated algebra)
        let mut pj = pw::dot(&pv, &pv).scale(-1.0 / 3.0);
        for pfi in &pf {
            pj = pj.add(&pw::dot(pfi, pfi).scale(1.0 / 3.0));
        }

        // R₀^v
        let visc = frac_laplacian(&vj, theta);
        let arg = dtv.slice_or_zero(j).add(&visc).mean_zero();
        let mut rvj = inv_div_sym(&arg)?;
        rvj = rvj.add(&pw::tensor_product(&pv, &pv));
        for pfi in &pf {
            rvj = rvj.sub(&pw::tensor_product(pfi, pfi));
        }
        // + p₀ Id
        let mut rvj = rvj;
        for a in 0..3 {
            let c = crate::field::tensor_comp(a, a);
            let add = pj.clone();
            for (dst, src) in rvj.comp_mut(c).iter_mut().zip(add.comp(0).iter()) {
                *dst += *src;
            }
        }
        rv.set_slice(j, rvj)?;

        // R₀^i
        for i in 0..3 {
            let dfi = dtf[i].slice_or_zero(j);
            let mut rij = inv_div_skew(&dfi)?;
            rij = rij.add(&pw::tensor_product(&pf[i], &pv));
            rij = rij.sub(&pw::tensor_product(&pv, &pf[i]));
            ri[i].set_slice(j, rij)?;
        }
        p.set_slice(j, pj);
    }

    let state = IterationState { q: 0, v: u, f: g, rv, ri, p };
    state.validate()?;
    Ok(state)
}

pub(super) fn make_store(
    opts: &StepOptions,
    name: &str,
    rank: Rank,
    grid: crate::grid::GridSpec,
    level: u32,
) -> Result<FieldStore> {
    match &opts.stress_dir {
        None => Ok(FieldStore::mem(TimeSampledField::zeros(grid, rank))),
        Some(dir) => FieldStore::new_disk(dir.join(format!("q{level}")), name, rank, grid),
    }
}
