//! Fourier multiplier operators: projections, Helmholtz, inverse divergences,
//! fractional Laplacian, and Friedrichs mollification.
//!
//! All inverse operators annihilate the k = 0 mode; callers must pass
//! mean-zero inputs where the contract demands it.

use crate::bump;
use crate::error::{Error, Result};
use crate::field::{tensor_comp, Rank, SpectralField};
use crate::time_field::TimeSampledField;
use num_complex::Complex64;

/// Relative tolerance for the divergence-free precondition of `inv_div_skew`.
pub const DIV_FREE_TOL: f64 = 1e-10;

/// Relative tolerance for the mean-zero precondition of `inv_div_sym`.
pub const MEAN_ZERO_TOL: f64 = 1e-11;

/// P_{≠0}: removes the mean of every component.
pub fn project_nonzero(f: &SpectralField) -> SpectralField {
    f.mean_zero()
}

/// P_{≥k₀}: zeroes all modes with |k| < k₀ (Euclidean norm), including k = 0.
pub fn project_high(f: &SpectralField, k0: f64) -> SpectralField {
    f.multiplier(|k| {
        let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        if k2.sqrt() < k0 {
            0.0
        } else {
            1.0
        }
    })
}

/// (−Δ)^θ: multiplies mode k ≠ 0 by |k|^{2θ}; the mean passes through.
pub fn frac_laplacian(f: &SpectralField, theta: f64) -> SpectralField {
    debug_assert!((0.0..1.0).contains(&theta), "θ ∈ [0,1)");
    f.multiplier(|k| {
        let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        if k2 == 0.0 {
            1.0
        } else {
            k2.powf(theta)
        }
    })
}

/// Δ⁻¹ on nonzero modes; the mean is annihilated.
pub fn inv_laplacian(f: &SpectralField) -> SpectralField {
    f.multiplier(|k| {
        let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        if k2 == 0.0 {
            0.0
        } else {
            -1.0 / k2
        }
    })
}

/// |∇|⁻¹ P_{≠0}: multiplies by |k|⁻¹ on k ≠ 0, annihilates the mean.
pub fn inv_gradient_norm(f: &SpectralField) -> SpectralField {
    f.multiplier(|k| {
        let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        if k2 == 0.0 {
            0.0
        } else {
            1.0 / k2.sqrt()
        }
    })
}

/// div of a vector field.
pub fn divergence_vec(f: &SpectralField) -> SpectralField {
    debug_assert_eq!(f.rank, Rank::Vector3);
    let mut out = SpectralField::zeros(f.grid, Rank::Scalar);
    for j in 0..3 {
        out = out.add(&f.component_field(j).partial(j));
    }
    out
}

/// Row divergence of a tensor field: (div R)_i = ∂_j R_{ij}.
pub fn divergence_tensor(f: &SpectralField) -> SpectralField {
    debug_assert_eq!(f.rank, Rank::Tensor3x3);
    let mut comps = Vec::with_capacity(3);
    for i in 0..3 {
        let mut acc = SpectralField::zeros(f.grid, Rank::Scalar);
        for j in 0..3 {
            acc = acc.add(&f.component_field(tensor_comp(i, j)).partial(j));
        }
        comps.push(acc);
    }
    SpectralField::vector_from([&comps[0], &comps[1], &comps[2]])
}

/// ∇ of a scalar field.
pub fn gradient(f: &SpectralField) -> SpectralField {
    debug_assert_eq!(f.rank, Rank::Scalar);
    let c: Vec<SpectralField> = (0..3).map(|a| f.partial(a)).collect();
    SpectralField::vector_from([&c[0], &c[1], &c[2]])
}

/// curl of a vector field.
pub fn curl(f: &SpectralField) -> SpectralField {
    debug_assert_eq!(f.rank, Rank::Vector3);
    let d = |i: usize, j: usize| f.component_field(i).partial(j);
    let cx = d(2, 1).sub(&d(1, 2));
    let cy = d(0, 2).sub(&d(2, 0));
    let cz = d(1, 0).sub(&d(0, 1));
    SpectralField::vector_from([&cx, &cy, &cz])
}

/// Helmholtz–Leray projector P_H = Id − ∇Δ⁻¹div onto divergence-free fields.
/// The k = 0 part passes through unchanged.
pub fn helmholtz(f: &SpectralField) -> SpectralField {
    debug_assert_eq!(f.rank, Rank::Vector3);
    let grid = f.grid;
    let n = grid.n;
    let mut out = f.clone();
    let mut idx = 0;
    // gather per-mode vectors, project orthogonally to k
    let p = grid.points();
    for ix in 0..n {
        let kx = grid.wavenumber(ix) as f64;
        for iy in 0..n {
            let ky = grid.wavenumber(iy) as f64;
            for iz in 0..n {
                let kz = grid.wavenumber(iz) as f64;
                let k2 = kx * kx + ky * ky + kz * kz;
                if k2 > 0.0 {
                    let (v0, v1, v2) = (out.raw()[idx], out.raw()[p + idx], out.raw()[2 * p + idx]);
                    let kdotv = kx * v0 + ky * v1 + kz * v2;
                    let s = kdotv / k2;
                    out.raw_mut()[idx] = v0 - s * kx;
                    out.raw_mut()[p + idx] = v1 - s * ky;
                    out.raw_mut()[2 * p + idx] = v2 - s * kz;
                }
                idx += 1;
            }
        }
    }
    out
}

/// The symmetric inverse divergence R: mean-zero vectors → symmetric
/// trace-free tensors with div(Rv) = v,
/// (Rv)_{kl} = ∂_kΔ⁻¹v_l + ∂_lΔ⁻¹v_k − ½(δ_{kl} + ∂_k∂_lΔ⁻¹) div Δ⁻¹ v.
pub fn inv_div_sym(v: &SpectralField) -> Result<SpectralField> {
    debug_assert_eq!(v.rank, Rank::Vector3);
    let scale = v.max_coeff().max(1e-300);
    let mean = (0..3).map(|c| v.mean(c).norm()).fold(0.0, f64::max);
    if mean > MEAN_ZERO_TOL * scale {
        return Err(Error::NotMeanZero(mean / scale));
    }
    let grid = v.grid;
    let n = grid.n;
    let p = grid.points();
    let mut out = SpectralField::zeros(grid, Rank::Tensor3x3);
    let mut idx = 0;
    for ix in 0..n {
        let kx = grid.wavenumber(ix) as f64;
        for iy in 0..n {
            let ky = grid.wavenumber(iy) as f64;
            for iz in 0..n {
                let kz = grid.wavenumber(iz) as f64;
                let kv = [kx, ky, kz];
                let k2 = kx * kx + ky * ky + kz * kz;
                if k2 > 0.0 {
                    let u = [v.raw()[idx], v.raw()[p + idx], v.raw()[2 * p + idx]];
                    // κ·u
                    let kdotu = kv[0] * u[0] + kv[1] * u[1] + kv[2] * u[2];
                    for a in 0..3 {
                        for b in 0..3 {
                            // −i(κ_a u_b + κ_b u_a)/|κ|² + ½(δ_{ab} + κ_aκ_b/|κ|²)·i(κ·u)/|κ|²
                            let mut val = Complex64::new(0.0, -1.0) * (kv[a] * u[b] + kv[b] * u[a]) / k2;
                            let delta = if a == b { 1.0 } else { 0.0 };
                            val += Complex64::new(0.0, 0.5) * (delta + kv[a] * kv[b] / k2) * kdotu / k2;
                            out.raw_mut()[tensor_comp(a, b) * p + idx] = val;
                        }
                    }
                }
                idx += 1;
            }
        }
    }
    Ok(out)
}

/// The skew inverse divergence R^F: divergence-free mean-zero vectors →
/// skew tensors with div(R^F f) = f, (R^F f)_{ij} = ε_{ijk}(−Δ)⁻¹(curl f)_k.
pub fn inv_div_skew(f: &SpectralField) -> Result<SpectralField> {
    debug_assert_eq!(f.rank, Rank::Vector3);
    let scale = f.max_coeff().max(1e-300);
    let div = divergence_vec(f);
    let drel = div.max_coeff() / scale;
    if drel > DIV_FREE_TOL {
        return Err(Error::NotDivergenceFree(drel));
    }
    let mean = (0..3).map(|c| f.mean(c).norm()).fold(0.0, f64::max);
    if mean > MEAN_ZERO_TOL * scale {
        return Err(Error::NotMeanZero(mean / scale));
    }
    let grid = f.grid;
    let n = grid.n;
    let p = grid.points();
    let mut out = SpectralField::zeros(grid, Rank::Tensor3x3);
    let eps = |i: usize, j: usize, k: usize| -> f64 {
        match (i, j, k) {
            (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
            (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
            _ => 0.0,
        }
    };
    let mut idx = 0;
    for ix in 0..n {
        let kx = grid.wavenumber(ix) as f64;
        for iy in 0..n {
            let ky = grid.wavenumber(iy) as f64;
            for iz in 0..n {
                let kz = grid.wavenumber(iz) as f64;
                let kv = [kx, ky, kz];
                let k2 = kx * kx + ky * ky + kz * kz;
                if k2 > 0.0 {
                    let u = [f.raw()[idx], f.raw()[p + idx], f.raw()[2 * p + idx]];
                    // curl f̂ = iκ × û
                    let i = Complex64::new(0.0, 1.0);
                    let c = [
                        i * (kv[1] * u[2] - kv[2] * u[1]),
                        i * (kv[2] * u[0] - kv[0] * u[2]),
                        i * (kv[0] * u[1] - kv[1] * u[0]),
                    ];
                    for a in 0..3 {
                        for b in 0..3 {
                            let mut val = Complex64::default();
                            for m in 0..3 {
                                let e = eps(a, b, m);
                                if e != 0.0 {
                                    val += e * c[m] / k2;
                                }
                            }
                            out.raw_mut()[tensor_comp(a, b) * p + idx] = val;
                        }
                    }
                }
                idx += 1;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Mollification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MollifyDomain {
    Space,
    Time,
    Both,
}

/// Spatial mollification: multiplier m(k) = ψ̃̂(ℓ|k|)/ψ̃̂(0) from the radial
/// bump, so the kernel has unit mass exactly after normalization.
pub fn mollify_space(f: &SpectralField, ell: f64) -> SpectralField {
    debug_assert!(ell > 0.0);
    let table = mollifier_table(f.grid.n, ell);
    f.multiplier(|k| table[(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as usize])
}

/// Multiplier table of the normalized radial mollifier over all |k|² the
/// storage can address (the Nyquist plane maps to −n/2 even though its
/// coefficients are zero). Cached: the underlying quadrature is expensive.
fn mollifier_table(n: usize, ell: f64) -> std::sync::Arc<Vec<f64>> {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (n, ell.to_bits());
    if let Some(t) = cache.lock().unwrap().get(&key) {
        return t.clone();
    }
    let mass = bump::radial_bump_ft(0.0);
    let half = (n / 2) as i64;
    let mut table = vec![0.0f64; (3 * half * half + 1) as usize];
    table[0] = 1.0;
    for (k2, v) in table.iter_mut().enumerate().skip(1) {
        *v = bump::radial_bump_ft(ell * (k2 as f64).sqrt()) / mass;
    }
    let arc = Arc::new(table);
    cache.lock().unwrap().insert(key, arc.clone());
    arc
}

/// Discrete time-convolution weights for the 1D mollifier at scale ℓ,
/// normalized to unit mass. Window half-width = ⌊ℓ/dt⌋ samples ≤ ℓ.
pub fn time_weights(ell: f64, dt: f64) -> Result<Vec<f64>> {
    if ell < 2.0 * dt {
        return Err(Error::UnresolvableScale { scale: ell, min: 2.0 * dt });
    }
    let half = (ell / dt).floor() as i64;
    let mut w: Vec<f64> = (-half..=half).map(|m| bump::bump(m as f64 * dt / ell)).collect();
    let sum: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= sum;
    }
    Ok(w)
}

/// Friedrichs mollification of a time-sampled field at scale ℓ.
///
/// Time convolution treats out-of-range samples as zero, which is exact for
/// fields compactly supported inside (ℓ, T − ℓ). The temporal support grows by
/// at most ℓ.
pub fn mollify(f: &TimeSampledField, ell: f64, domain: MollifyDomain) -> Result<TimeSampledField> {
    let spaced = match domain {
        MollifyDomain::Space | MollifyDomain::Both => f.map(|s| mollify_space(s, ell)),
        MollifyDomain::Time => f.clone(),
    };
    match domain {
        MollifyDomain::Space => Ok(spaced),
        MollifyDomain::Time | MollifyDomain::Both => {
            let w = time_weights(ell, f.grid.dt())?;
            let half = (w.len() as i64 - 1) / 2;
            let nt = f.n_time() as i64;
            let mut out = TimeSampledField::zeros(f.grid, f.rank);
            for j in 0..nt {
                let mut acc: Option<SpectralField> = None;
                for (m, wm) in w.iter().enumerate() {
                    let src = j + m as i64 - half;
                    if src < 0 || src >= nt {
                        continue;
                    }
                    if let Some(s) = spaced.slice(src as usize) {
                        match acc.as_mut() {
                            Some(a) => a.axpy(*wm, s),
                            None => acc = Some(s.scale(*wm)),
                        }
                    }
                }
                if let Some(a) = acc {
                    out.set_slice(j as usize, a);
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{PointwiseOp, pointwise};
    use crate::grid::GridSpec;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n, 2, 1.0).unwrap()
    }

    #[test]
    fn projections() {
        let g = grid(8);
        let c = SpectralField::from_fn(g, Rank::Scalar, |_, _| 2.5);
        assert!(project_nonzero(&c).max_coeff() < 1e-14);
        let s = SpectralField::from_fn(g, Rank::Scalar, |_, x| x[0].sin());
        assert!(project_high(&s, 4.0).max_coeff() < 1e-14);
        assert!(project_high(&s, 1.0).max_coeff_diff(&s) < 1e-14);
    }

    #[test]
    fn helmholtz_kills_gradients_keeps_curls() {
        let g = grid(16);
        let phi = SpectralField::random(g, Rank::Scalar, 5, 1.0, 11);
        let grad = gradient(&phi);
        assert!(helmholtz(&grad).max_coeff() < 1e-13 * grad.max_coeff().max(1.0));

        let a = SpectralField::random(g, Rank::Vector3, 5, 1.0, 12);
        let c = curl(&a);
        assert!(helmholtz(&c).max_coeff_diff(&c) < 1e-13 * c.max_coeff());
        // idempotence
        let v = SpectralField::random(g, Rank::Vector3, 5, 1.0, 13);
        let pv = helmholtz(&v);
        assert!(helmholtz(&pv).max_coeff_diff(&pv) < 1e-13 * pv.max_coeff());
        // div of projection vanishes
        assert!(divergence_vec(&pv).max_coeff() < 1e-12 * pv.max_coeff());
    }

    #[test]
    fn helmholtz_fixes_transverse_mode() {
        // sin(x₃)e₁ has k ⟂ e₁, so it is already divergence-free
        let g = grid(8);
        let v = SpectralField::from_fn(g, Rank::Vector3, |c, x| if c == 0 { x[2].sin() } else { 0.0 });
        assert!(divergence_vec(&v).max_coeff() < 1e-14);
        assert!(helmholtz(&v).max_coeff_diff(&v) < 1e-14);
    }

    #[test]
    fn inv_div_sym_symbolic_example() {
        // v = sin(x₃)e₁ → Rv = −cos(x₃)(e₁⊗e₃ + e₃⊗e₁)/... exact analytic oracle
        let g = grid(8);
        let v = SpectralField::from_fn(g, Rank::Vector3, |c, x| if c == 0 { x[2].sin() } else { 0.0 });
        let r = inv_div_sym(&v).unwrap();
        let expect = SpectralField::from_fn(g, Rank::Tensor3x3, |c, x| {
            if c == tensor_comp(0, 2) || c == tensor_comp(2, 0) {
                -x[2].cos()
            } else {
                0.0
            }
        });
        assert!(r.max_coeff_diff(&expect) < 1e-13);
        // div recovers v
        assert!(divergence_tensor(&r).max_coeff_diff(&v) < 1e-13);
        // zero maps to zero
        let z = SpectralField::zeros(g, Rank::Vector3);
        assert!(inv_div_sym(&z).unwrap().max_coeff() == 0.0);
    }

    #[test]
    fn inv_div_sym_random_fields() {
        let g = grid(16);
        for seed in 0..5 {
            let v = SpectralField::random(g, Rank::Vector3, 6, 1.0, seed).mean_zero();
            let r = inv_div_sym(&v).unwrap();
            let back = divergence_tensor(&r);
            let rel = back.sub(&v).l2_coeff_norm() / v.l2_coeff_norm();
            assert!(rel <= 1e-12, "rel = {rel}");
            assert!(r.symmetry_error() <= 1e-12 * r.to_grid().max_abs());
            assert!(r.trace_error() <= 1e-12 * r.to_grid().max_abs());
        }
    }

    #[test]
    fn inv_div_sym_rejects_nonzero_mean() {
        let g = grid(8);
        let v = SpectralField::from_fn(g, Rank::Vector3, |c, _| if c == 0 { 1.0 } else { 0.0 });
        assert!(matches!(inv_div_sym(&v), Err(Error::NotMeanZero(_))));
    }

    #[test]
    fn inv_div_skew_identities() {
        let g = grid(16);
        // f = sin(x₃)e₁ is divergence-free
        let f = SpectralField::from_fn(g, Rank::Vector3, |c, x| if c == 0 { x[2].sin() } else { 0.0 });
        let r = inv_div_skew(&f).unwrap();
        assert!(divergence_tensor(&r).max_coeff_diff(&f) < 1e-12);
        assert!(r.skew_error() < 1e-13 * r.to_grid().max_abs().max(1.0));

        // random div-free input via Helmholtz
        let v = helmholtz(&SpectralField::random(g, Rank::Vector3, 6, 1.0, 21).mean_zero());
        let rv = inv_div_skew(&v).unwrap();
        let rel = divergence_tensor(&rv).sub(&v).l2_coeff_norm() / v.l2_coeff_norm();
        assert!(rel <= 1e-12, "rel = {rel}");

        // rejects non-div-free input
        let bad = SpectralField::from_fn(g, Rank::Vector3, |c, x| if c == 0 { x[0].sin() } else { 0.0 });
        assert!(matches!(inv_div_skew(&bad), Err(Error::NotDivergenceFree(_))));
    }

    #[test]
    fn frac_laplacian_multipliers() {
        let g = grid(8);
        let s = SpectralField::from_fn(g, Rank::Scalar, |_, x| x[0].sin());
        // θ = 0: identity on mean-zero fields
        assert!(frac_laplacian(&s, 0.0).max_coeff_diff(&s) < 1e-14);
        // single mode k = e₁, θ = 1/2: scaling by |k| = 1
        assert!(frac_laplacian(&s, 0.5).max_coeff_diff(&s) < 1e-14);
        // θ = 3/4 on k = (2,0,0): scaling by (|k|²)^{3/4} = 2^{3/2}
        let s2 = SpectralField::from_fn(g, Rank::Scalar, |_, x| (2.0 * x[0]).sin());
        let got = frac_laplacian(&s2, 0.75);
        assert!(got.max_coeff_diff(&s2.scale(2.0f64.powf(1.5))) < 1e-13);
    }

    #[test]
    fn inv_gradient_norm_shells() {
        let g = grid(8);
        let s1 = SpectralField::from_fn(g, Rank::Scalar, |_, x| x[1].sin());
        assert!(inv_gradient_norm(&s1).max_coeff_diff(&s1) < 1e-14);
        let s2 = SpectralField::from_fn(g, Rank::Scalar, |_, x| (2.0 * x[1]).cos());
        assert!(inv_gradient_norm(&s2).max_coeff_diff(&s2.scale(0.5)) < 1e-14);
    }

    #[test]
    fn divergence_of_skew_tensor_divergence_vanishes() {
        // div(div A) = 0 exactly for skew A
        let g = grid(16);
        let a = SpectralField::random(g, Rank::Tensor3x3, 5, 1.0, 31);
        let skew = a.sub(&a.transpose()).scale(0.5);
        let dd = divergence_vec(&divergence_tensor(&skew));
        assert!(dd.max_coeff() < 1e-12 * skew.max_coeff());
    }

    #[test]
    fn mollifier_mass_and_constant() {
        let g = GridSpec::new(8, 17, 1.0).unwrap();
        let c = TimeSampledField::from_slices(g, Rank::Scalar, |_, _| {
            SpectralField::from_fn(g, Rank::Scalar, |_, _| 3.0)
        });
        let m = mollify(&c, 0.2, MollifyDomain::Both).unwrap();
        // unit mass ⇒ constants are fixed points (away from the time boundary)
        for j in 4..13 {
            let v = m.slice_or_zero(j).coeff(0, [0, 0, 0]).re;
            assert_abs_diff_eq!(v, 3.0, epsilon = 1e-12);
        }
        let w = time_weights(0.2, g.dt()).unwrap();
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mollify_rejects_small_time_scale() {
        let g = GridSpec::new(8, 5, 1.0).unwrap();
        let f = TimeSampledField::zeros(g, Rank::Scalar);
        assert!(mollify(&f, 0.1, MollifyDomain::Time).is_err());
    }

    #[test]
    fn mollify_support_grows_at_most_ell() {
        let g = GridSpec::new(8, 33, 1.0).unwrap();
        let f = TimeSampledField::from_slices(g, Rank::Scalar, |j, _| {
            let amp = if (14..=18).contains(&j) { 1.0 } else { 0.0 };
            SpectralField::from_fn(g, Rank::Scalar, |_, x| amp * x[0].sin())
        });
        let ell = 0.1;
        let m = mollify(&f, ell, MollifyDomain::Both).unwrap();
        let grown = f.support().enlarge(ell, g.t_end);
        assert!(m.support().subset_of(&grown, 1e-12));
    }

    #[test]
    fn mollification_error_scales_linearly_in_ell() {
        // ‖f − f_ℓ‖_{C⁰} ≤ C ℓ ‖f‖_{C¹} on smooth fields: halving ℓ must at
        // least halve the error (up to the next-order term).
        let g = GridSpec::new(32, 9, 1.0).unwrap();
        let f = TimeSampledField::from_slices(g, Rank::Scalar, |_, _| {
            SpectralField::random(g, Rank::Scalar, 3, 2.0, 5)
        });
        let c1 = f.slice_or_zero(4).norm_cn(1);
        let mut prev = f64::INFINITY;
        for &ell in &[0.4, 0.2, 0.1] {
            let m = mollify(&f, ell, MollifyDomain::Space).unwrap();
            let err = m.sub(&f).slice_or_zero(4).norm_lp(f64::INFINITY);
            assert!(err <= 2.0 * ell * c1, "ℓ = {ell}: err {err} vs bound {}", ell * c1);
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn antidiv_estimate_constant_is_stable() {
        // ‖R P_{≠0} u‖_p ≲ ‖|∇|⁻¹ P_{≠0} u‖_p with a stable constant
        let g = grid(16);
        for p in [1.5, 2.0, 4.0] {
            let mut ratios = Vec::new();
            for seed in 40..45 {
                let u = SpectralField::random(g, Rank::Vector3, 6, 0.7, seed).mean_zero();
                let lhs = inv_div_sym(&u).unwrap().norm_lp(p);
                let rhs = inv_gradient_norm(&u).norm_lp(p);
                ratios.push(lhs / rhs);
            }
            let max = ratios.iter().cloned().fold(0.0, f64::max);
            let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(max / min < 4.0, "p = {p}: ratios {ratios:?}");
        }
    }

    #[test]
    fn product_then_divergence_consistency() {
        // div(v ⊗ v) assembled two ways: product-then-div vs Leibniz terms
        let g = grid(16);
        let v = helmholtz(&SpectralField::random(g, Rank::Vector3, 4, 1.0, 55).mean_zero());
        let t = pointwise(PointwiseOp::TensorProduct, &v, &v).unwrap().field;
        let direct = divergence_tensor(&t);
        // Leibniz: ∂_j(v_i v_j) = v_j ∂_j v_i (+ v_i div v, zero here), with
        // every product taken in the same truncated algebra
        let mut comps = Vec::new();
        for i in 0..3 {
            let mut acc = SpectralField::zeros(g, Rank::Scalar);
            for j in 0..3 {
                let dv = v.component_field(i).partial(j);
                let prod = pointwise(PointwiseOp::Product, &v.component_field(j), &dv).unwrap().field;
                acc = acc.add(&prod);
            }
            comps.push(acc);
        }
        let leibniz = SpectralField::vector_from([&comps[0], &comps[1], &comps[2]]);
        let rel = direct.sub(&leibniz).max_coeff() / direct.max_coeff();
        assert!(rel < 1e-12, "rel = {rel}");
    }
}
