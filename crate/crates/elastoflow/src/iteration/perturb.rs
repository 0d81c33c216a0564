//! Perturbation assembly.
//!
//! Principal parts  w^p = Σ_Λ a_ξ φ_ξφ_{ξ₁} ξ,  e^{i,p} = Σ_{Λ_i} a_ξ φ_ξφ_{ξ₁} ξ₂;
//! incompressibility correctors w^c, e^{i,c} chosen so that
//!   w^p + w^c = (N²λ²)⁻¹ curl curl Σ a_ξ φ_ξ Ψ_{ξ₁} ξ   (e-version with ξ₂),
//! an identity that holds to rounding in the shared truncated product algebra
//! and is re-assembled both ways and compared; temporal correctors
//!   w^t = −μ⁻¹ Σ_Λ P_H P_{≠0}(a_ξ²φ_ξ²φ_{ξ₁}²) ξ,  e^{i,t} analogous.

use super::amplitudes::{frame_list, AmplitudeSet, FrameClass};
use super::{StepOptions, StepReport};
use crate::blocks::{Block, BlockParams};
use crate::error::Result;
use crate::field::{shift_mul, sparse_convolve, Rank, SparseField, SpectralField};
use crate::geometry::DirectionFamily;
use crate::grid::GridSpec;
use crate::operators::{curl, divergence_vec, helmholtz, project_nonzero};
use crate::report::{Check, CheckKind};

pub struct PerturbationSet {
    pub w_p: super::FieldStore,
    pub w_c: super::FieldStore,
    pub w_t: super::FieldStore,
    pub e_p: [super::FieldStore; 3],
    pub e_c: [super::FieldStore; 3],
    pub e_t: [super::FieldStore; 3],
}

impl PerturbationSet {
    /// w(j) = w^p + w^c + w^t at one slice (zero when inactive).
    pub fn w_slice(&self, j: usize) -> Result<SpectralField> {
        let g = self.w_p.grid();
        let mut acc = SpectralField::zeros(g, Rank::Vector3);
        for s in [&self.w_p, &self.w_c, &self.w_t] {
            if let Some(f) = s.slice(j)? {
                acc = acc.add(&f);
            }
        }
        Ok(acc)
    }

    pub fn e_slice(&self, i: usize, j: usize) -> Result<SpectralField> {
        let g = self.w_p.grid();
        let mut acc = SpectralField::zeros(g, Rank::Vector3);
        for s in [&self.e_p[i], &self.e_c[i], &self.e_t[i]] {
            if let Some(f) = s.slice(j)? {
                acc = acc.add(&f);
            }
        }
        Ok(acc)
    }
}

/// Cross product of two sparse vector fields (entry-list convolution).
fn sparse_cross(a: &[SparseField; 3], b: &[SparseField; 3], grid: &GridSpec) -> [SparseField; 3] {
    [
        sub_sparse(&sparse_convolve(&a[1], &b[2], grid), &sparse_convolve(&a[2], &b[1], grid)),
        sub_sparse(&sparse_convolve(&a[2], &b[0], grid), &sparse_convolve(&a[0], &b[2], grid)),
        sub_sparse(&sparse_convolve(&a[0], &b[1], grid), &sparse_convolve(&a[1], &b[0], grid)),
    ]
}

fn sub_sparse(a: &SparseField, b: &SparseField) -> SparseField {
    let mut out = a.clone();
    out.extend(b.iter().map(|(k, v)| (*k, -v)));
    out
}

/// ∇ of a sparse scalar as a sparse vector.
fn sparse_grad(s: &SparseField) -> [SparseField; 3] {
    [
        crate::field::sparse_partial(s, 0),
        crate::field::sparse_partial(s, 1),
        crate::field::sparse_partial(s, 2),
    ]
}

/// d × (constant-vector scalar line): entries of curl(P·d) = ∇P × d.
fn sparse_curl_of_scalar_times(p: &SparseField, d: [f64; 3]) -> [SparseField; 3] {
    let g = sparse_grad(p);
    // (∇P × d)_c = ε_{cde} ∂_d P d_e
    let comp = |c: usize| -> SparseField {
        let (d1, e1, d2, e2) = match c {
            0 => (1, 2, 2, 1),
            1 => (2, 0, 0, 2),
            _ => (0, 1, 1, 0),
        };
        let mut out: SparseField =
            g[d1].iter().map(|(k, v)| (*k, v * d[e1])).collect();
        out.extend(g[d2].iter().map(|(k, v)| (*k, -v * d[e2])));
        out
    };
    [comp(0), comp(1), comp(2)]
}

#[allow(clippy::too_many_arguments)]
pub fn build_perturbations(
    amp: &AmplitudeSet,
    blocks: &[Block],
    family: &DirectionFamily,
    params: &BlockParams,
    grid: &GridSpec,
    opts: &StepOptions,
    level_q: u32,
    report: &mut StepReport,
    with_checks: bool,
) -> Result<PerturbationSet> {
    let frames = frame_list(family);
    let nt = grid.n_time;
    let lam_n2 = (params.lambda as f64 * params.n_lambda as f64).powi(2);

    let mk = |name: &str| super::init::make_store(opts, name, Rank::Vector3, *grid, level_q);
    let mut w_p = mk("w_p")?;
    let mut w_c = mk("w_c")?;
    let mut w_t = mk("w_t")?;
    let mut e_p = [mk("e1_p")?, mk("e2_p")?, mk("e3_p")?];
    let mut e_c = [mk("e1_c")?, mk("e2_c")?, mk("e3_c")?];
    let mut e_t = [mk("e1_t")?, mk("e2_t")?, mk("e3_t")?];

    let mut worst_potential = 0.0f64;
    let mut worst_div = 0.0f64;
    let mut worst_mean = 0.0f64;

    for j in 0..nt {
        if !amp.active(j) {
            continue;
        }
        let t = grid.time_at(j);

        let mut wp_j = SpectralField::zeros(*grid, Rank::Vector3);
        let mut wc_j = SpectralField::zeros(*grid, Rank::Vector3);
        let mut wt_raw = SpectralField::zeros(*grid, Rank::Vector3);
        let mut ep_j: Vec<SpectralField> =
            (0..3).map(|_| SpectralField::zeros(*grid, Rank::Vector3)).collect();
        let mut ec_j: Vec<SpectralField> =
            (0..3).map(|_| SpectralField::zeros(*grid, Rank::Vector3)).collect();
        let mut et_raw: Vec<SpectralField> =
            (0..3).map(|_| SpectralField::zeros(*grid, Rank::Vector3)).collect();
        // potentials Σ a φ Ψ d for the double-curl identity check
        let mut pot_w = SpectralField::zeros(*grid, Rank::Vector3);
        let mut pot_e: Vec<SpectralField> =
            (0..3).map(|_| SpectralField::zeros(*grid, Rank::Vector3)).collect();

        for (fi, (class, _)) in frames.iter().enumerate() {
            let a_spec = match amp.a_spectral(fi, j) {
                Some(s) => s,
                None => continue,
            };
            let blk = &blocks[fi];
            // oscillation direction of the flow: ξ for w, ξ₂ for e
            let dir_w = blk.xi;
            let pair = blk.pair_entries(grid, t, 0);
            let u = shift_mul(&a_spec, &pair);

            wp_j = wp_j.add(&u.times_const_vector(dir_w));
            if let FrameClass::I(i) = class {
                ep_j[*i] = ep_j[*i].add(&u.times_const_vector(blk.xi2));
            }

            // corrector terms, shared by the w- and e-sides with their flow
            // directions
            let pot = blk.pair_potential_entries(grid, t);
            let grad_a: Vec<SpectralField> = (0..3).map(|c| a_spec.partial(c)).collect();

            let corrector = |dir: [f64; 3],
                             third_w_form: bool|
             -> Result<SpectralField> {
                // T1 = curl(∇a × (P dir)) = curl((∇a × dir)·P)
                let mut x1 = SpectralField::zeros(*grid, Rank::Vector3);
                for c in 0..3 {
                    let (d1, e1, d2, e2) = match c {
                        0 => (1, 2, 2, 1),
                        1 => (2, 0, 0, 2),
                        _ => (0, 1, 1, 0),
                    };
                    // (∇a × dir)_c = ∂_{d1}a·dir_{e1} − ∂_{d2}a·dir_{e2}
                    let mut comb = grad_a[d1].scale(dir[e1]);
                    comb.axpy(-dir[e2], &grad_a[d2]);
                    let prod = shift_mul(&comb, &pot);
                    x1.comp_mut(c).copy_from_slice(prod.comp(0));
                }
                let t1 = curl(&x1);

                // T2 = ∇a × curl(P dir)
                let y = sparse_curl_of_scalar_times(&pot, dir);
                let mut t2 = SpectralField::zeros(*grid, Rank::Vector3);
                for c in 0..3 {
                    let (d1, e1, d2, e2) = match c {
                        0 => (1, 2, 2, 1),
                        1 => (2, 0, 0, 2),
                        _ => (0, 1, 1, 0),
                    };
                    let p1 = shift_mul(&grad_a[d1], &y[e1]);
                    let p2 = shift_mul(&grad_a[d2], &y[e2]);
                    let diff = p1.sub(&p2);
                    t2.comp_mut(c).copy_from_slice(diff.comp(0));
                }

                // third term
                let t3 = if third_w_form {
                    // a ∇φ_ξ × curl(Ψ_{ξ₁} ξ)
                    let gphi = sparse_grad(&blk.phi_entries(grid, t, 0));
                    let ycurl = sparse_curl_of_scalar_times(&blk.psi_entries(grid), blk.xi);
                    let cross = sparse_cross(&gphi, &ycurl, grid);
                    let mut t3 = SpectralField::zeros(*grid, Rank::Vector3);
                    for c in 0..3 {
                        let p = shift_mul(&a_spec, &cross[c]);
                        t3.comp_mut(c).copy_from_slice(p.comp(0));
                    }
                    t3
                } else {
                    // −a Δφ_ξ Ψ_{ξ₁} dir
                    let lap_phi: SparseField = blk
                        .phi_entries(grid, t, 0)
                        .iter()
                        .map(|(k, v)| {
                            let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
                            (*k, -v * k2)
                        })
                        .collect();
                    let prod = sparse_convolve(&lap_phi, &blk.psi_entries(grid), grid);
                    shift_mul(&a_spec, &prod).scale(-1.0).times_const_vector(dir)
                };

                Ok(t1.add(&t2).add(&t3).scale(1.0 / lam_n2))
            };

            wc_j = wc_j.add(&corrector(dir_w, true)?);
            if let FrameClass::I(i) = class {
                ec_j[*i] = ec_j[*i].add(&corrector(blk.xi2, false)?);
            }

            // temporal corrector accumulators: A_ξ · G_ξ
            let a_sq = amp.a_sq_spectral(fi, j).expect("A exists where a does");
            let g_entries = blk.pair_squared_entries(grid, t, 0);
            let ag = shift_mul(&a_sq, &g_entries);
            wt_raw = wt_raw.add(&ag.times_const_vector(dir_w));
            if let FrameClass::I(i) = class {
                et_raw[*i] = et_raw[*i].add(&ag.times_const_vector(blk.xi2));
            }

            if with_checks {
                // potential Q_ξ = a ⊙ trunc(φΨ)
                let q = shift_mul(&a_spec, &pot);
                pot_w = pot_w.add(&q.times_const_vector(dir_w));
                if let FrameClass::I(i) = class {
                    pot_e[*i] = pot_e[*i].add(&q.times_const_vector(blk.xi2));
                }
            }
        }

        let mu = params.mu;
        let wt_j = helmholtz(&project_nonzero(&wt_raw)).scale(-1.0 / mu);
        let et_j: Vec<SpectralField> = et_raw
            .iter()
            .map(|f| helmholtz(&project_nonzero(f)).scale(-1.0 / mu))
            .collect();

        if with_checks {
            // w^p + w^c must equal the double-curl of the potential
            let both = wp_j.add(&wc_j);
            let cc = curl(&curl(&pot_w)).scale(1.0 / lam_n2);
            let scale = both.max_coeff().max(1e-300);
            worst_potential = worst_potential.max(both.max_coeff_diff(&cc) / scale);
            for i in 0..3 {
                let both = ep_j[i].add(&ec_j[i]);
                let cc = curl(&curl(&pot_e[i])).scale(1.0 / lam_n2);
                let scale = both.max_coeff().max(1e-300);
                worst_potential = worst_potential.max(both.max_coeff_diff(&cc) / scale);
            }
            // structure: divergences and means
            let wall = wp_j.add(&wc_j).add(&wt_j);
            let dscale = wall.max_coeff().max(1e-300);
            worst_div = worst_div.max(divergence_vec(&wall).max_coeff() / dscale);
            for c in 0..3 {
                worst_mean = worst_mean.max(wall.mean(c).norm() / dscale);
            }
            worst_div = worst_div.max(divergence_vec(&wt_j).max_coeff() / dscale.max(1e-300));
            for i in 0..3 {
                let eall = ep_j[i].add(&ec_j[i]).add(&et_j[i]);
                let escale = eall.max_coeff().max(1e-300);
                worst_div = worst_div.max(divergence_vec(&eall).max_coeff() / escale);
                for c in 0..3 {
                    worst_mean = worst_mean.max(eall.mean(c).norm() / escale);
                }
            }
        }

        w_p.set_slice(j, wp_j)?;
        w_c.set_slice(j, wc_j)?;
        w_t.set_slice(j, wt_j)?;
        for i in 0..3 {
            e_p[i].set_slice(j, ep_j[i].clone())?;
            e_c[i].set_slice(j, ec_j[i].clone())?;
            e_t[i].set_slice(j, et_j[i].clone())?;
        }
    }

    if with_checks {
        report.push(Check::below(
            "double_curl_potential_identity",
            CheckKind::ExactIdentity,
            worst_potential,
            1e-10,
        ));
        report.push(Check::below(
            "perturbation_divergence",
            CheckKind::ExactIdentity,
            worst_div,
            1e-11,
        ));
        report.push(Check::below(
            "perturbation_mean",
            CheckKind::ExactIdentity,
            worst_mean,
            1e-12,
        ));
    }

    Ok(PerturbationSet { w_p, w_c, w_t, e_p, e_c, e_t })
}
