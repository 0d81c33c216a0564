//! Amplitude fields.
//!
//! For each skew family Λ_i the modulation is
//!   ρ_i = 2δ ε_F⁻¹ χ(δ⁻¹|R_ℓ^i|),  a_ξ = ρ_i^{1/2} Φ_q γ_ξ(−R_ℓ^i/ρ_i),
//! and for the velocity family, with the Λ_i-mean feedback matrix
//!   R_F∘ = Σ_i Σ_{ξ∈Λ_i} ρ_i γ_ξ² (ξ⊗ξ − ξ₂⊗ξ₂)  (cutoff-free),
//!   ρ_v∘ = 2δ ε_v⁻¹ χ(δ⁻¹|R_ℓ^v + R_F∘|),
//!   a_ξ = (ρ_v∘/2)^{1/2} Φ_q γ_ξ(Id − (R_ℓ^v + R_F∘)/ρ_v∘).
//!
//! Keeping the γ-arguments cutoff-free makes the two cancellation identities
//! hold pointwise on every slice, including the ramp of Φ_q, with the
//! effective mean ρ̃ = Φ_q²ρ_v∘ on the right-hand side (the mollified stresses
//! vanish wherever Φ_q < 1, so the Φ² mismatch multiplies zero there).

use super::mollify::MollifiedState;
use super::StepReport;
use crate::blocks::{build_block, Block, BlockParams, ProfileSet};
use crate::error::{Error, Result};
use crate::field::{tensor_comp, GridData, Rank, SpectralField};
use crate::geometry::{DirectionFamily, Frame};
use crate::grid::{GridSpec, TimeSupport};
use crate::operators::time_weights;
use crate::report::{Check, CheckKind};
use crate::schedule::LevelParams;
use crate::time_field::TimeSampledField;

/// Which family a flattened frame index belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameClass {
    V,
    I(usize),
}

/// Canonical flattening: Λ_v first, then Λ₁, Λ₂, Λ₃.
pub fn frame_list(family: &DirectionFamily) -> Vec<(FrameClass, &Frame)> {
    let mut out: Vec<(FrameClass, &Frame)> =
        family.lambda_v.iter().map(|f| (FrameClass::V, f)).collect();
    for (i, fam) in family.lambda_i.iter().enumerate() {
        out.extend(fam.iter().map(|f| (FrameClass::I(i), f)));
    }
    out
}

pub fn build_level_blocks(
    family: &DirectionFamily,
    profiles: &ProfileSet,
    params: &BlockParams,
    grid: &GridSpec,
) -> Result<Vec<Block>> {
    frame_list(family)
        .into_iter()
        .map(|(_, f)| build_block(profiles, f, params, grid))
        .collect()
}

/// The smooth increasing cutoff: χ(z) = 1 on [0,1], z on [2,∞), quintic
/// monotone blend with matched value and two derivatives in between.
pub fn chi(z: f64) -> f64 {
    if z <= 1.0 {
        1.0
    } else if z >= 2.0 {
        z
    } else {
        let s = z - 1.0;
        1.0 + s * s * s * (5.0 - 5.0 * s + s * s * s)
    }
}

/// Temporal cutoff: 1 on the mollified-stress support, supported inside
/// O_ℓ of it, built as a mollified indicator of O_{ℓ/2}(support) at scale
/// max(ℓ/4, 2dt).
pub fn temporal_cutoff(stress_flags: &[bool], ell: f64, grid: &GridSpec) -> Result<Vec<f64>> {
    let dt = grid.dt();
    let nt = grid.n_time;
    let supp = TimeSupport::from_flags(stress_flags, grid);
    if supp.is_empty() {
        return Ok(vec![0.0; nt]);
    }
    let widened = supp.enlarge(ell / 2.0, grid.t_end);
    let scale = (ell / 4.0).max(2.0 * dt);
    let w = time_weights(scale, dt)?;
    let half = (w.len() as i64 - 1) / 2;
    let mut phi = vec![0.0f64; nt];
    for (j, out) in phi.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (mi, wm) in w.iter().enumerate() {
            let src = j as i64 + mi as i64 - half;
            if src < 0 || src >= nt as i64 {
                continue;
            }
            if widened.contains(grid.time_at(src as usize)) {
                acc += wm;
            }
        }
        *out = acc.clamp(0.0, 1.0);
        if *out > 1.0 - 1e-12 {
            *out = 1.0;
        }
        if *out < 1e-12 {
            *out = 0.0;
        }
    }
    // the cutoff must equal one on the stress support exactly
    for (j, &on) in stress_flags.iter().enumerate() {
        if on && phi[j] != 1.0 {
            return Err(Error::StateInvariant(format!(
                "temporal cutoff {} < 1 on the stress support at slice {j}",
                phi[j]
            )));
        }
    }
    Ok(phi)
}

pub struct AmplitudeSet {
    pub delta: f64,
    pub phi_q: Vec<f64>,
    /// a_ξ grid samples, [frame][slice]; None off the cutoff support.
    pub a: Vec<Vec<Option<GridData>>>,
    /// ρ̃ = Φ_q²ρ_v∘, the effective mean entering the symmetric cancellation.
    pub rho_tilde: TimeSampledField,
    /// sup over points/slices of the γ-argument distances (diagnostics).
    pub max_skew_arg: f64,
    pub max_sym_arg: f64,
}

impl AmplitudeSet {
    /// a_ξ as a spectral field (band-limited interpolant of the samples).
    pub fn a_spectral(&self, frame: usize, j: usize) -> Option<SpectralField> {
        self.a[frame][j].as_ref().map(|g| g.to_spectral())
    }

    /// A_ξ = a_ξ² (pointwise square of the samples).
    pub fn a_sq_spectral(&self, frame: usize, j: usize) -> Option<SpectralField> {
        self.a[frame][j].as_ref().map(|g| {
            let mut sq = g.clone();
            for v in sq.values.iter_mut() {
                *v *= *v;
            }
            sq.to_spectral()
        })
    }

    pub fn active(&self, j: usize) -> bool {
        self.phi_q[j] > 0.0
    }
}

struct GammaData {
    sym_base: Vec<f64>,
    sym_forms: Vec<Vec<f64>>,
    skew_base: [Vec<f64>; 3],
    skew_forms: [Vec<Vec<f64>>; 3],
    xi: Vec<[f64; 3]>,
    xi2: Vec<[f64; 3]>,
}

fn gamma_data(family: &DirectionFamily) -> GammaData {
    let frames = frame_list(family);
    GammaData {
        sym_base: family.gamma_sym.base_f64(),
        sym_forms: family.gamma_sym.forms_f64(),
        skew_base: [
            family.gamma_skew[0].base_f64(),
            family.gamma_skew[1].base_f64(),
            family.gamma_skew[2].base_f64(),
        ],
        skew_forms: [
            family.gamma_skew[0].forms_f64(),
            family.gamma_skew[1].forms_f64(),
            family.gamma_skew[2].forms_f64(),
        ],
        xi: frames.iter().map(|(_, f)| f.xi_f64()).collect(),
        xi2: frames.iter().map(|(_, f)| f.xi2_f64()).collect(),
    }
}

pub fn build_amplitudes(
    mol: &MollifiedState,
    family: &DirectionFamily,
    _blocks: &[Block],
    level: &LevelParams,
    grid: &GridSpec,
    report: &mut StepReport,
) -> Result<AmplitudeSet> {
    let nt = grid.n_time;
    let np = grid.points();
    let delta = level.delta;
    let eps_f = family.eps_f;
    let eps_v = family.eps_v;
    let gd = gamma_data(family);

    let phi_q = temporal_cutoff(&mol.stress_flags(), mol.ell, grid)?;

    let mut a: Vec<Vec<Option<GridData>>> = (0..24).map(|_| vec![None; nt]).collect();
    let mut rho_tilde = TimeSampledField::zeros(*grid, Rank::Scalar);
    let mut max_skew_arg = 0.0f64;
    let mut max_sym_arg = 0.0f64;

    for j in 0..nt {
        let phi = phi_q[j];
        if phi == 0.0 {
            continue;
        }
        // grid samples of the mollified stresses (zeros when inactive)
        let ril: Vec<GridData> = (0..3)
            .map(|i| {
                Ok(match mol.ril[i].slice(j)? {
                    Some(s) => s.to_grid(),
                    None => GridData::zeros(*grid, Rank::Tensor3x3),
                })
            })
            .collect::<Result<_>>()?;
        let rvl = match mol.rvl.slice(j)? {
            Some(s) => s.to_grid(),
            None => GridData::zeros(*grid, Rank::Tensor3x3),
        };

        let mut a_slice: Vec<Vec<f64>> = (0..24).map(|_| vec![0.0; np]).collect();
        let mut rho_t = vec![0.0; np];

        for idx in 0..np {
            // skew families
            let mut rf = [[0.0f64; 3]; 3]; // R_F∘ accumulator
            for i in 0..3 {
                let r = tensor_at(&ril[i], idx);
                let norm = frob(&r);
                let rho = 2.0 * delta / eps_f * chi(norm / delta);
                let ratio = norm / rho;
                max_skew_arg = max_skew_arg.max(ratio);
                if ratio > eps_f {
                    return Err(Error::GammaDomain { got: ratio, radius: eps_f });
                }
                // axial of −R/ρ
                let w = [-r[2][1] / rho, -r[0][2] / rho, -r[1][0] / rho];
                for m in 0..6 {
                    let fi = 6 + 6 * i + m;
                    let forms = &gd.skew_forms[i][m];
                    let g2 = gd.skew_base[i][m] + forms[0] * w[0] + forms[1] * w[1] + forms[2] * w[2];
                    if g2 <= 0.0 {
                        return Err(Error::GammaDomain { got: ratio, radius: eps_f });
                    }
                    let a2 = rho * g2;
                    a_slice[fi][idx] = (a2).sqrt() * phi;
                    // cutoff-free contribution to R_F∘
                    let (xi, xi2) = (gd.xi[fi], gd.xi2[fi]);
                    for b in 0..3 {
                        for c in 0..3 {
                            rf[b][c] += a2 * (xi[b] * xi[c] - xi2[b] * xi2[c]);
                        }
                    }
                }
            }
            // velocity family
            let rv = tensor_at(&rvl, idx);
            let mut x = [[0.0f64; 3]; 3];
            for b in 0..3 {
                for c in 0..3 {
                    x[b][c] = rv[b][c] + rf[b][c];
                }
            }
            let norm = frob(&x);
            let rho_v = 2.0 * delta / eps_v * chi(norm / delta);
            let ratio = norm / rho_v;
            max_sym_arg = max_sym_arg.max(ratio);
            if ratio > eps_v {
                return Err(Error::GammaDomain { got: ratio, radius: eps_v });
            }
            // Δ = (Id − X/ρ) − Id = −X/ρ, in vech order
            let d = [
                -x[0][0] / rho_v,
                -x[1][1] / rho_v,
                -x[2][2] / rho_v,
                -0.5 * (x[0][1] + x[1][0]) / rho_v,
                -0.5 * (x[0][2] + x[2][0]) / rho_v,
                -0.5 * (x[1][2] + x[2][1]) / rho_v,
            ];
            for m in 0..6 {
                let fm = &gd.sym_forms[m];
                let g2 = gd.sym_base[m]
                    + fm[0] * d[0]
                    + fm[1] * d[1]
                    + fm[2] * d[2]
                    + fm[3] * d[3]
                    + fm[4] * d[4]
                    + fm[5] * d[5];
                if g2 <= 0.0 {
                    return Err(Error::GammaDomain { got: ratio, radius: eps_v });
                }
                a_slice[m][idx] = (rho_v / 2.0 * g2).sqrt() * phi;
            }
            rho_t[idx] = phi * phi * rho_v;
        }

        for (fi, data) in a_slice.into_iter().enumerate() {
            a[fi][j] = Some(GridData { rank: Rank::Scalar, grid: *grid, values: data });
        }
        rho_tilde.set_slice(j, GridData { rank: Rank::Scalar, grid: *grid, values: rho_t }.to_spectral());
    }

    // cutoff regularity: ‖Φ‖_{C^k} against ℓ^{-k}
    for k in 1..=3u32 {
        let mut d: Vec<f64> = phi_q.clone();
        for _ in 0..k {
            d = fd_vec(&d, grid.dt());
        }
        let sup = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        report.push(Check::info(
            &format!("cutoff_c{k}_times_ell_pow"),
            sup * mol.ell.powi(k as i32),
        ));
    }
    report.push(Check::info("max_skew_gamma_arg", max_skew_arg));
    report.push(Check::info("max_sym_gamma_arg", max_sym_arg));

    // amplitude L² norms vs δ^{1/2}
    let mut sup_a_l2 = 0.0f64;
    for af in &a {
        for s in af.iter().flatten() {
            let l2 = (s.values.iter().map(|v| v * v).sum::<f64>() / np as f64).sqrt();
            sup_a_l2 = sup_a_l2.max(l2);
        }
    }
    report.push(Check::info("amplitude_l2_vs_sqrt_delta", sup_a_l2 / delta.sqrt()));

    Ok(AmplitudeSet { delta, phi_q, a, rho_tilde, max_skew_arg, max_sym_arg })
}

fn fd_vec(v: &[f64], dt: f64) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|j| {
            let jp = (j + 1).min(n - 1);
            let jm = j.saturating_sub(1);
            (v[jp] - v[jm]) / ((jp - jm) as f64 * dt)
        })
        .collect()
}

#[inline]
fn tensor_at(g: &GridData, idx: usize) -> [[f64; 3]; 3] {
    let p = g.grid.points();
    let mut out = [[0.0; 3]; 3];
    for b in 0..3 {
        for c in 0..3 {
            out[b][c] = g.values[tensor_comp(b, c) * p + idx];
        }
    }
    out
}

#[inline]
fn frob(m: &[[f64; 3]; 3]) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Verifies the two cancellation identities slice by slice:
///   Σ_{ξ∈Λ_i} A_ξ G_ξ T_ξ + R_ℓ^i = Σ_{ξ∈Λ_i} A_ξ P_{≠0}(G_ξ) T_ξ,
///   Σ_{ξ∈Λ_v} A_ξ G_ξ ξ⊗ξ + R_ℓ^v + R_F = ρ̃ Id + Σ_{ξ∈Λ_v} A_ξ P_{≠0}(G_ξ) ξ⊗ξ,
/// with A_ξ = a_ξ², G_ξ the canonical block square, R_F = Σ A_{ξ,i}(ξ⊗ξ−ξ₂⊗ξ₂).
pub fn check_cancellation(
    mol: &MollifiedState,
    amp: &AmplitudeSet,
    blocks: &[Block],
    family: &DirectionFamily,
    grid: &GridSpec,
    report: &mut StepReport,
) -> Result<()> {
    let frames = frame_list(family);
    let nt = grid.n_time;
    let mut worst_skew = 0.0f64;
    let mut worst_sym = 0.0f64;
    for j in 0..nt {
        if !amp.active(j) {
            continue;
        }
        let t = grid.time_at(j);
        // A_ξ spectra and G entries
        let a_sq: Vec<Option<SpectralField>> =
            (0..24).map(|fi| amp.a_sq_spectral(fi, j)).collect();

        // R_F field from the skew amplitudes
        let mut r_f = SpectralField::zeros(*grid, Rank::Tensor3x3);
        for (fi, (class, _)) in frames.iter().enumerate() {
            if let FrameClass::I(_) = class {
                if let Some(aq) = &a_sq[fi] {
                    let (xi, xi2) = (blocks[fi].xi, blocks[fi].xi2);
                    let mut m = [[0.0; 3]; 3];
                    for b in 0..3 {
                        for c in 0..3 {
                            m[b][c] = xi[b] * xi[c] - xi2[b] * xi2[c];
                        }
                    }
                    r_f = r_f.add(&aq.times_const_matrix(m));
                }
            }
        }

        // skew identities
        for i in 0..3 {
            let mut lhs = match mol.ril[i].slice(j)? {
                Some(s) => s,
                None => SpectralField::zeros(*grid, Rank::Tensor3x3),
            };
            let mut rhs = SpectralField::zeros(*grid, Rank::Tensor3x3);
            for (fi, (class, _)) in frames.iter().enumerate() {
                if *class != FrameClass::I(i) {
                    continue;
                }
                let aq = match &a_sq[fi] {
                    Some(s) => s,
                    None => continue,
                };
                let g_full = blocks[fi].pair_squared_entries(grid, t, 0);
                let g_nonzero: crate::field::SparseField =
                    g_full.iter().cloned().filter(|(k, _)| *k != [0, 0, 0]).collect();
                let (xi, xi2) = (blocks[fi].xi, blocks[fi].xi2);
                let mut tm = [[0.0; 3]; 3];
                for b in 0..3 {
                    for c in 0..3 {
                        tm[b][c] = xi2[b] * xi[c] - xi[b] * xi2[c];
                    }
                }
                lhs = lhs.add(&crate::field::shift_mul(aq, &g_full).times_const_matrix(tm));
                rhs = rhs.add(&crate::field::shift_mul(aq, &g_nonzero).times_const_matrix(tm));
            }
            let scale = lhs.max_coeff().max(rhs.max_coeff()).max(amp.delta);
            worst_skew = worst_skew.max(lhs.max_coeff_diff(&rhs) / scale);
        }

        // symmetric identity
        let mut lhs = match mol.rvl.slice(j)? {
            Some(s) => s,
            None => SpectralField::zeros(*grid, Rank::Tensor3x3),
        };
        lhs = lhs.add(&r_f);
        let mut rhs = SpectralField::zeros(*grid, Rank::Tensor3x3);
        // ρ̃ Id
        if let Some(rt) = amp.rho_tilde.slice(j) {
            let mut id = [[0.0; 3]; 3];
            for b in 0..3 {
                id[b][b] = 1.0;
            }
            rhs = rhs.add(&rt.times_const_matrix(id));
        }
        for (fi, (class, _)) in frames.iter().enumerate() {
            if *class != FrameClass::V {
                continue;
            }
            let aq = match &a_sq[fi] {
                Some(s) => s,
                None => continue,
            };
            let g_full = blocks[fi].pair_squared_entries(grid, t, 0);
            let g_nonzero: crate::field::SparseField =
                g_full.iter().cloned().filter(|(k, _)| *k != [0, 0, 0]).collect();
            let xi = blocks[fi].xi;
            let mut tm = [[0.0; 3]; 3];
            for b in 0..3 {
                for c in 0..3 {
                    tm[b][c] = xi[b] * xi[c];
                }
            }
            lhs = lhs.add(&crate::field::shift_mul(aq, &g_full).times_const_matrix(tm));
            rhs = rhs.add(&crate::field::shift_mul(aq, &g_nonzero).times_const_matrix(tm));
        }
        let scale = lhs.max_coeff().max(rhs.max_coeff()).max(amp.delta);
        worst_sym = worst_sym.max(lhs.max_coeff_diff(&rhs) / scale);
    }
    report.push(Check::below("cancellation_skew", CheckKind::ExactIdentity, worst_skew, 1e-9));
    report.push(Check::below("cancellation_sym", CheckKind::ExactIdentity, worst_sym, 1e-9));
    Ok(())
}
