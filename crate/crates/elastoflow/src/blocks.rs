//! Intermittent oscillation blocks.
//!
//! The 1D base profile Ψ is the Fourier truncation of the standard bump on
//! (−1,1), with φ := −Ψ″ taken exactly in coefficients and normalized so that
//! ∮φ² = 1. Rescaled profiles at width ρ sample the bump's continuous
//! transform at ρ·j and renormalize on the kept harmonic range, so every
//! differential identity between φ and Ψ stays exact after truncation.
//!
//! A block attaches the profile pair to a rational frame (ξ, ξ₁, ξ₂):
//!   φ_ξ(t,x) = φ_r(λσN(ξ·x + μt)),  φ_{ξ₁}(x) = φ_σ(λσN ξ₁·x),
//! giving (T/λσ)³-periodic fields whose coefficients live on the λσ-sublattice
//! spanned by Nξ and Nξ₁. Velocity flows point along ξ, deformation flows
//! along ξ₂: W_ξ = φ_ξφ_{ξ₁}ξ, E_ξ = φ_ξφ_{ξ₁}ξ₂.

use crate::bump;
use crate::error::{Error, Result};
use crate::exact::{to_f64, Rat};
use crate::field::SpectralField;
use crate::geometry::Frame;
use crate::field::SparseField;
use crate::grid::GridSpec;
use num::ToPrimitive;
use num_complex::Complex64;

/// Band-limited base cutoff Ψ on T and φ = −Ψ″, scale 1.
#[derive(Debug, Clone)]
pub struct ProfileSet {
    pub bandwidth: usize,
    /// Ψ̂_j for j = 0..=B (two-sided coefficients, real and even).
    pub psi_hat: Vec<f64>,
    /// φ̂_j = j²Ψ̂_j.
    pub phi_hat: Vec<f64>,
}

/// One rescaled profile pair truncated to |j| ≤ j_max and renormalized so
/// that ∮φ_ρ² = 1 exactly on the kept range.
#[derive(Debug, Clone)]
pub struct Profile1D {
    pub scale: f64,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
}

pub fn make_profiles(bandwidth: usize) -> Result<ProfileSet> {
    if bandwidth < 8 {
        return Err(Error::InvalidParameter(format!("profile bandwidth {bandwidth} < 8")));
    }
    let p = rescale_raw(1.0, bandwidth);
    Ok(ProfileSet { bandwidth, psi_hat: p.psi, phi_hat: p.phi })
}

/// Coefficients at scale ρ: Ψ̂_ρ(j) ∝ ρ^{1/2}·Ψ̃(ρj), φ̂_ρ(j) = ρ²j²Ψ̂_ρ(j),
/// jointly scaled so Σ_j φ̂² = 1 (two-sided sum).
fn rescale_raw(rho: f64, j_max: usize) -> Profile1D {
    let mut psi = Vec::with_capacity(j_max + 1);
    let mut phi = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        let w = rho * j as f64;
        let base = rho.sqrt() * bump::bump_ft(w);
        psi.push(base);
        phi.push(rho * rho * (j * j) as f64 * base);
    }
    // ∮φ² = φ̂₀² + 2Σ_{j≥1} φ̂_j² (φ̂₀ = 0)
    let mass: f64 = 2.0 * phi.iter().skip(1).map(|c| c * c).sum::<f64>();
    let s = 1.0 / mass.sqrt();
    for v in psi.iter_mut() {
        *v *= s;
    }
    for v in phi.iter_mut() {
        *v *= s;
    }
    Profile1D { scale: rho, psi, phi }
}

impl ProfileSet {
    /// Rescaled pair at width ρ keeping |j| ≤ j_keep harmonics.
    pub fn rescale(&self, rho: f64, j_keep: usize) -> Profile1D {
        let nominal = (self.bandwidth as f64 / rho).floor() as usize;
        rescale_raw(rho, j_keep.min(nominal.max(1)))
    }

    /// Harmonics the un-truncated rescaling would carry.
    pub fn nominal_harmonics(&self, rho: f64) -> usize {
        ((self.bandwidth as f64 / rho).floor() as usize).max(1)
    }
}

impl Profile1D {
    pub fn j_max(&self) -> usize {
        self.phi.len() - 1
    }

    /// Samples Σ_j c_j (i j)^d e^{iju} on a uniform 1D grid (real field; the
    /// synthesis runs through a 1D inverse FFT).
    pub fn sample_deriv(coeffs: &[f64], d: u32, n: usize) -> Vec<f64> {
        let jm = coeffs.len() - 1;
        debug_assert!(jm < n / 2, "1D grid too small for the harmonic range");
        let mut spec = vec![Complex64::default(); n];
        for (j, c) in coeffs.iter().enumerate() {
            let mut v = Complex64::new(*c, 0.0);
            for _ in 0..d {
                v *= Complex64::new(0.0, j as f64);
            }
            if j == 0 {
                spec[0] = v;
            } else {
                spec[j] = v;
                spec[n - j] = v.conj();
            }
        }
        let mut planner = rustfft::FftPlanner::new();
        planner.plan_fft_inverse(n).process(&mut spec);
        spec.into_iter().map(|z| z.re).collect()
    }

    /// Average-normalized L^p norm of the d-th derivative over T.
    pub fn lp_deriv(&self, which_psi: bool, d: u32, p: f64) -> f64 {
        let coeffs = if which_psi { &self.psi } else { &self.phi };
        let n = (8 * (self.j_max() + 1)).next_power_of_two().max(256);
        let vals = Self::sample_deriv(coeffs, d, n);
        lp_of_samples(&vals, p)
    }
}

pub fn lp_of_samples(vals: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        vals.iter().map(|v| v.abs()).fold(0.0, f64::max)
    } else {
        let s: f64 = vals.iter().map(|v| v.abs().powf(p)).sum();
        (s / vals.len() as f64).powf(1.0 / p)
    }
}

/// Oscillation parameters (λ, σ, r, μ) for one iteration level.
#[derive(Debug, Clone)]
pub struct BlockParams {
    pub lambda: u64,
    pub sigma: Rat,
    pub r: Rat,
    pub mu: f64,
    pub n_lambda: u32,
}

impl BlockParams {
    /// λσ must be a positive integer; 0 < σ < r < 1; μσ above the relaxation
    /// floor (1 demands μ > σ⁻¹ as in the strict regime).
    pub fn validate(&self, mu_relax: f64) -> Result<()> {
        let lam_sigma = Rat::from(num::BigInt::from(self.lambda)) * self.sigma.clone();
        if !lam_sigma.is_integer() || lam_sigma <= Rat::from(num::BigInt::from(0)) {
            return Err(Error::InvalidParameter(format!(
                "λσ = {lam_sigma} must be a positive integer"
            )));
        }
        let one = Rat::from(num::BigInt::from(1));
        if !(self.sigma > Rat::from(num::BigInt::from(0)) && self.sigma < self.r && self.r < one) {
            return Err(Error::InvalidParameter("need 0 < σ < r < 1".into()));
        }
        if self.mu * to_f64(&self.sigma) < mu_relax {
            return Err(Error::InvalidParameter(format!(
                "μσ = {} below relaxation floor {mu_relax}",
                self.mu * to_f64(&self.sigma)
            )));
        }
        Ok(())
    }

    pub fn lam_sigma(&self) -> u64 {
        let ls = Rat::from(num::BigInt::from(self.lambda)) * self.sigma.clone();
        ls.to_integer().to_u64().expect("λσ fits u64")
    }

    /// The composed oscillation stride m = λσN_Λ.
    pub fn stride(&self) -> u64 {
        self.lam_sigma() * self.n_lambda as u64
    }

    pub fn sigma_f64(&self) -> f64 {
        to_f64(&self.sigma)
    }

    pub fn r_f64(&self) -> f64 {
        to_f64(&self.r)
    }
}

/// A block: one frame with its truncated profile pair, ready to synthesize
/// spectral fields on a given grid.
#[derive(Debug, Clone)]
pub struct Block {
    pub xi: [f64; 3],
    pub xi1: [f64; 3],
    pub xi2: [f64; 3],
    /// Integer lattice vectors Nξ and Nξ₁.
    pub xi_int: [i64; 3],
    pub xi1_int: [i64; 3],
    pub params: BlockParams,
    pub par: Profile1D,
    pub perp: Profile1D,
}

fn int_vec(v: &crate::exact::Vec3R, n_lambda: u32) -> [i64; 3] {
    let n = Rat::from(num::BigInt::from(n_lambda));
    let mut out = [0i64; 3];
    for (o, x) in out.iter_mut().zip(v.iter()) {
        let s = x * n.clone();
        debug_assert!(s.is_integer());
        *o = s.to_integer().to_i64().expect("component fits i64");
    }
    out
}

/// Builds the block for one frame. The two profile truncations are chosen
/// jointly so that the whole product lattice {jNξ + lNξ₁ : |j| ≤ J_∥,
/// |l| ≤ J_⊥}·λσ fits the band: the pair φ_ξφ_{ξ₁} is then exact on the grid
/// and carries its full unit L² mass.
pub fn build_block(
    profiles: &ProfileSet,
    frame: &Frame,
    params: &BlockParams,
    grid: &GridSpec,
) -> Result<Block> {
    params.validate_against_grid(frame, grid)?;
    let ls = params.lam_sigma() as i64;
    let xi_int = int_vec(&frame.xi, params.n_lambda);
    let xi1_int = int_vec(&frame.xi1, params.n_lambda);
    let a = xi_int.iter().map(|c| c.abs()).max().unwrap() * ls;
    let b = xi1_int.iter().map(|c| c.abs()).max().unwrap() * ls;
    let band = grid.band();
    let nom_par = profiles.nominal_harmonics(params.r_f64()) as i64;
    let nom_perp = profiles.nominal_harmonics(params.sigma_f64()) as i64;
    let (mut jp, mut jq) = (1i64, 1i64);
    loop {
        let can_p = jp < nom_par && (jp + 1) * a + jq * b <= band;
        let can_q = jq < nom_perp && jp * a + (jq + 1) * b <= band;
        match (can_p, can_q) {
            (false, false) => break,
            (true, false) => jp += 1,
            (false, true) => jq += 1,
            (true, true) => {
                // grow the profile that is further from its nominal content
                if (jp as f64 / nom_par as f64) <= (jq as f64 / nom_perp as f64) {
                    jp += 1;
                } else {
                    jq += 1;
                }
            }
        }
    }
    let par = profiles.rescale(params.r_f64(), jp as usize);
    let perp = profiles.rescale(params.sigma_f64(), jq as usize);
    Ok(Block {
        xi: frame.xi_f64(),
        xi1: frame.xi1_f64(),
        xi2: frame.xi2_f64(),
        xi_int,
        xi1_int,
        params: params.clone(),
        par,
        perp,
    })
}

impl BlockParams {
    /// The joint single-harmonic pair (j = l = 1) must fit the band.
    pub fn validate_against_grid(&self, frame: &Frame, grid: &GridSpec) -> Result<()> {
        let ls = self.lam_sigma() as i64;
        let a = int_vec(&frame.xi, self.n_lambda).iter().map(|c| c.abs()).max().unwrap() * ls;
        let b = int_vec(&frame.xi1, self.n_lambda).iter().map(|c| c.abs()).max().unwrap() * ls;
        if a + b > grid.band() {
            return Err(Error::NyquistOverflow { required: a + b, band: grid.band() });
        }
        Ok(())
    }
}

impl Block {
    fn stride_f(&self) -> f64 {
        self.params.stride() as f64
    }

    fn lattice_par(&self) -> [i64; 3] {
        let ls = self.params.lam_sigma() as i64;
        [self.xi_int[0] * ls, self.xi_int[1] * ls, self.xi_int[2] * ls]
    }

    fn lattice_perp(&self) -> [i64; 3] {
        let ls = self.params.lam_sigma() as i64;
        [self.xi1_int[0] * ls, self.xi1_int[1] * ls, self.xi1_int[2] * ls]
    }

    /// Traveling phase frequency of the j-th harmonic: ω_j = j·λσN·μ.
    pub fn omega(&self) -> f64 {
        self.stride_f() * self.params.mu
    }

    /// Entries of Σ_j c_j e^{ij(base·x)} e^{ijωt}, ∂_t^n applied, in-band only.
    fn line_entries(
        &self,
        grid: &GridSpec,
        base: [i64; 3],
        omega: f64,
        coeffs: &[f64],
        t: f64,
        dt_order: u32,
    ) -> SparseField {
        let jm = coeffs.len() as i64 - 1;
        let mut out = Vec::new();
        for j in -jm..=jm {
            let c = coeffs[j.unsigned_abs() as usize];
            if c == 0.0 {
                continue;
            }
            let k = [base[0] * j, base[1] * j, base[2] * j];
            if grid.check_band(k).is_err() {
                continue;
            }
            let w = j as f64 * omega;
            let mut v = Complex64::from_polar(c, w * t);
            for _ in 0..dt_order {
                v *= Complex64::new(0.0, w);
            }
            out.push((k, v));
        }
        out
    }

    pub fn phi_entries(&self, grid: &GridSpec, t: f64, dt_order: u32) -> SparseField {
        self.line_entries(grid, self.lattice_par(), self.omega(), &self.par.phi, t, dt_order)
    }

    pub fn varphi_entries(&self, grid: &GridSpec) -> SparseField {
        self.line_entries(grid, self.lattice_perp(), 0.0, &self.perp.phi, 0.0, 0)
    }

    pub fn psi_entries(&self, grid: &GridSpec) -> SparseField {
        self.line_entries(grid, self.lattice_perp(), 0.0, &self.perp.psi, 0.0, 0)
    }

    /// Entries of trunc(φ_ξ φ_{ξ₁}) with ∂_t^n applied; identical to the
    /// padded grid product of the two line fields.
    pub fn pair_entries(&self, grid: &GridSpec, t: f64, dt_order: u32) -> SparseField {
        crate::field::sparse_convolve(
            &self.phi_entries(grid, t, dt_order),
            &self.varphi_entries(grid),
            grid,
        )
    }

    /// Entries of trunc(pair²) = G_ξ, the canonical block square, ∂_t^n
    /// applied. The square is the exact convolution of the truncated pair
    /// with itself, band-truncated.
    pub fn pair_squared_entries(&self, grid: &GridSpec, t: f64, dt_order: u32) -> SparseField {
        let p0 = self.pair_entries(grid, t, 0);
        if dt_order == 0 {
            return crate::field::sparse_convolve(&p0, &p0, grid);
        }
        // ∂_t of the square: phases add, so differentiate after convolving by
        // rebuilding with the correct joint frequency. Convolve the pair with
        // itself keeping track of the parallel harmonic count via frequency:
        // each pair entry at wavevector jNξ+lNξ₁ carries frequency jω; the
        // convolution entry carries (j₁+j₂)ω. Recover j from k·ξ.
        let sq = crate::field::sparse_convolve(&p0, &p0, grid);
        let m = self.stride_f();
        let xi = self.xi;
        sq.into_iter()
            .map(|(k, v)| {
                let kxi = xi[0] * k[0] as f64 + xi[1] * k[1] as f64 + xi[2] * k[2] as f64;
                // k·ξ = j·λσN ⇒ frequency = (k·ξ)/ (λσN) · ω = k·ξ·μ
                let w = kxi / m * self.omega();
                let mut val = v;
                for _ in 0..dt_order {
                    val *= Complex64::new(0.0, w);
                }
                (k, val)
            })
            .collect()
    }

    /// Entries of the potential pair trunc(φ_ξ Ψ_{ξ₁}).
    pub fn pair_potential_entries(&self, grid: &GridSpec, t: f64) -> SparseField {
        crate::field::sparse_convolve(
            &self.phi_entries(grid, t, 0),
            &self.psi_entries(grid),
            grid,
        )
    }

    /// φ_ξ(t,·): the traveling profile along ξ.
    pub fn phi_xi(&self, grid: &GridSpec, t: f64) -> SpectralField {
        crate::field::sparse_to_field(&self.phi_entries(grid, t, 0), *grid)
    }

    /// Exact (spectral-phase) time derivative ∂_t^n φ_ξ.
    pub fn phi_xi_dt(&self, grid: &GridSpec, t: f64, n: u32) -> SpectralField {
        crate::field::sparse_to_field(&self.phi_entries(grid, t, n), *grid)
    }

    /// φ_{ξ₁}: the static concentration profile along ξ₁.
    pub fn varphi_xi1(&self, grid: &GridSpec) -> SpectralField {
        crate::field::sparse_to_field(&self.varphi_entries(grid), *grid)
    }

    /// Ψ_{ξ₁}: the potential profile. Since φ̂_σ(j) = σ²j²Ψ̂_σ(j) in storage
    /// and |k_j|² = (jλσN)², the identity −ΔΨ_{ξ₁} = λ²N²φ_{ξ₁} holds exactly
    /// with no extra scaling.
    pub fn psi_xi1(&self, grid: &GridSpec) -> SpectralField {
        crate::field::sparse_to_field(&self.psi_entries(grid), *grid)
    }

    /// trunc(φ_ξ φ_{ξ₁}).
    pub fn pair(&self, grid: &GridSpec, t: f64) -> SpectralField {
        crate::field::sparse_to_field(&self.pair_entries(grid, t, 0), *grid)
    }

    /// ∂_t^n of the pair, exact in the traveling phase.
    pub fn pair_dt(&self, grid: &GridSpec, t: f64, n: u32) -> SpectralField {
        crate::field::sparse_to_field(&self.pair_entries(grid, t, n), *grid)
    }

    /// trunc(pair²) = G_ξ.
    pub fn pair_squared(&self, grid: &GridSpec, t: f64) -> SpectralField {
        crate::field::sparse_to_field(&self.pair_squared_entries(grid, t, 0), *grid)
    }

    /// Intermittent velocity flow W_ξ = φ_ξφ_{ξ₁}·ξ.
    pub fn w_flow(&self, grid: &GridSpec, t: f64) -> SpectralField {
        self.pair(grid, t).times_const_vector(self.xi)
    }

    /// Intermittent deformation flow E_ξ = φ_ξφ_{ξ₁}·ξ₂.
    pub fn e_flow(&self, grid: &GridSpec, t: f64) -> SpectralField {
        self.pair(grid, t).times_const_vector(self.xi2)
    }

    /// The potential pair trunc(φ_ξ Ψ_{ξ₁}).
    pub fn pair_potential(&self, grid: &GridSpec, t: f64) -> SpectralField {
        crate::field::sparse_to_field(&self.pair_potential_entries(grid, t), *grid)
    }

    /// True when every nonzero coefficient of `f` sits on the λσ-sublattice
    /// spanned by Nξ and Nξ₁ (exact integer check).
    pub fn on_sublattice(&self, f: &SpectralField) -> bool {
        let ls = self.params.lam_sigma() as i64;
        let n = f.grid.n;
        let bp = self.xi_int;
        let bq = self.xi1_int;
        // solve j·bp + l·bq = k/ls over the integers by scanning the small
        // harmonic box
        let jp = self.par.phi.len() as i64 + 1;
        let lq = self.perp.phi.len() as i64 + 1;
        let mut ok = true;
        for c in 0..f.rank.ncomp() {
            let comp = f.comp(c);
            let mut idx = 0;
            for ix in 0..n {
                let kx = f.grid.wavenumber(ix);
                for iy in 0..n {
                    let ky = f.grid.wavenumber(iy);
                    for iz in 0..n {
                        let kz = f.grid.wavenumber(iz);
                        if comp[idx].norm() > 1e-13 {
                            let k = [kx, ky, kz];
                            if k.iter().any(|c| c % ls != 0) {
                                return false;
                            }
                            let kr = [k[0] / ls, k[1] / ls, k[2] / ls];
                            let mut hit = false;
                            'scan: for j in -jp..=jp {
                                for l in -lq..=lq {
                                    if kr[0] == j * bp[0] + l * bq[0]
                                        && kr[1] == j * bp[1] + l * bq[1]
                                        && kr[2] == j * bp[2] + l * bq[2]
                                    {
                                        hit = true;
                                        break 'scan;
                                    }
                                }
                            }
                            ok &= hit;
                        }
                        idx += 1;
                    }
                }
            }
        }
        ok
    }
}

// ---------------------------------------------------------------------------
// Norm measurement without 3D grids
// ---------------------------------------------------------------------------

/// One row of the scaling-sweep measurement.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BlockNormSample {
    pub lambda: u64,
    pub sigma: f64,
    pub r: f64,
    pub mu: f64,
    pub m_ord: u32,
    pub n_ord: u32,
    pub p: f64,
    /// ‖∇^M ∂_t^N φ_ξ‖_{L^p}
    pub phi_par: f64,
    /// ‖∇^M φ_{ξ₁}‖_{L^p}
    pub phi_perp: f64,
    /// ‖∇^M Ψ_{ξ₁}‖_{L^p}
    pub psi_perp: f64,
    /// ‖∇^M (φ_ξ φ_{ξ₁})‖_{L^p} (2D quadrature; only when requested)
    pub pair: Option<f64>,
    /// ‖∇^M (φ_ξ Ψ_{ξ₁})‖_{L^p}
    pub pair_psi: Option<f64>,
}

/// Measures profile norms for one parameter point. Because the composition
/// x ↦ λσN(ξ·x, ξ₁·x) is measure preserving, every L^p norm of a block field
/// equals the L^p norm of the underlying 1D/2D profile expression; these are
/// evaluated by quadrature on fine 1D/2D grids, with no 3D grid involved.
pub fn measure_block_norms(
    profiles: &ProfileSet,
    params: &BlockParams,
    m_ord: u32,
    n_ord: u32,
    p: f64,
    with_products: bool,
) -> Result<BlockNormSample> {
    params.validate(0.0)?;
    let par = profiles.rescale(params.r_f64(), usize::MAX / 2);
    let perp = profiles.rescale(params.sigma_f64(), usize::MAX / 2);
    let m = params.stride() as f64;
    let mu = params.mu;

    // φ_ξ: ∇^M∂_t^N → m^{M+N} μ^N × the (M+N)-th profile derivative
    let phi_par = m.powi((m_ord + n_ord) as i32)
        * mu.powi(n_ord as i32)
        * par.lp_deriv(false, m_ord + n_ord, p);
    // φ_{ξ₁}, Ψ_{ξ₁}: time-independent
    let phi_perp = m.powi(m_ord as i32) * perp.lp_deriv(false, m_ord, p);
    let psi_perp = m.powi(m_ord as i32) * perp.lp_deriv(true, m_ord, p);

    // products: 2D quadrature of |∇^M(f g)|² = Σ_a binom |∂^a f|²|∂^{M−a} g|²
    let (pair, pair_psi) = if with_products {
        (
            Some(pair_norm_2d(&par, &perp, false, m, m_ord, p)),
            Some(pair_norm_2d(&par, &perp, true, m, m_ord, p)),
        )
    } else {
        (None, None)
    };

    Ok(BlockNormSample {
        lambda: params.lambda,
        sigma: params.sigma_f64(),
        r: params.r_f64(),
        mu: params.mu,
        m_ord,
        n_ord,
        p,
        phi_par,
        phi_perp,
        psi_perp,
        pair,
        pair_psi,
    })
}

fn binom(n: u32, k: u32) -> f64 {
    let mut v = 1.0;
    for i in 0..k {
        v = v * (n - i) as f64 / (i + 1) as f64;
    }
    v
}

fn pair_norm_2d(par: &Profile1D, perp: &Profile1D, use_psi: bool, m: f64, m_ord: u32, p: f64) -> f64 {
    let ns = (8 * (par.j_max() + 1)).next_power_of_two().clamp(256, 8192);
    let nu = (8 * (perp.j_max() + 1)).next_power_of_two().clamp(256, 8192);
    // precompute s-direction derivative samples for a = 0..=M
    let f_tab: Vec<Vec<f64>> =
        (0..=m_ord).map(|a| Profile1D::sample_deriv(&par.phi, a, ns)).collect();
    let g_coeffs = if use_psi { &perp.psi } else { &perp.phi };
    let g_tab: Vec<Vec<f64>> =
        (0..=m_ord).map(|a| Profile1D::sample_deriv(g_coeffs, a, nu)).collect();
    let mut acc = 0.0f64;
    let mut maxv = 0.0f64;
    for iu in 0..nu {
        for is in 0..ns {
            let mut mag2 = 0.0;
            for a in 0..=m_ord {
                let b = binom(m_ord, a);
                let t = f_tab[a as usize][is] * g_tab[(m_ord - a) as usize][iu];
                mag2 += b * t * t;
            }
            let mag = mag2.sqrt() * m.powi(m_ord as i32);
            if p.is_infinite() {
                maxv = maxv.max(mag);
            } else {
                acc += mag.powf(p);
            }
        }
    }
    if p.is_infinite() {
        maxv
    } else {
        (acc / (ns * nu) as f64).powf(1.0 / p)
    }
}

/// Least-squares slope of log(y) against log(x).
pub fn fit_exponent(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in lx.iter().zip(ly.iter()) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Cross-block measurements on a scratch 3D grid via 1D profile tables:
/// ‖φ_ξφ_{ξ₁}φ_{ξ'}φ_{ξ₁'}‖_{L^p} and the thresholded support fraction of the
/// 4-product (threshold 1e-6·max).
pub fn measure_cross(
    profiles: &ProfileSet,
    params: &BlockParams,
    fa: &Frame,
    fb: &Frame,
    p: f64,
    n_grid: usize,
) -> Result<(f64, f64)> {
    let par = profiles.rescale(params.r_f64(), usize::MAX / 2);
    let perp = profiles.rescale(params.sigma_f64(), usize::MAX / 2);
    let m = params.stride() as f64;
    // 1D lookup tables of h(s) = profile(m·s), fine enough for the content
    let content = (m as usize) * (par.j_max().max(perp.j_max()) + 1);
    let n_tab = (8 * content).next_power_of_two().clamp(1024, 1 << 21);
    let tab = |prof: &Profile1D| -> Vec<f64> {
        // profile sampled at u = m·s, s uniform on T: sample_deriv at n_tab
        // points of the m-dilated function = base profile at (m·idx mod n_tab)
        let base = Profile1D::sample_deriv(&prof.phi, 0, n_tab);
        (0..n_tab)
            .map(|idx| base[(idx as u64 * m as u64 % n_tab as u64) as usize])
            .collect()
    };
    let t_par = tab(&par);
    let t_perp = tab(&perp);
    let lookup = |table: &[f64], s: f64| -> f64 {
        let tau = 2.0 * std::f64::consts::PI;
        let x = (s.rem_euclid(tau)) / tau * n_tab as f64;
        let i0 = x.floor() as usize % n_tab;
        let i1 = (i0 + 1) % n_tab;
        let fr = x - x.floor();
        table[i0] * (1.0 - fr) + table[i1] * fr
    };
    let (xa, xa1) = (fa.xi_f64(), fa.xi1_f64());
    let (xb, xb1) = (fb.xi_f64(), fb.xi1_f64());
    let h = 2.0 * std::f64::consts::PI / n_grid as f64;
    let mut acc = 0.0f64;
    let mut maxv = 0.0f64;
    let mut vals = Vec::with_capacity(n_grid * n_grid * n_grid);
    for ix in 0..n_grid {
        let x0 = ix as f64 * h;
        for iy in 0..n_grid {
            let x1 = iy as f64 * h;
            for iz in 0..n_grid {
                let x2 = iz as f64 * h;
                let dot = |v: &[f64; 3]| v[0] * x0 + v[1] * x1 + v[2] * x2;
                let v = lookup(&t_par, dot(&xa))
                    * lookup(&t_perp, dot(&xa1))
                    * lookup(&t_par, dot(&xb))
                    * lookup(&t_perp, dot(&xb1));
                vals.push(v);
                maxv = maxv.max(v.abs());
                if !p.is_infinite() {
                    acc += v.abs().powf(p);
                }
            }
        }
    }
    let norm = if p.is_infinite() {
        maxv
    } else {
        (acc / vals.len() as f64).powf(1.0 / p)
    };
    let thresh = 1e-6 * maxv;
    let frac = vals.iter().filter(|v| v.abs() > thresh).count() as f64 / vals.len() as f64;
    Ok((norm, frac))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;
    use crate::field::{pointwise, PointwiseOp, Rank};
    use crate::geometry::builtin_family;
    use crate::operators::divergence_vec;
    use approx::assert_abs_diff_eq;

    fn desk_params() -> BlockParams {
        BlockParams { lambda: 2, sigma: rat(1, 2), r: rat(3, 4), mu: 4.0, n_lambda: 9 }
    }

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n, 2, 1.0).unwrap()
    }

    #[test]
    fn base_profile_invariants() {
        let prof = make_profiles(16).unwrap();
        // φ̂ = j²Ψ̂ exactly
        for (j, (psi, phi)) in prof.psi_hat.iter().zip(prof.phi_hat.iter()).enumerate() {
            assert_abs_diff_eq!(*phi, (j * j) as f64 * psi, epsilon = 1e-15);
        }
        // ∮φ² = 1 i.e. ∫φ² = 2π
        let mass: f64 = 2.0 * prof.phi_hat.iter().skip(1).map(|c| c * c).sum::<f64>();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);
        // ∮φ = 0
        assert_eq!(prof.phi_hat[0], 0.0);
        assert!(make_profiles(4).is_err());
    }

    #[test]
    fn profile_quadrature_oracle() {
        // ∮φ² by direct 1D quadrature matches the coefficient normalization
        let prof = make_profiles(12).unwrap();
        let p1 = prof.rescale(1.0, 12);
        let vals = Profile1D::sample_deriv(&p1.phi, 0, 1024);
        let quad: f64 = vals.iter().map(|v| v * v).sum::<f64>() / 1024.0;
        assert_abs_diff_eq!(quad, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn phi_from_fd_of_psi_matches_spectral() {
        // φ = −Ψ″: 2nd-order central differences of Ψ samples converge at h²
        let prof = make_profiles(8).unwrap();
        let p1 = prof.rescale(1.0, 8);
        let mut errs = Vec::new();
        for &n in &[128usize, 256, 512] {
            let psi = Profile1D::sample_deriv(&p1.psi, 0, n);
            let phi = Profile1D::sample_deriv(&p1.phi, 0, n);
            let h = 2.0 * std::f64::consts::PI / n as f64;
            let mut worst = 0.0f64;
            for i in 0..n {
                let fd = -(psi[(i + 1) % n] - 2.0 * psi[i] + psi[(i + n - 1) % n]) / (h * h);
                worst = worst.max((fd - phi[i]).abs());
            }
            errs.push(worst);
        }
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
        assert!(errs[2] < errs[1] / 3.0, "{errs:?}");
    }

    #[test]
    fn params_validation() {
        let mut p = desk_params();
        p.validate(1.0).unwrap();
        assert_eq!(p.lam_sigma(), 1);
        p.sigma = rat(1, 3); // λσ = 2/3 not integer
        assert!(p.validate(1.0).is_err());
        p.sigma = rat(1, 2);
        p.mu = 0.5; // μσ = 0.25 < 1
        assert!(p.validate(1.0).is_err());
        p.validate(0.2).unwrap();
    }

    #[test]
    fn laplacian_potential_identity() {
        // −ΔΨ_{ξ₁} = λ²N_Λ²·φ_{ξ₁} coefficientwise
        let fam = builtin_family().unwrap();
        let g = grid(64);
        let p = desk_params();
        for f in [&fam.lambda_v[0], &fam.lambda_i[0][4]] {
            let blk = build_block(&make_profiles(8).unwrap(), f, &p, &g).unwrap();
            let psi = blk.psi_xi1(&g);
            let phi = blk.varphi_xi1(&g);
            let lap = psi
                .differentiate([2, 0, 0])
                .add(&psi.differentiate([0, 2, 0]))
                .add(&psi.differentiate([0, 0, 2]))
                .scale(-1.0);
            let target = phi.scale((p.lambda as f64 * fam.n_lambda as f64).powi(2));
            assert!(
                lap.max_coeff_diff(&target) <= 1e-13 * target.max_coeff(),
                "mismatch {:.3e}",
                lap.max_coeff_diff(&target)
            );
        }
    }

    #[test]
    fn transport_identity_exact() {
        // ξ·∇φ_ξ = μ⁻¹ ∂_t φ_ξ at several times, with the analytic phase ∂_t
        let fam = builtin_family().unwrap();
        let g = grid(64);
        let p = desk_params();
        let blk = build_block(&make_profiles(8).unwrap(), &fam.lambda_v[1], &p, &g).unwrap();
        for &t in &[0.0, 0.3, 0.77] {
            let phi = blk.phi_xi(&g, t);
            let grad = crate::operators::gradient(&phi);
            let mut xi_dot_grad = SpectralField::zeros(g, Rank::Scalar);
            for c in 0..3 {
                xi_dot_grad.axpy(blk.xi[c], &grad.component_field(c));
            }
            let dt = blk.phi_xi_dt(&g, t, 1).scale(1.0 / p.mu);
            assert!(
                xi_dot_grad.max_coeff_diff(&dt) <= 1e-12 * phi.max_coeff().max(1.0),
                "residual {:.3e}",
                xi_dot_grad.max_coeff_diff(&dt)
            );
        }
    }

    #[test]
    fn pair_means_and_normalization() {
        let fam = builtin_family().unwrap();
        let g = grid(64);
        let p = desk_params();
        let blk = build_block(&make_profiles(8).unwrap(), &fam.lambda_i[1][2], &p, &g).unwrap();
        let pair = blk.pair(&g, 0.25);
        // ∮ φ_ξφ_{ξ₁} = 0
        assert!(pair.mean(0).norm() < 1e-14);
        // ∮ (φ_ξφ_{ξ₁})² = 1: the k=0 mode of the squared pair
        let sq = blk.pair_squared(&g, 0.25);
        assert_abs_diff_eq!(sq.mean(0).re, 1.0, epsilon = 1e-10);
        // Parseval route
        assert_abs_diff_eq!(pair.l2_coeff_norm(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn sparse_products_match_padded_grid_products() {
        let fam = builtin_family().unwrap();
        let g = grid(64);
        let p = desk_params();
        let blk = build_block(&make_profiles(8).unwrap(), &fam.lambda_i[2][0], &p, &g).unwrap();
        let t = 0.4;
        let phi = blk.phi_xi(&g, t);
        let vphi = blk.varphi_xi1(&g);
        let pair_grid = pointwise(PointwiseOp::Product, &phi, &vphi).unwrap().field;
        let pair_sparse = blk.pair(&g, t);
        assert!(pair_grid.max_coeff_diff(&pair_sparse) < 1e-12);
        let sq_grid = pointwise(PointwiseOp::Product, &pair_sparse, &pair_sparse).unwrap().field;
        let sq_sparse = blk.pair_squared(&g, t);
        assert!(sq_grid.max_coeff_diff(&sq_sparse) < 1e-12);
    }

    #[test]
    fn flows_orientation_and_divergence() {
        let fam = builtin_family().unwrap();
        let g = grid(64);
        let p = desk_params();
        let blk = build_block(&make_profiles(8).unwrap(), &fam.lambda_i[0][1], &p, &g).unwrap();
        let w = blk.w_flow(&g, 0.1);
        let e = blk.e_flow(&g, 0.1);
        // W ∥ ξ and E ∥ ξ₂ pointwise
        let wg = w.to_grid();
        let idx = 12345 % g.points();
        let dot = |v: &crate::field::GridData, d: &[f64; 3], i: usize| -> f64 {
            (0..3).map(|c| v.comp(c)[i] * d[c]).sum()
        };
        assert!(dot(&wg, &blk.xi1, idx).abs() < 1e-12);
        assert!(dot(&wg, &blk.xi2, idx).abs() < 1e-12);
        // mean zero
        for c in 0..3 {
            assert!(w.mean(c).norm() < 1e-14);
            assert!(e.mean(c).norm() < 1e-14);
        }
        // ∮|W|² = ∮(φφ)² = 1
        assert_abs_diff_eq!(w.l2_coeff_norm(), 1.0, epsilon = 1e-10);
        // div W = ξ·∇(φ_ξ)·φ_{ξ₁} ≠ 0 in general, equal to the spectral oracle
        let div = divergence_vec(&w);
        assert!(div.max_coeff() > 1e-4);
        let phi_dt = blk.pair_dt(&g, 0.1, 1).scale(1.0 / p.mu);
        assert!(div.max_coeff_diff(&phi_dt) < 1e-11 * phi_dt.max_coeff().max(1.0));
    }

    #[test]
    fn sublattice_support_exact() {
        let fam = builtin_family().unwrap();
        let g = grid(64);
        let p = desk_params();
        let blk = build_block(&make_profiles(8).unwrap(), &fam.lambda_v[3], &p, &g).unwrap();
        assert!(blk.on_sublattice(&blk.pair(&g, 0.6)));
        assert!(blk.on_sublattice(&blk.pair_squared(&g, 0.6)));
        // a field off the sublattice fails
        let mut off = SpectralField::zeros(g, Rank::Scalar);
        off.add_mode(0, [1, 1, 0], Complex64::new(1.0, 0.0)).unwrap();
        assert!(!blk.on_sublattice(&off));
    }

    #[test]
    fn nyquist_overflow_detected() {
        let fam = builtin_family().unwrap();
        let g = grid(8); // band 3 — far too small for the 9-denominator frames
        let p = desk_params();
        assert!(matches!(
            build_block(&make_profiles(8).unwrap(), &fam.lambda_v[0], &p, &g),
            Err(Error::NyquistOverflow { .. })
        ));
    }

    #[test]
    fn scaling_exponents_in_r_and_sigma() {
        // ‖φ_ξ‖_{L^p} ~ r^{1/p−1/2} (r exponent 0 at p = 2, +1/2 at p = 1);
        // a wide base bandwidth keeps the truncation tail of φ = −Ψ″ small
        let prof = make_profiles(96).unwrap();
        let tol = |e: f64| (0.1 * e.abs()).max(0.05);
        let mk = |den: i64| BlockParams {
            lambda: 64,
            sigma: rat(1, 64),
            r: rat(1, den),
            mu: 100.0,
            n_lambda: 9,
        };
        let rs: Vec<BlockParams> = [4i64, 8, 16, 32].iter().map(|&d| mk(d)).collect();
        for (p, expect) in [(1.0, 0.5), (2.0, 0.0), (f64::INFINITY, -0.5)] {
            let xs: Vec<f64> = rs.iter().map(|b| b.r_f64()).collect();
            let ys: Vec<f64> = rs
                .iter()
                .map(|b| measure_block_norms(&prof, b, 0, 0, p, false).unwrap().phi_par)
                .collect();
            let got = fit_exponent(&xs, &ys);
            assert!((got - expect).abs() <= tol(expect), "p = {p}: exponent {got} vs {expect}");
        }
        // ‖φ_{ξ₁}‖_{L^p} ~ σ^{1/p−1/2}
        let sg = |den: i64| BlockParams {
            lambda: 64,
            sigma: rat(1, den),
            r: rat(1, 2),
            mu: 100.0,
            n_lambda: 9,
        };
        let ss: Vec<BlockParams> = [8i64, 16, 32, 64].iter().map(|&d| sg(d)).collect();
        for (p, expect) in [(1.0, 0.5), (f64::INFINITY, -0.5)] {
            let xs: Vec<f64> = ss.iter().map(|b| b.sigma_f64()).collect();
            let ys: Vec<f64> = ss
                .iter()
                .map(|b| measure_block_norms(&prof, b, 0, 0, p, false).unwrap().phi_perp)
                .collect();
            let got = fit_exponent(&xs, &ys);
            assert!((got - expect).abs() <= tol(expect), "p = {p}: σ exponent {got} vs {expect}");
        }
    }
}
