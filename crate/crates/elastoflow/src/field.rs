//! Band-limited fields on T³ with exact spectral calculus.
//!
//! A `SpectralField` stores Fourier coefficients f̂_k, k ∈ Z³, |k_i| ≤ n/2 − 1,
//! for a real scalar, vector, or 3×3-tensor field. All linear operators act as
//! exact multipliers on coefficients. Nonlinear (pointwise) operations go
//! through a 3/2 zero-padded grid, so every retained coefficient of a product
//! of two in-band fields is alias-free.

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::GridSpec;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rank {
    Scalar,
    Vector3,
    Tensor3x3,
}

impl Rank {
    pub fn ncomp(&self) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector3 => 3,
            Rank::Tensor3x3 => 9,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Rank::Scalar => "scalar",
            Rank::Vector3 => "vector3",
            Rank::Tensor3x3 => "tensor3x3",
        }
    }
}

/// Tensor component (i, j) → flat component index, row-major.
#[inline]
pub fn tensor_comp(i: usize, j: usize) -> usize {
    3 * i + j
}

#[derive(Debug, Clone)]
pub struct SpectralField {
    pub rank: Rank,
    pub grid: GridSpec,
    coeffs: Vec<Complex64>,
}

/// Real grid samples of a field (n³ points per component, z-contiguous).
#[derive(Debug, Clone)]
pub struct GridData {
    pub rank: Rank,
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(grid: GridSpec, rank: Rank) -> Self {
        Self { rank, grid, coeffs: vec![Complex64::default(); rank.ncomp() * grid.points()] }
    }

    pub fn comp(&self, c: usize) -> &[Complex64] {
        let p = self.grid.points();
        &self.coeffs[c * p..(c + 1) * p]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [Complex64] {
        let p = self.grid.points();
        &mut self.coeffs[c * p..(c + 1) * p]
    }

    pub fn raw(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn raw_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    #[inline]
    fn lin_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        let n = self.grid.n;
        (ix * n + iy) * n + iz
    }

    pub fn coeff(&self, c: usize, k: [i64; 3]) -> Complex64 {
        match (self.grid.index_of(k[0]), self.grid.index_of(k[1]), self.grid.index_of(k[2])) {
            (Some(ix), Some(iy), Some(iz)) => self.comp(c)[self.lin_index(ix, iy, iz)],
            _ => Complex64::default(),
        }
    }

    pub fn set_coeff(&mut self, c: usize, k: [i64; 3], v: Complex64) -> Result<()> {
        self.grid.check_band(k)?;
        let (ix, iy, iz) = (
            self.grid.index_of(k[0]).unwrap(),
            self.grid.index_of(k[1]).unwrap(),
            self.grid.index_of(k[2]).unwrap(),
        );
        let idx = self.lin_index(ix, iy, iz);
        self.comp_mut(c)[idx] = v;
        Ok(())
    }

    /// Adds v at k and conj(v) at −k, preserving Hermitian symmetry.
    pub fn add_mode(&mut self, c: usize, k: [i64; 3], v: Complex64) -> Result<()> {
        if k == [0, 0, 0] {
            let cur = self.coeff(c, k);
            return self.set_coeff(c, k, cur + v + v.conj());
        }
        let cur = self.coeff(c, k);
        self.set_coeff(c, k, cur + v)?;
        let mk = [-k[0], -k[1], -k[2]];
        let cur = self.coeff(c, mk);
        self.set_coeff(c, mk, cur + v.conj())
    }

    /// Samples a real-valued closure on the grid and transforms.
    pub fn from_fn(grid: GridSpec, rank: Rank, f: impl Fn(usize, [f64; 3]) -> f64) -> Self {
        let n = grid.n;
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let mut values = vec![0.0; rank.ncomp() * grid.points()];
        for c in 0..rank.ncomp() {
            let comp = &mut values[c * grid.points()..(c + 1) * grid.points()];
            let mut idx = 0;
            for ix in 0..n {
                for iy in 0..n {
                    for iz in 0..n {
                        comp[idx] = f(c, [ix as f64 * h, iy as f64 * h, iz as f64 * h]);
                        idx += 1;
                    }
                }
            }
        }
        GridData { rank, grid, values }.to_spectral()
    }

    /// Inverse transform to real grid samples; imaginary parts are dropped.
    pub fn to_grid(&self) -> GridData {
        let n = self.grid.n;
        let p = self.grid.points();
        let mut values = vec![0.0; self.rank.ncomp() * p];
        let mut buf = vec![Complex64::default(); p];
        for c in 0..self.rank.ncomp() {
            buf.copy_from_slice(self.comp(c));
            fft::coeffs_to_grid(&mut buf, n);
            for (v, z) in values[c * p..(c + 1) * p].iter_mut().zip(buf.iter()) {
                *v = z.re;
            }
        }
        GridData { rank: self.rank, grid: self.grid, values }
    }

    /// Largest |Im f| over the grid; ≈ 0 for every real (Hermitian) field.
    pub fn max_imag_on_grid(&self) -> f64 {
        let n = self.grid.n;
        let p = self.grid.points();
        let mut worst = 0.0f64;
        let mut buf = vec![Complex64::default(); p];
        for c in 0..self.rank.ncomp() {
            buf.copy_from_slice(self.comp(c));
            fft::coeffs_to_grid(&mut buf, n);
            for z in &buf {
                worst = worst.max(z.im.abs());
            }
        }
        worst
    }

    /// Largest |f̂_k − conj(f̂_{−k})| over the band.
    pub fn hermitian_error(&self) -> f64 {
        let b = self.grid.band();
        let mut worst = 0.0f64;
        for c in 0..self.rank.ncomp() {
            for kx in -b..=b {
                for ky in -b..=b {
                    for kz in 0..=b {
                        let k = [kx, ky, kz];
                        let mk = [-kx, -ky, -kz];
                        let d = (self.coeff(c, k) - self.coeff(c, mk).conj()).norm();
                        worst = worst.max(d);
                    }
                }
            }
        }
        worst
    }

    /// D^ζ: multiplies coefficients by (ik₁)^{ζ₁}(ik₂)^{ζ₂}(ik₃)^{ζ₃}.
    pub fn differentiate(&self, zeta: [u32; 3]) -> Self {
        let order: u32 = zeta.iter().sum();
        debug_assert!(order <= 6, "derivative order {order} > 6");
        let mut out = self.clone();
        let n = self.grid.n;
        for c in 0..self.rank.ncomp() {
            let comp = out.comp_mut(c);
            let mut idx = 0;
            for ix in 0..n {
                let kx = self.grid.wavenumber(ix) as f64;
                for iy in 0..n {
                    let ky = self.grid.wavenumber(iy) as f64;
                    for iz in 0..n {
                        let kz = self.grid.wavenumber(iz) as f64;
                        let mut m = Complex64::new(1.0, 0.0);
                        for _ in 0..zeta[0] {
                            m *= Complex64::new(0.0, kx);
                        }
                        for _ in 0..zeta[1] {
                            m *= Complex64::new(0.0, ky);
                        }
                        for _ in 0..zeta[2] {
                            m *= Complex64::new(0.0, kz);
                        }
                        comp[idx] *= m;
                        idx += 1;
                    }
                }
            }
        }
        out
    }

    pub fn partial(&self, axis: usize) -> Self {
        let mut z = [0u32; 3];
        z[axis] = 1;
        self.differentiate(z)
    }

    /// Applies a real multiplier m(k) to every component.
    pub fn multiplier(&self, m: impl Fn([i64; 3]) -> f64) -> Self {
        let mut out = self.clone();
        let n = self.grid.n;
        let p = self.grid.points();
        let mut table = vec![0.0f64; p];
        let mut idx = 0;
        for ix in 0..n {
            let kx = self.grid.wavenumber(ix);
            for iy in 0..n {
                let ky = self.grid.wavenumber(iy);
                for iz in 0..n {
                    table[idx] = m([kx, ky, self.grid.wavenumber(iz)]);
                    idx += 1;
                }
            }
        }
        for c in 0..self.rank.ncomp() {
            for (v, s) in out.comp_mut(c).iter_mut().zip(table.iter()) {
                *v *= *s;
            }
        }
        out
    }

    /// Projects onto nonzero frequencies (removes the mean of each component).
    pub fn mean_zero(&self) -> Self {
        let mut out = self.clone();
        for c in 0..self.rank.ncomp() {
            out.comp_mut(c)[0] = Complex64::default();
        }
        out
    }

    pub fn mean(&self, c: usize) -> Complex64 {
        self.comp(c)[0]
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in out.coeffs.iter_mut() {
            *v *= s;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.rank, other.rank);
        debug_assert_eq!(self.grid, other.grid);
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *a += *b;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *a -= *b;
        }
        out
    }

    pub fn axpy(&mut self, s: f64, other: &Self) {
        for (a, b) in self.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *a += s * *b;
        }
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// ℓ²-sum of coefficient magnitudes = average-normalized L² norm (Parseval).
    pub fn l2_coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest |k|∞ carrying a coefficient above `tol`·max.
    pub fn content(&self, rel_tol: f64) -> i64 {
        let cut = rel_tol * self.max_coeff();
        let n = self.grid.n;
        let mut best = 0i64;
        for c in 0..self.rank.ncomp() {
            let comp = self.comp(c);
            let mut idx = 0;
            for ix in 0..n {
                let kx = self.grid.wavenumber(ix).abs();
                for iy in 0..n {
                    let ky = self.grid.wavenumber(iy).abs();
                    for iz in 0..n {
                        if comp[idx].norm() > cut {
                            let m = kx.max(ky).max(self.grid.wavenumber(iz).abs());
                            best = best.max(m);
                        }
                        idx += 1;
                    }
                }
            }
        }
        best
    }

    /// Random band-limited real field: Gaussian coefficients with power-law
    /// decay, supported on |k|∞ ≤ max_k.
    pub fn random(grid: GridSpec, rank: Rank, max_k: i64, decay: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Self::zeros(grid, rank);
        let b = grid.band().min(max_k);
        for c in 0..rank.ncomp() {
            for kx in -b..=b {
                for ky in -b..=b {
                    for kz in -b..=b {
                        let k = [kx, ky, kz];
                        // fill each ±k pair once
                        if k > [0, 0, 0] || k == [0, 0, 0] {
                            let mag = ((kx * kx + ky * ky + kz * kz) as f64).sqrt();
                            let amp = 1.0 / (1.0 + mag).powf(decay);
                            let re: f64 = rng.gen_range(-1.0..1.0);
                            let im: f64 = rng.gen_range(-1.0..1.0);
                            let v = if k == [0, 0, 0] {
                                Complex64::new(re * amp / 2.0, 0.0)
                            } else {
                                Complex64::new(re * amp, im * amp)
                            };
                            out.add_mode(c, k, v).unwrap();
                        }
                    }
                }
            }
        }
        out
    }

    // ---- tensor and vector structure ----

    pub fn identity_tensor(grid: GridSpec) -> Self {
        let mut out = Self::zeros(grid, Rank::Tensor3x3);
        for i in 0..3 {
            out.set_coeff(tensor_comp(i, i), [0, 0, 0], Complex64::new(1.0, 0.0)).unwrap();
        }
        out
    }

    pub fn transpose(&self) -> Self {
        debug_assert_eq!(self.rank, Rank::Tensor3x3);
        let mut out = Self::zeros(self.grid, Rank::Tensor3x3);
        for i in 0..3 {
            for j in 0..3 {
                out.comp_mut(tensor_comp(i, j)).copy_from_slice(self.comp(tensor_comp(j, i)));
            }
        }
        out
    }

    pub fn trace(&self) -> Self {
        debug_assert_eq!(self.rank, Rank::Tensor3x3);
        let mut out = Self::zeros(self.grid, Rank::Scalar);
        for i in 0..3 {
            let src = self.comp(tensor_comp(i, i)).to_vec();
            for (o, s) in out.comp_mut(0).iter_mut().zip(src.iter()) {
                *o += *s;
            }
        }
        out
    }

    /// Subtracts (tr/3)·Id.
    pub fn traceless(&self) -> Self {
        let tr = self.trace();
        let mut out = self.clone();
        for i in 0..3 {
            let c = tensor_comp(i, i);
            for (o, t) in out.comp_mut(c).iter_mut().zip(tr.comp(0).iter()) {
                *o -= *t / 3.0;
            }
        }
        out
    }

    pub fn symmetry_error(&self) -> f64 {
        self.sub(&self.transpose()).to_grid().max_abs()
    }

    pub fn skew_error(&self) -> f64 {
        self.add(&self.transpose()).to_grid().max_abs()
    }

    pub fn trace_error(&self) -> f64 {
        self.trace().to_grid().max_abs()
    }

    /// Extracts one component as a scalar field.
    pub fn component_field(&self, c: usize) -> Self {
        let mut out = Self::zeros(self.grid, Rank::Scalar);
        out.comp_mut(0).copy_from_slice(self.comp(c));
        out
    }

    /// Builds a vector field from three scalar fields.
    pub fn vector_from([a, b, c]: [&Self; 3]) -> Self {
        let mut out = Self::zeros(a.grid, Rank::Vector3);
        out.comp_mut(0).copy_from_slice(a.comp(0));
        out.comp_mut(1).copy_from_slice(b.comp(0));
        out.comp_mut(2).copy_from_slice(c.comp(0));
        out
    }

    /// scalar·(constant vector) → vector field.
    pub fn times_const_vector(&self, v: [f64; 3]) -> Self {
        debug_assert_eq!(self.rank, Rank::Scalar);
        let mut out = Self::zeros(self.grid, Rank::Vector3);
        for c in 0..3 {
            let dst = out.comp_mut(c);
            for (d, s) in dst.iter_mut().zip(self.comp(0).iter()) {
                *d = v[c] * *s;
            }
        }
        out
    }

    /// scalar·(constant matrix) → tensor field.
    pub fn times_const_matrix(&self, m: [[f64; 3]; 3]) -> Self {
        debug_assert_eq!(self.rank, Rank::Scalar);
        let mut out = Self::zeros(self.grid, Rank::Tensor3x3);
        for i in 0..3 {
            for j in 0..3 {
                let dst = out.comp_mut(tensor_comp(i, j));
                for (d, s) in dst.iter_mut().zip(self.comp(0).iter()) {
                    *d = m[i][j] * *s;
                }
            }
        }
        out
    }

    // ---- norms ----

    /// Average-normalized L^p norm by grid quadrature; p = ∞ gives the grid max.
    pub fn norm_lp(&self, p: f64) -> f64 {
        self.to_grid().norm_lp(p)
    }

    /// ‖f‖_p + Σ_{|ζ|=1} ‖D^ζ f‖_p.
    pub fn norm_w1p(&self, p: f64) -> f64 {
        let mut total = self.norm_lp(p);
        for axis in 0..3 {
            total += self.partial(axis).norm_lp(p);
        }
        total
    }

    /// Σ_{|ζ| ≤ N} sup|D^ζ f| over grid points (spatial part of C^N).
    pub fn norm_cn(&self, nn: u32) -> f64 {
        let mut total = 0.0;
        for zx in 0..=nn {
            for zy in 0..=(nn - zx) {
                for zz in 0..=(nn - zx - zy) {
                    total += self.differentiate([zx, zy, zz]).to_grid().max_abs();
                }
            }
        }
        total
    }
}

impl GridData {
    pub fn comp(&self, c: usize) -> &[f64] {
        let p = self.grid.points();
        &self.values[c * p..(c + 1) * p]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        let p = self.grid.points();
        &mut self.values[c * p..(c + 1) * p]
    }

    pub fn zeros(grid: GridSpec, rank: Rank) -> Self {
        Self { rank, grid, values: vec![0.0; rank.ncomp() * grid.points()] }
    }

    pub fn to_spectral(&self) -> SpectralField {
        let n = self.grid.n;
        let p = self.grid.points();
        let mut out = SpectralField::zeros(self.grid, self.rank);
        let mut buf = vec![Complex64::default(); p];
        for c in 0..self.rank.ncomp() {
            for (z, v) in buf.iter_mut().zip(self.comp(c).iter()) {
                *z = Complex64::new(*v, 0.0);
            }
            fft::grid_to_coeffs(&mut buf, n);
            out.comp_mut(c).copy_from_slice(&buf);
        }
        // drop the asymmetric Nyquist plane
        let ny = n / 2;
        for c in 0..self.rank.ncomp() {
            let comp = out.comp_mut(c);
            let mut idx = 0;
            for ix in 0..n {
                for iy in 0..n {
                    for iz in 0..n {
                        if ix == ny || iy == ny || iz == ny {
                            comp[idx] = Complex64::default();
                        }
                        idx += 1;
                    }
                }
            }
        }
        out
    }

    /// Pointwise magnitude: |scalar|, Euclidean for vectors, Frobenius for tensors.
    pub fn magnitude_at(&self, idx: usize) -> f64 {
        let p = self.grid.points();
        match self.rank {
            Rank::Scalar => self.values[idx].abs(),
            _ => {
                let mut s = 0.0;
                for c in 0..self.rank.ncomp() {
                    let v = self.values[c * p + idx];
                    s += v * v;
                }
                s.sqrt()
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn norm_lp(&self, p: f64) -> f64 {
        let np = self.grid.points();
        if p.is_infinite() {
            let mut m = 0.0f64;
            for idx in 0..np {
                m = m.max(self.magnitude_at(idx));
            }
            return m;
        }
        debug_assert!(p >= 1.0);
        let mut acc = 0.0;
        for idx in 0..np {
            acc += self.magnitude_at(idx).powf(p);
        }
        (acc / np as f64).powf(1.0 / p)
    }
}

// ---------------------------------------------------------------------------
// De-aliased pointwise operations
// ---------------------------------------------------------------------------

/// Real samples of a field on the 3/2 zero-padded grid, reusable across
/// several products of the same factor.
pub struct PaddedReal {
    pub rank: Rank,
    pub grid: GridSpec,
    pub m: usize,
    pub values: Vec<f64>,
}

pub fn padded_size(n: usize) -> usize {
    3 * n / 2
}

pub fn pad(field: &SpectralField) -> PaddedReal {
    let n = field.grid.n;
    let m = padded_size(n);
    let mp = m * m * m;
    let mut values = vec![0.0; field.rank.ncomp() * mp];
    let mut buf = vec![Complex64::default(); mp];
    let b = field.grid.band();
    for c in 0..field.rank.ncomp() {
        for z in buf.iter_mut() {
            *z = Complex64::default();
        }
        let comp = field.comp(c);
        let mut idx = 0;
        for ix in 0..n {
            let kx = field.grid.wavenumber(ix);
            for iy in 0..n {
                let ky = field.grid.wavenumber(iy);
                for iz in 0..n {
                    let kz = field.grid.wavenumber(iz);
                    if kx.abs() <= b && ky.abs() <= b && kz.abs() <= b {
                        let jx = if kx >= 0 { kx as usize } else { (kx + m as i64) as usize };
                        let jy = if ky >= 0 { ky as usize } else { (ky + m as i64) as usize };
                        let jz = if kz >= 0 { kz as usize } else { (kz + m as i64) as usize };
                        buf[(jx * m + jy) * m + jz] = comp[idx];
                    }
                    idx += 1;
                }
            }
        }
        fft::coeffs_to_grid(&mut buf, m);
        for (v, z) in values[c * mp..(c + 1) * mp].iter_mut().zip(buf.iter()) {
            *v = z.re;
        }
    }
    PaddedReal { rank: field.rank, grid: field.grid, m, values }
}

impl PaddedReal {
    pub fn comp(&self, c: usize) -> &[f64] {
        let mp = self.m * self.m * self.m;
        &self.values[c * mp..(c + 1) * mp]
    }
}

/// Transforms padded-grid real samples back and truncates to the n-band.
fn unpad(rank: Rank, grid: GridSpec, m: usize, values: &[f64]) -> SpectralField {
    let n = grid.n;
    let mp = m * m * m;
    let b = grid.band();
    let mut out = SpectralField::zeros(grid, rank);
    let mut buf = vec![Complex64::default(); mp];
    for c in 0..rank.ncomp() {
        for (z, v) in buf.iter_mut().zip(values[c * mp..(c + 1) * mp].iter()) {
            *z = Complex64::new(*v, 0.0);
        }
        fft::grid_to_coeffs(&mut buf, m);
        let comp = out.comp_mut(c);
        for kx in -b..=b {
            let jx = if kx >= 0 { kx as usize } else { (kx + m as i64) as usize };
            let ix = if kx >= 0 { kx as usize } else { (kx + n as i64) as usize };
            for ky in -b..=b {
                let jy = if ky >= 0 { ky as usize } else { (ky + m as i64) as usize };
                let iy = if ky >= 0 { ky as usize } else { (ky + n as i64) as usize };
                for kz in -b..=b {
                    let jz = if kz >= 0 { kz as usize } else { (kz + m as i64) as usize };
                    let iz = if kz >= 0 { kz as usize } else { (kz + n as i64) as usize };
                    comp[(ix * n + iy) * n + iz] = buf[(jx * m + jy) * m + jz];
                }
            }
        }
    }
    out
}

/// Pointwise products of padded factors. Every product of two in-band fields
/// is alias-free in the retained band; modes beyond the band are truncated.
pub mod pw {
    use super::*;

    fn check(a: &PaddedReal, b: &PaddedReal) {
        assert_eq!(a.grid, b.grid, "grid mismatch in pointwise op");
        assert_eq!(a.m, b.m);
    }

    /// scalar × (scalar | vector | tensor) → same rank as `b`.
    pub fn product(a: &PaddedReal, b: &PaddedReal) -> SpectralField {
        check(a, b);
        assert_eq!(a.rank, Rank::Scalar, "product: first factor must be scalar");
        let mp = a.m * a.m * a.m;
        let mut values = vec![0.0; b.rank.ncomp() * mp];
        for c in 0..b.rank.ncomp() {
            let (av, bv) = (a.comp(0), b.comp(c));
            for (o, (x, y)) in values[c * mp..(c + 1) * mp].iter_mut().zip(av.iter().zip(bv)) {
                *o = x * y;
            }
        }
        unpad(b.rank, a.grid, a.m, &values)
    }

    /// vector · vector → scalar.
    pub fn dot(a: &PaddedReal, b: &PaddedReal) -> SpectralField {
        check(a, b);
        assert_eq!(a.rank, Rank::Vector3);
        assert_eq!(b.rank, Rank::Vector3);
        let mp = a.m * a.m * a.m;
        let mut values = vec![0.0; mp];
        for c in 0..3 {
            let (av, bv) = (a.comp(c), b.comp(c));
            for (o, (x, y)) in values.iter_mut().zip(av.iter().zip(bv)) {
                *o += x * y;
            }
        }
        unpad(Rank::Scalar, a.grid, a.m, &values)
    }

    /// vector ⊗ vector → tensor, (a⊗b)_{ij} = a_i b_j.
    pub fn tensor_product(a: &PaddedReal, b: &PaddedReal) -> SpectralField {
        check(a, b);
        assert_eq!(a.rank, Rank::Vector3);
        assert_eq!(b.rank, Rank::Vector3);
        let mp = a.m * a.m * a.m;
        let mut values = vec![0.0; 9 * mp];
        for i in 0..3 {
            for j in 0..3 {
                let c = tensor_comp(i, j);
                let (av, bv) = (a.comp(i), b.comp(j));
                for (o, (x, y)) in values[c * mp..(c + 1) * mp].iter_mut().zip(av.iter().zip(bv)) {
                    *o = x * y;
                }
            }
        }
        unpad(Rank::Tensor3x3, a.grid, a.m, &values)
    }

    /// a ⊗̂ b: traceless part of a ⊗ b.
    pub fn traceless_tensor_product(a: &PaddedReal, b: &PaddedReal) -> SpectralField {
        tensor_product(a, b).traceless()
    }
}

// ---------------------------------------------------------------------------
// Sparse spectral lines
// ---------------------------------------------------------------------------

/// Sparse coefficient list: (wavevector, value) pairs. Hermitian symmetry is
/// the caller's responsibility (lists built from real fields carry both ±k).
pub type SparseField = Vec<([i64; 3], Complex64)>;

/// trunc(dense · sparse): exact convolution of a dense in-band field with a
/// sparse coefficient list, truncated to the band. Identical to the padded
/// grid product when the sparse list is the full spectrum of its field.
pub fn shift_mul(dense: &SpectralField, entries: &SparseField) -> SpectralField {
    let grid = dense.grid;
    let n = grid.n as i64;
    let b = grid.band();
    let mut out = SpectralField::zeros(grid, dense.rank);
    let np = grid.points();
    for c in 0..dense.rank.ncomp() {
        let src = dense.comp(c);
        // out(k) = Σ_e v_e · dense(k − k_e)
        for (ke, ve) in entries {
            let dst = out.comp_mut(c);
            for kx in -b..=b {
                let sx = kx - ke[0];
                if sx.abs() > b {
                    continue;
                }
                let ox = (if kx >= 0 { kx } else { kx + n }) as usize;
                let ix = (if sx >= 0 { sx } else { sx + n }) as usize;
                for ky in -b..=b {
                    let sy = ky - ke[1];
                    if sy.abs() > b {
                        continue;
                    }
                    let oy = (if ky >= 0 { ky } else { ky + n }) as usize;
                    let iy = (if sy >= 0 { sy } else { sy + n }) as usize;
                    for kz in -b..=b {
                        let sz = kz - ke[2];
                        if sz.abs() > b {
                            continue;
                        }
                        let oz = (if kz >= 0 { kz } else { kz + n }) as usize;
                        let iz = (if sz >= 0 { sz } else { sz + n }) as usize;
                        let sval = src[(ix * grid.n + iy) * grid.n + iz];
                        if sval != Complex64::default() {
                            dst[(ox * grid.n + oy) * grid.n + oz] += ve * sval;
                        }
                    }
                }
            }
        }
        let _ = np;
    }
    out
}

/// ∂ of a sparse list along one axis: multiply each entry by i·k_axis.
pub fn sparse_partial(entries: &SparseField, axis: usize) -> SparseField {
    entries
        .iter()
        .map(|(k, v)| (*k, v * Complex64::new(0.0, k[axis] as f64)))
        .collect()
}

/// Directional derivative d·∇ of a sparse list.
pub fn sparse_dir_grad(entries: &SparseField, d: [f64; 3]) -> SparseField {
    entries
        .iter()
        .map(|(k, v)| {
            let kd = d[0] * k[0] as f64 + d[1] * k[1] as f64 + d[2] * k[2] as f64;
            (*k, v * Complex64::new(0.0, kd))
        })
        .collect()
}

/// Exact convolution of two sparse lists, truncated to the band.
pub fn sparse_convolve(a: &SparseField, b: &SparseField, grid: &GridSpec) -> SparseField {
    use std::collections::HashMap;
    let band = grid.band();
    let mut acc: HashMap<[i64; 3], Complex64> = HashMap::new();
    for (ka, va) in a {
        for (kb, vb) in b {
            let k = [ka[0] + kb[0], ka[1] + kb[1], ka[2] + kb[2]];
            if k.iter().all(|c| c.abs() <= band) {
                *acc.entry(k).or_default() += va * vb;
            }
        }
    }
    acc.into_iter().filter(|(_, v)| v.norm() > 0.0).map(|(k, v)| (k, v)).collect()
}

/// Materializes a sparse list as a scalar field.
pub fn sparse_to_field(entries: &SparseField, grid: GridSpec) -> SpectralField {
    let mut out = SpectralField::zeros(grid, Rank::Scalar);
    for (k, v) in entries {
        let cur = out.coeff(0, *k);
        let _ = out.set_coeff(0, *k, cur + v);
    }
    out
}

/// Outcome of a de-aliased pointwise operation together with the truncation
/// flag: true when the combined content exceeded the band, i.e. high product
/// modes were discarded.
pub struct PointwiseResult {
    pub field: SpectralField,
    pub aliased: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointwiseOp {
    Product,
    TensorProduct,
    TracelessTensorProduct,
    Contraction,
}

/// Convenience entry: pads both factors, applies the op, reports truncation.
pub fn pointwise(op: PointwiseOp, a: &SpectralField, b: &SpectralField) -> Result<PointwiseResult> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", a.grid, b.grid)));
    }
    let aliased = a.content(1e-13) + b.content(1e-13) > a.grid.band();
    let (pa, pb) = (pad(a), pad(b));
    let field = match op {
        PointwiseOp::Product => pw::product(&pa, &pb),
        PointwiseOp::TensorProduct => pw::tensor_product(&pa, &pb),
        PointwiseOp::TracelessTensorProduct => pw::traceless_tensor_product(&pa, &pb),
        PointwiseOp::Contraction => pw::dot(&pa, &pb),
    };
    Ok(PointwiseResult { field, aliased })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n, 2, 1.0).unwrap()
    }

    #[test]
    fn constant_field_single_mode() {
        let f = SpectralField::from_fn(grid(8), Rank::Scalar, |_, _| 1.0);
        assert_abs_diff_eq!(f.coeff(0, [0, 0, 0]).re, 1.0, epsilon = 1e-14);
        let mut rest = 0.0;
        for kx in -3i64..=3 {
            for ky in -3i64..=3 {
                for kz in -3i64..=3 {
                    if [kx, ky, kz] != [0, 0, 0] {
                        rest += f.coeff(0, [kx, ky, kz]).norm();
                    }
                }
            }
        }
        assert!(rest < 1e-13);
    }

    #[test]
    fn sine_mode_coefficients() {
        // sin(x₁) = (e^{ix₁} − e^{−ix₁})/(2i) → ∓i/2 at k = ±e₁
        let f = SpectralField::from_fn(grid(8), Rank::Scalar, |_, x| x[0].sin());
        assert_abs_diff_eq!(f.coeff(0, [1, 0, 0]).im, -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(f.coeff(0, [-1, 0, 0]).im, 0.5, epsilon = 1e-14);
        assert!(f.coeff(0, [1, 0, 0]).re.abs() < 1e-14);
    }

    #[test]
    fn roundtrip_random_field() {
        let f = SpectralField::random(grid(16), Rank::Vector3, 7, 1.0, 42);
        let back = f.to_grid().to_spectral();
        assert!(f.max_coeff_diff(&back) <= 1e-13 * f.max_coeff().max(1.0));
        assert!(f.max_imag_on_grid() <= 1e-13);
        assert!(f.hermitian_error() <= 1e-13);
    }

    #[test]
    fn derivative_of_sine() {
        let f = SpectralField::from_fn(grid(8), Rank::Scalar, |_, x| x[0].sin());
        let g = f.differentiate([1, 0, 0]);
        let expect = SpectralField::from_fn(grid(8), Rank::Scalar, |_, x| x[0].cos());
        assert!(g.max_coeff_diff(&expect) < 1e-13);
    }

    #[test]
    fn laplacian_scales_single_mode() {
        let mut f = SpectralField::zeros(grid(16), Rank::Scalar);
        f.add_mode(0, [2, 3, -1], Complex64::new(0.3, 0.1)).unwrap();
        let lap = f
            .differentiate([2, 0, 0])
            .add(&f.differentiate([0, 2, 0]))
            .add(&f.differentiate([0, 0, 2]));
        let expect = f.scale(-(4.0 + 9.0 + 1.0));
        assert!(lap.max_coeff_diff(&expect) < 1e-13);
    }

    #[test]
    fn parseval_matches_quadrature() {
        let f = SpectralField::random(grid(16), Rank::Scalar, 6, 1.5, 7);
        let quad = f.norm_lp(2.0);
        let pars = f.l2_coeff_norm();
        assert_abs_diff_eq!(quad, pars, epsilon = 1e-12 * pars.max(1.0));
    }

    #[test]
    fn norm_examples() {
        let one = SpectralField::from_fn(grid(8), Rank::Scalar, |_, _| 1.0);
        assert_abs_diff_eq!(one.norm_lp(2.0), 1.0, epsilon = 1e-13);
        let s = SpectralField::from_fn(grid(8), Rank::Scalar, |_, x| x[0].sin());
        assert_abs_diff_eq!(s.norm_lp(2.0), 0.5f64.sqrt(), epsilon = 1e-13);
        assert_abs_diff_eq!(s.norm_lp(f64::INFINITY), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn product_of_sines() {
        // sin²x₁ = (1 − cos 2x₁)/2
        let g = grid(16);
        let s = SpectralField::from_fn(g, Rank::Scalar, |_, x| x[0].sin());
        let got = pointwise(PointwiseOp::Product, &s, &s).unwrap();
        assert!(!got.aliased);
        let expect = SpectralField::from_fn(g, Rank::Scalar, |_, x| 0.5 * (1.0 - (2.0 * x[0]).cos()));
        assert!(got.field.max_coeff_diff(&expect) < 1e-13);
    }

    #[test]
    fn product_aliasing_flag() {
        let g = grid(8); // band 3
        let mut f = SpectralField::zeros(g, Rank::Scalar);
        f.add_mode(0, [3, 0, 0], Complex64::new(0.5, 0.0)).unwrap();
        let r = pointwise(PointwiseOp::Product, &f, &f).unwrap();
        assert!(r.aliased);
        // retained modes must still be exact: (cos 3x)² = ½ + ½cos6x → only k=0 in band
        assert_abs_diff_eq!(r.field.coeff(0, [0, 0, 0]).re, 0.5, epsilon = 1e-13);
        assert!(r.field.coeff(0, [2, 0, 0]).norm() < 1e-14);
    }

    #[test]
    fn tensor_product_of_constant_vectors() {
        let g = grid(8);
        let e1 = SpectralField::from_fn(g, Rank::Vector3, |c, _| if c == 0 { 1.0 } else { 0.0 });
        let e2 = SpectralField::from_fn(g, Rank::Vector3, |c, _| if c == 1 { 1.0 } else { 0.0 });
        let t = pointwise(PointwiseOp::TensorProduct, &e1, &e2).unwrap().field;
        let v = t.to_grid();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if (i, j) == (0, 1) { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(v.comp(tensor_comp(i, j))[5], expect, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn traceless_product_has_zero_trace() {
        let g = grid(16);
        let v = SpectralField::random(g, Rank::Vector3, 4, 1.0, 3);
        let t = pointwise(PointwiseOp::TracelessTensorProduct, &v, &v).unwrap().field;
        assert!(t.trace_error() <= 1e-13 * t.to_grid().max_abs().max(1.0));
    }

    #[test]
    fn mean_zero_examples() {
        let g = grid(8);
        let f = SpectralField::from_fn(g, Rank::Scalar, |_, x| x[0].sin() + 3.0);
        let mz = f.mean_zero();
        let expect = SpectralField::from_fn(g, Rank::Scalar, |_, x| x[0].sin());
        assert!(mz.max_coeff_diff(&expect) < 1e-13);
        let r = SpectralField::random(g, Rank::Scalar, 3, 1.0, 9).mean_zero();
        assert!(r.mean(0).norm() < 1e-15);
    }

    #[test]
    fn spectral_derivative_matches_fd_under_refinement() {
        // 2nd-order central differences on the grid must converge to the
        // spectral derivative at rate h².
        let mut errs = Vec::new();
        for &n in &[16usize, 32, 64] {
            let g = grid(n);
            let f = SpectralField::from_fn(g, Rank::Scalar, |_, x| {
                (x[0].sin() * (2.0 * x[1]).cos()).exp().sin()
            });
            let d = f.partial(0).to_grid();
            let v = f.to_grid();
            let h = 2.0 * std::f64::consts::PI / n as f64;
            let mut worst = 0.0f64;
            for ix in 0..n {
                for iy in 0..n {
                    for iz in 0..n {
                        let ip = ((ix + 1) % n * n + iy) * n + iz;
                        let im = ((ix + n - 1) % n * n + iy) * n + iz;
                        let fd = (v.comp(0)[ip] - v.comp(0)[im]) / (2.0 * h);
                        worst = worst.max((fd - d.comp(0)[(ix * n + iy) * n + iz]).abs());
                    }
                }
            }
            errs.push(worst);
        }
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
        assert!(errs[2] < errs[1] / 3.0, "{errs:?}");
    }
}
