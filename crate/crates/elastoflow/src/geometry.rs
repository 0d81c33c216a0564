//! Rational direction families and the two matrix-representation lemmas.
//!
//! A `Frame` is an exactly orthonormal right-handed triple (ξ, ξ₁, ξ₂) in
//! S² ∩ Q³. The engine uses one family Λ_v of six frames to represent
//! symmetric matrices near Id as ½Σ γ_ξ(R)² ξ⊗ξ, and three pairwise disjoint
//! families Λ₁, Λ₂, Λ₃ to represent small skew matrices as
//! Σ γ_ξ(R)² (ξ₂⊗ξ − ξ⊗ξ₂). The coefficient maps take the form
//! γ_ξ = √(affine in R), solved once exactly over the rationals, so the
//! reconstruction identities hold to rounding on certified balls.

use crate::error::{Error, Result};
use crate::exact::{
    cross3, dot3, integrality_scale, invert, is_zero3, mat_vec, parallel, rat_int, sub3, to_f64,
    v3, vec3_f64, Rat, Vec3R,
};
use num::{BigInt, Signed, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Exactly orthonormal right-handed rational triple.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub xi: Vec3R,
    pub xi1: Vec3R,
    pub xi2: Vec3R,
}

impl Frame {
    pub fn new(xi: Vec3R, xi1: Vec3R, xi2: Vec3R) -> Result<Self> {
        let f = Self { xi, xi1, xi2 };
        f.check()?;
        Ok(f)
    }

    /// Orthonormality, and right-handedness ξ × ξ₁ = ξ₂, all exact.
    pub fn check(&self) -> Result<()> {
        let one = rat_int(1);
        for (name, v) in [("xi", &self.xi), ("xi1", &self.xi1), ("xi2", &self.xi2)] {
            if dot3(v, v) != one {
                return Err(Error::InvalidParameter(format!("{name} is not a unit vector")));
            }
        }
        if !dot3(&self.xi, &self.xi1).is_zero()
            || !dot3(&self.xi, &self.xi2).is_zero()
            || !dot3(&self.xi1, &self.xi2).is_zero()
        {
            return Err(Error::InvalidParameter("frame vectors not orthogonal".into()));
        }
        if !is_zero3(&sub3(&cross3(&self.xi, &self.xi1), &self.xi2)) {
            return Err(Error::InvalidParameter("frame is not right-handed".into()));
        }
        Ok(())
    }

    /// Smallest N with {Nξ, Nξ₁, Nξ₂} ⊂ Z³.
    pub fn integrality(&self) -> BigInt {
        let mut l = integrality_scale(&self.xi);
        l = num::integer::lcm(l, integrality_scale(&self.xi1));
        num::integer::lcm(l, integrality_scale(&self.xi2))
    }

    pub fn xi_f64(&self) -> [f64; 3] {
        vec3_f64(&self.xi)
    }

    pub fn xi1_f64(&self) -> [f64; 3] {
        vec3_f64(&self.xi1)
    }

    pub fn xi2_f64(&self) -> [f64; 3] {
        vec3_f64(&self.xi2)
    }

    /// Max |N·v|∞ over the oscillating directions ξ and ξ₁, for grid-content
    /// accounting (blocks never oscillate along ξ₂).
    fn content_score(&self, n_lambda: &BigInt) -> i64 {
        let comp_max = |v: &Vec3R| -> i64 {
            v.iter()
                .map(|x| {
                    let scaled = x * Rat::from(n_lambda.clone());
                    debug_assert!(scaled.is_integer());
                    scaled.to_integer().abs().try_into().unwrap_or(i64::MAX)
                })
                .max()
                .unwrap()
        };
        comp_max(&self.xi) + comp_max(&self.xi1)
    }
}

/// Affine-under-square-root coefficient data for one family: γ_ξ(R)² =
/// c_ξ + ⟨L_ξ, Δ⟩ where Δ is the deviation from the ball center.
#[derive(Debug, Clone)]
pub struct GammaMap {
    /// Base coefficients c_ξ (all strictly positive), exact.
    pub base: Vec<Rat>,
    /// Linear forms; symmetric case: 6 vech rows on (Δ₀₀,Δ₁₁,Δ₂₂,Δ₀₁,Δ₀₂,Δ₁₂);
    /// skew case: 6 rows on the axial vector of Δ.
    pub forms: Vec<Vec<Rat>>,
}

impl GammaMap {
    pub fn base_f64(&self) -> Vec<f64> {
        self.base.iter().map(to_f64).collect()
    }

    pub fn forms_f64(&self) -> Vec<Vec<f64>> {
        self.forms.iter().map(|r| r.iter().map(to_f64).collect()).collect()
    }

    fn min_base(&self) -> Rat {
        self.base.iter().cloned().fold(None, |m: Option<Rat>, c| match m {
            None => Some(c),
            Some(m) => Some(if c < m { c } else { m }),
        }).unwrap()
    }
}

/// The four certified direction families with their coefficient maps.
#[derive(Debug, Clone)]
pub struct DirectionFamily {
    pub lambda_v: Vec<Frame>,
    pub lambda_i: [Vec<Frame>; 3],
    /// Common integrality constant N_Λ.
    pub n_lambda: u32,
    /// Certified radius of the symmetric ball around Id (Frobenius).
    pub eps_v: f64,
    /// Certified radius of the skew ball around 0 (Frobenius).
    pub eps_f: f64,
    pub gamma_sym: GammaMap,
    pub gamma_skew: [GammaMap; 3],
}

/// vech layout used for symmetric 3×3 matrices.
fn vech(m: &[[f64; 3]; 3]) -> [f64; 6] {
    [m[0][0], m[1][1], m[2][2], m[0][1], m[0][2], m[1][2]]
}

/// Axial vector ω of a skew matrix (R x = ω × x).
pub fn axial(m: &[[f64; 3]; 3]) -> [f64; 3] {
    [m[2][1], m[0][2], m[1][0]]
}

fn frob(m: &[[f64; 3]; 3]) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

impl DirectionFamily {
    pub fn all_frames(&self) -> Vec<&Frame> {
        let mut v: Vec<&Frame> = self.lambda_v.iter().collect();
        for fam in &self.lambda_i {
            v.extend(fam.iter());
        }
        v
    }

    /// γ coefficients of Lemma-2.2 type: R symmetric with ‖R − Id‖_F ≤ ε_v,
    /// R = ½ Σ γ_ξ(R)² ξ⊗ξ over Λ_v.
    pub fn gamma_sym(&self, r: &[[f64; 3]; 3]) -> Result<Vec<f64>> {
        let mut delta = *r;
        for i in 0..3 {
            delta[i][i] -= 1.0;
        }
        let dist = frob(&delta);
        if dist > self.eps_v {
            return Err(Error::GammaDomain { got: dist, radius: self.eps_v });
        }
        let v = vech(&delta);
        let forms = self.gamma_sym.forms_f64();
        let base = self.gamma_sym.base_f64();
        let mut out = Vec::with_capacity(6);
        for m in 0..6 {
            // off-diagonal vech entries enter twice
            let lin: f64 = forms[m][0] * v[0]
                + forms[m][1] * v[1]
                + forms[m][2] * v[2]
                + forms[m][3] * v[3]
                + forms[m][4] * v[4]
                + forms[m][5] * v[5];
            let sq = base[m] + lin;
            if sq <= 0.0 {
                return Err(Error::GammaDomain { got: dist, radius: self.eps_v });
            }
            out.push(sq.sqrt());
        }
        Ok(out)
    }

    /// γ coefficients of Lemma-2.3 type for family Λ_i: R skew with
    /// ‖R‖_F ≤ ε_F, R = Σ γ_ξ(R)² (ξ₂⊗ξ − ξ⊗ξ₂).
    pub fn gamma_skew(&self, r: &[[f64; 3]; 3], i: usize) -> Result<Vec<f64>> {
        let dist = frob(r);
        if dist > self.eps_f {
            return Err(Error::GammaDomain { got: dist, radius: self.eps_f });
        }
        let w = axial(r);
        let forms = self.gamma_skew[i].forms_f64();
        let base = self.gamma_skew[i].base_f64();
        let mut out = Vec::with_capacity(6);
        for m in 0..6 {
            let sq = base[m] + forms[m][0] * w[0] + forms[m][1] * w[1] + forms[m][2] * w[2];
            if sq <= 0.0 {
                return Err(Error::GammaDomain { got: dist, radius: self.eps_f });
            }
            out.push(sq.sqrt());
        }
        Ok(out)
    }

    /// Reconstructs ½Σγ²ξ⊗ξ for a symmetric argument (test support).
    pub fn reconstruct_sym(&self, r: &[[f64; 3]; 3]) -> Result<[[f64; 3]; 3]> {
        let g = self.gamma_sym(r)?;
        let mut out = [[0.0; 3]; 3];
        for (m, f) in self.lambda_v.iter().enumerate() {
            let xi = f.xi_f64();
            for a in 0..3 {
                for b in 0..3 {
                    out[a][b] += 0.5 * g[m] * g[m] * xi[a] * xi[b];
                }
            }
        }
        Ok(out)
    }

    /// Reconstructs Σγ²(ξ₂⊗ξ − ξ⊗ξ₂) for a skew argument (test support).
    pub fn reconstruct_skew(&self, r: &[[f64; 3]; 3], i: usize) -> Result<[[f64; 3]; 3]> {
        let g = self.gamma_skew(r, i)?;
        let mut out = [[0.0; 3]; 3];
        for (m, f) in self.lambda_i[i].iter().enumerate() {
            let xi = f.xi_f64();
            let xi2 = f.xi2_f64();
            for a in 0..3 {
                for b in 0..3 {
                    out[a][b] += g[m] * g[m] * (xi2[a] * xi[b] - xi[a] * xi2[b]);
                }
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

/// All right-handed frames obtainable from one rotation matrix by cyclic
/// column permutations and paired sign flips.
fn frame_variants(cols: [Vec3R; 3]) -> Vec<Frame> {
    let neg = |v: &Vec3R| -> Vec3R { [-v[0].clone(), -v[1].clone(), -v[2].clone()] };
    let mut out = Vec::new();
    let perms: [[usize; 3]; 3] = [[0, 1, 2], [1, 2, 0], [2, 0, 1]];
    for p in perms {
        let (a, b, c) = (cols[p[0]].clone(), cols[p[1]].clone(), cols[p[2]].clone());
        // even sign patterns keep det = +1
        let signs: [[bool; 3]; 4] = [
            [false, false, false],
            [false, true, true],
            [true, false, true],
            [true, true, false],
        ];
        for s in signs {
            let xi = if s[0] { neg(&a) } else { a.clone() };
            let xi1 = if s[1] { neg(&b) } else { b.clone() };
            let xi2 = if s[2] { neg(&c) } else { c.clone() };
            if let Ok(f) = Frame::new(xi, xi1, xi2) {
                out.push(f);
            }
        }
        // swapped pair; the cross product restores right-handedness
        for s in signs {
            let xi = if s[0] { neg(&b) } else { b.clone() };
            let xi1 = if s[1] { neg(&a) } else { a.clone() };
            let xi2 = cross3(&xi, &xi1);
            if let Ok(f) = Frame::new(xi, xi1, xi2) {
                out.push(f);
            }
        }
    }
    out
}

/// Rotation matrix columns of a Lipschitz quaternion (a,b,c,d), denominator
/// |q|² = a² + b² + c² + d².
fn quaternion_columns(q: [i64; 4]) -> [Vec3R; 3] {
    let [a, b, c, d] = q;
    let n = a * a + b * b + c * c + d * d;
    let c1 = v3(a * a + b * b - c * c - d * d, 2 * (b * c + a * d), 2 * (b * d - a * c), n);
    let c2 = v3(2 * (b * c - a * d), a * a - b * b + c * c - d * d, 2 * (c * d + a * b), n);
    let c3 = v3(2 * (b * d + a * c), 2 * (c * d - a * b), a * a - b * b - c * c + d * d, n);
    [c1, c2, c3]
}

/// Candidate frames whose integrality constant divides `n_target`.
fn candidate_pool(n_target: i64) -> Vec<Frame> {
    let mut pool: Vec<Frame> = Vec::new();
    let target = BigInt::from(n_target);
    let mut push_unique = |f: Frame| {
        if (&target % f.integrality()).is_zero() && !pool.contains(&f) {
            pool.push(f);
        }
    };
    // enumerate quaternions with norm² dividing n_target (norm² ∈ {1,3,9,...})
    let bound = (n_target as f64).sqrt() as i64 + 1;
    for a in 0..=bound {
        for b in -bound..=bound {
            for c in -bound..=bound {
                for d in -bound..=bound {
                    let n = a * a + b * b + c * c + d * d;
                    if n == 0 || n_target % n != 0 {
                        continue;
                    }
                    for f in frame_variants(quaternion_columns([a, b, c, d])) {
                        push_unique(f);
                    }
                }
            }
        }
    }
    pool
}

/// Builds the symmetric γ map for six frames; requires {ξ⊗ξ} to be a basis
/// of Sym(3) and the Id-coordinates to be strictly positive.
fn build_gamma_sym(frames: &[Frame]) -> Option<GammaMap> {
    debug_assert_eq!(frames.len(), 6);
    // G columns: vech of ½ ξ⊗ξ with off-diagonals doubled so that
    // G·γ² = vech(R) encodes ½Σγ²ξ⊗ξ = R entrywise.
    let mut g = vec![vec![Rat::zero(); 6]; 6];
    for (m, f) in frames.iter().enumerate() {
        let xi = &f.xi;
        let half = crate::exact::rat(1, 2);
        let entries = [
            (&xi[0] * &xi[0], 0usize),
            (&xi[1] * &xi[1], 1),
            (&xi[2] * &xi[2], 2),
            (&xi[0] * &xi[1], 3),
            (&xi[0] * &xi[2], 4),
            (&xi[1] * &xi[2], 5),
        ];
        for (val, row) in entries {
            g[row][m] = &half * &val;
        }
    }
    let inv = invert(&g)?;
    // base: coordinates of Id → vech (1,1,1,0,0,0)
    let id = vec![rat_int(1), rat_int(1), rat_int(1), Rat::zero(), Rat::zero(), Rat::zero()];
    let base = mat_vec(&inv, &id);
    if base.iter().any(|c| !c.is_positive()) {
        return None;
    }
    // forms: rows of G⁻¹, acting on vech(Δ) with each off-diagonal once
    let forms = inv;
    Some(GammaMap { base, forms })
}

/// Builds one skew γ map: base from the exact positive nullspace combination,
/// forms from the exact pseudo-inverse of M = [−ξ₁ columns].
fn build_gamma_skew(frames: &[Frame]) -> Option<GammaMap> {
    debug_assert_eq!(frames.len(), 6);
    // M: 3×6, columns −ξ₁ (the axial vector of ξ₂⊗ξ − ξ⊗ξ₂)
    let mut m = vec![vec![Rat::zero(); 6]; 3];
    for (j, f) in frames.iter().enumerate() {
        for r in 0..3 {
            m[r][j] = -f.xi1[r].clone();
        }
    }
    // MMᵀ (3×3) and its inverse
    let mut mmt = vec![vec![Rat::zero(); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let mut s = Rat::zero();
            for j in 0..6 {
                s += &m[r][j] * &m[c][j];
            }
            mmt[r][c] = s;
        }
    }
    let mmt_inv = invert(&mmt)?;
    // forms: rows of Mᵀ(MMᵀ)⁻¹, i.e. form_j = Σ_r M_{r,j}·(MMᵀ)⁻¹ row r
    let mut forms = Vec::with_capacity(6);
    for j in 0..6 {
        let mut row = vec![Rat::zero(); 3];
        for (c, rv) in row.iter_mut().enumerate() {
            let mut s = Rat::zero();
            for r in 0..3 {
                s += &m[r][j] * &mmt_inv[r][c];
            }
            *rv = s;
        }
        forms.push(row);
    }
    // base: projection of the all-ones vector onto null(M):
    // c = 1 − Mᵀ(MMᵀ)⁻¹M·1, strictly positive required
    let ones = vec![rat_int(1); 6];
    let m1 = mat_vec(&m, &ones); // 3-vector
    let corr = mat_vec(&mmt_inv, &m1); // 3-vector
    let mut base = Vec::with_capacity(6);
    for j in 0..6 {
        let mut s = rat_int(1);
        for r in 0..3 {
            let t = &m[r][j] * &corr[r];
            s -= t;
        }
        if !s.is_positive() {
            return None;
        }
        base.push(s);
    }
    Some(GammaMap { base, forms })
}

/// Certified ε: the largest radius on which every γ² stays ≥ c_min/2,
/// computed from the forms' norms. `arg_scale` converts the ball's Frobenius
/// radius into a bound on the form argument (1 for vech with doubled
/// off-diagonals handled inside, 1/√2 for axial vectors).
fn certify_eps(map: &GammaMap, skew: bool) -> f64 {
    let c_min = to_f64(&map.min_base());
    let mut eps = f64::INFINITY;
    for (m, row) in map.forms.iter().enumerate() {
        let c = to_f64(&map.base[m]);
        // ‖L‖: dual norm of the linear form against the Frobenius ball
        let norm = if skew {
            // |m·ω| ≤ |m|·|ω|, ‖R‖_F = √2 |ω|
            let l2: f64 = row.iter().map(|x| to_f64(x).powi(2)).sum();
            l2.sqrt() / std::f64::consts::SQRT_2
        } else {
            // stored row acts on vech with off-diagonals once but those carry
            // weight 2 in the form; Frobenius dual: √(Σ diag² + Σ off²/2)
            let r: Vec<f64> = row.iter().map(to_f64).collect();
            (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]
                + (r[3] * r[3] + r[4] * r[4] + r[5] * r[5]) / 2.0)
                .sqrt()
        };
        if norm > 0.0 {
            eps = eps.min((c - c_min / 2.0) / norm);
        }
    }
    eps
}

/// Seeded construction of the full direction family with N_Λ = 9. Greedy
/// randomized selection with restarts; falls back to the compiled-in table
/// when the search budget is exhausted.
pub fn build_families(seed: u64) -> Result<DirectionFamily> {
    match search_families(seed, 9, 200) {
        Ok(f) => Ok(f),
        Err(_) => builtin_family(),
    }
}

pub fn search_families(seed: u64, n_lambda: i64, restarts: usize) -> Result<DirectionFamily> {
    let pool = candidate_pool(n_lambda);
    let n_big = BigInt::from(n_lambda);
    // prefer frames with small oscillating content
    let mut scored: Vec<(i64, Frame)> =
        pool.into_iter().map(|f| (f.content_score(&n_big), f)).collect();
    scored.sort_by_key(|(s, _)| *s);

    for attempt in 0..restarts {
        let candidates: Vec<&Frame> = if attempt == 0 {
            scored.iter().map(|(_, f)| f).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
            let mut idx: Vec<usize> = (0..scored.len()).collect();
            idx.shuffle(&mut rng);
            // stable-sort shuffled indices by a coarsened score so low-content
            // frames stay early while the order within bands varies per seed
            idx.sort_by_key(|&i| scored[i].0 / 2);
            idx.into_iter().map(|i| &scored[i].1).collect()
        };
        if let Some(fam) = try_select(&candidates, n_lambda as u32) {
            return Ok(fam);
        }
    }
    Err(Error::FamilySearchExhausted(restarts))
}

/// Rank over Q of the span of {vech(ξ⊗ξ)} for the given frames.
fn dyad_rank(frames: &[Frame]) -> usize {
    let mut rows: Vec<Vec<Rat>> = frames
        .iter()
        .map(|f| {
            let xi = &f.xi;
            vec![
                &xi[0] * &xi[0],
                &xi[1] * &xi[1],
                &xi[2] * &xi[2],
                &xi[0] * &xi[1],
                &xi[0] * &xi[2],
                &xi[1] * &xi[2],
            ]
        })
        .collect();
    let mut rank = 0;
    for col in 0..6 {
        if let Some(p) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) {
            rows.swap(rank, p);
            let pv = rows[rank][col].clone();
            for r in 0..rows.len() {
                if r != rank && !rows[r][col].is_zero() {
                    let f = &rows[r][col] / &pv;
                    for c2 in 0..6 {
                        let sub = &f * &rows[rank][c2];
                        rows[r][c2] = &rows[r][c2] - &sub;
                    }
                }
            }
            rank += 1;
        }
    }
    rank
}

/// One greedy selection pass over an ordered candidate list.
fn try_select(candidates: &[&Frame], n_lambda: u32) -> Option<DirectionFamily> {
    let ok_against = |f: &Frame, chosen: &[Frame]| -> bool {
        chosen.iter().all(|g| !parallel(&f.xi, &g.xi) && !parallel(&f.xi1, &g.xi1))
    };

    let mut chosen: Vec<Frame> = Vec::new();
    // Λ_v: grow keeping the dyads linearly independent, then demand positive
    // Id-coordinates
    let mut lambda_v: Vec<Frame> = Vec::new();
    for f in candidates {
        if lambda_v.len() == 6 {
            break;
        }
        if !ok_against(f, &chosen) {
            continue;
        }
        let mut trial = lambda_v.clone();
        trial.push((*f).clone());
        if dyad_rank(&trial) == trial.len() {
            lambda_v = trial;
            chosen.push((*f).clone());
        }
    }
    if lambda_v.len() != 6 {
        return None;
    }
    let gamma_sym = build_gamma_sym(&lambda_v)?;

    let mut lambda_i: [Vec<Frame>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut gamma_skew: Vec<GammaMap> = Vec::new();
    for i in 0..3 {
        for f in candidates {
            if lambda_i[i].len() == 6 {
                break;
            }
            if !ok_against(f, &chosen) {
                continue;
            }
            lambda_i[i].push((*f).clone());
            chosen.push((*f).clone());
        }
        if lambda_i[i].len() != 6 {
            return None;
        }
        gamma_skew.push(build_gamma_skew(&lambda_i[i])?);
    }

    let eps_v = certify_eps(&gamma_sym, false);
    let eps_f = gamma_skew.iter().map(|g| certify_eps(g, true)).fold(f64::INFINITY, f64::min);
    if !(eps_v > 0.0 && eps_f > 0.0) {
        return None;
    }
    let fam = DirectionFamily {
        lambda_v,
        lambda_i,
        n_lambda,
        eps_v,
        eps_f,
        gamma_sym,
        gamma_skew: match gamma_skew.try_into() {
            Ok(a) => a,
            Err(_) => return None,
        },
    };
    verify_invariants(&fam).ok()?;
    Some(fam)
}

/// Exact-rational invariant suite; all checks are hard failures.
pub fn verify_invariants(fam: &DirectionFamily) -> Result<()> {
    let frames = fam.all_frames();
    if fam.lambda_v.len() != 6 || fam.lambda_i.iter().any(|l| l.len() != 6) {
        return Err(Error::InvalidParameter("family sizes must be 6/6/6/6".into()));
    }
    let n_big = BigInt::from(fam.n_lambda);
    for f in &frames {
        f.check()?;
        if !(&n_big % f.integrality()).is_zero() {
            return Err(Error::InvalidParameter(format!(
                "frame integrality {} does not divide N_Λ = {}",
                f.integrality(),
                fam.n_lambda
            )));
        }
    }
    for (a, fa) in frames.iter().enumerate() {
        for fb in frames.iter().skip(a + 1) {
            if parallel(&fa.xi, &fb.xi) {
                return Err(Error::InvalidParameter("parallel ξ pair across frames".into()));
            }
            if parallel(&fa.xi1, &fb.xi1) {
                return Err(Error::InvalidParameter("parallel ξ₁ pair across frames".into()));
            }
        }
    }
    for c in &fam.gamma_sym.base {
        if !c.is_positive() {
            return Err(Error::InvalidParameter("non-positive symmetric base coefficient".into()));
        }
    }
    for g in &fam.gamma_skew {
        for c in &g.base {
            if !c.is_positive() {
                return Err(Error::InvalidParameter("non-positive skew base coefficient".into()));
            }
        }
    }
    if !(fam.eps_v > 0.0 && fam.eps_f > 0.0) {
        return Err(Error::InvalidParameter("non-positive certified radius".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Exact-rational text table (export/import, reproducible bit-exactly)
// ---------------------------------------------------------------------------

fn vec_to_text(v: &Vec3R) -> String {
    v.iter().map(|x| format!("{}/{}", x.numer(), x.denom())).collect::<Vec<_>>().join(" ")
}

fn vec_from_text(tokens: &[&str]) -> Result<Vec3R> {
    if tokens.len() != 3 {
        return Err(Error::Format("expected 3 rational entries".into()));
    }
    let mut out = Vec::with_capacity(3);
    for t in tokens {
        let (n, d) = t
            .split_once('/')
            .ok_or_else(|| Error::Format(format!("bad rational '{t}'")))?;
        let n: BigInt = n.parse().map_err(|_| Error::Format(format!("bad numerator '{n}'")))?;
        let d: BigInt = d.parse().map_err(|_| Error::Format(format!("bad denominator '{d}'")))?;
        if d.is_zero() {
            return Err(Error::Format("zero denominator".into()));
        }
        out.push(Rat::new(n, d));
    }
    Ok([out[0].clone(), out[1].clone(), out[2].clone()])
}

/// Serializes the family as an exact-rational text table. The orientation
/// convention (ξ × ξ₁ = ξ₂, right-handed) is recorded in the header.
pub fn export_table(fam: &DirectionFamily) -> String {
    let mut s = String::new();
    s.push_str("# direction family table; exact rationals num/den\n");
    s.push_str("# orientation: right-handed, xi x xi1 = xi2\n");
    s.push_str(&format!("n_lambda {}\n", fam.n_lambda));
    let mut dump = |name: &str, frames: &[Frame]| {
        for f in frames {
            s.push_str(&format!(
                "{name} {} | {} | {}\n",
                vec_to_text(&f.xi),
                vec_to_text(&f.xi1),
                vec_to_text(&f.xi2)
            ));
        }
    };
    dump("v", &fam.lambda_v);
    dump("i1", &fam.lambda_i[0]);
    dump("i2", &fam.lambda_i[1]);
    dump("i3", &fam.lambda_i[2]);
    s
}

/// Parses a table produced by `export_table` and rebuilds all coefficient
/// maps and certified radii from scratch.
pub fn import_table(text: &str) -> Result<DirectionFamily> {
    let mut n_lambda: Option<u32> = None;
    let mut lambda_v = Vec::new();
    let mut lambda_i: [Vec<Frame>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("n_lambda") {
            n_lambda = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| Error::Format("bad n_lambda".into()))?,
            );
            continue;
        }
        let (tag, rest) = line.split_once(' ').ok_or_else(|| Error::Format("bad line".into()))?;
        let parts: Vec<&str> = rest.split('|').map(|p| p.trim()).collect();
        if parts.len() != 3 {
            return Err(Error::Format("expected 'xi | xi1 | xi2'".into()));
        }
        let xi = vec_from_text(&parts[0].split_whitespace().collect::<Vec<_>>())?;
        let xi1 = vec_from_text(&parts[1].split_whitespace().collect::<Vec<_>>())?;
        let xi2 = vec_from_text(&parts[2].split_whitespace().collect::<Vec<_>>())?;
        let f = Frame::new(xi, xi1, xi2)?;
        match tag {
            "v" => lambda_v.push(f),
            "i1" => lambda_i[0].push(f),
            "i2" => lambda_i[1].push(f),
            "i3" => lambda_i[2].push(f),
            _ => return Err(Error::Format(format!("unknown tag '{tag}'"))),
        }
    }
    let n_lambda = n_lambda.ok_or_else(|| Error::Format("missing n_lambda".into()))?;
    let gamma_sym =
        build_gamma_sym(&lambda_v).ok_or_else(|| Error::Format("Λ_v dyads do not form a basis".into()))?;
    let mut gamma_skew = Vec::new();
    for l in &lambda_i {
        gamma_skew.push(
            build_gamma_skew(l).ok_or_else(|| Error::Format("Λ_i fails positive spanning".into()))?,
        );
    }
    let eps_v = certify_eps(&gamma_sym, false);
    let eps_f = gamma_skew.iter().map(|g| certify_eps(g, true)).fold(f64::INFINITY, f64::min);
    let fam = DirectionFamily {
        lambda_v,
        lambda_i,
        n_lambda,
        eps_v,
        eps_f,
        gamma_sym,
        gamma_skew: gamma_skew.try_into().map_err(|_| Error::Format("bad family".into()))?,
    };
    verify_invariants(&fam)?;
    Ok(fam)
}

/// Compiled-in fallback table (found by the seeded search, then frozen).
pub fn builtin_family() -> Result<DirectionFamily> {
    import_table(BUILTIN_TABLE)
}

pub const BUILTIN_TABLE: &str = include_str!("builtin_family.txt");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quaternion_frames_are_orthonormal() {
        for q in [[1i64, 1, 1, 0], [2, 2, 1, 0], [1, 0, 0, 0], [2, 1, 2, 0]] {
            let cols = quaternion_columns(q);
            for f in frame_variants(cols) {
                f.check().unwrap();
            }
        }
    }

    #[test]
    fn builtin_family_verifies() {
        let fam = builtin_family().unwrap();
        verify_invariants(&fam).unwrap();
        assert_eq!(fam.n_lambda, 9);
        // all 72 scaled vectors integral
        let n = BigInt::from(fam.n_lambda);
        for f in fam.all_frames() {
            assert!((&n % f.integrality()).is_zero());
        }
    }

    #[test]
    fn sym_reconstruction_at_id_and_nearby() {
        let fam = builtin_family().unwrap();
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let rec = fam.reconstruct_sym(&id).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert!((rec[a][b] - id[a][b]).abs() < 1e-13, "{rec:?}");
            }
        }
        // perturbed target inside the ball
        let e = fam.eps_v / 2.0;
        let mut r = id;
        r[0][0] += e / 2.0f64.sqrt();
        r[1][1] -= e / 2.0f64.sqrt();
        let rec = fam.reconstruct_sym(&r).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert!((rec[a][b] - r[a][b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn skew_reconstruction_center_and_nearby() {
        let fam = builtin_family().unwrap();
        let zero = [[0.0; 3]; 3];
        for i in 0..3 {
            let rec = fam.reconstruct_skew(&zero, i).unwrap();
            for row in rec {
                for v in row {
                    assert!(v.abs() < 1e-13);
                }
            }
            let g0 = fam.gamma_skew(&zero, i).unwrap();
            assert!(g0.iter().all(|&g| g > 0.0));
            // R = ε_F/2 · (e₁⊗e₂ − e₂⊗e₁)
            let s = fam.eps_f / 2.0 / 2.0f64.sqrt();
            let mut r = [[0.0; 3]; 3];
            r[0][1] = s;
            r[1][0] = -s;
            let rec = fam.reconstruct_skew(&r, i).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    assert!((rec[a][b] - r[a][b]).abs() < 1e-12, "i={i} {rec:?}");
                }
            }
        }
    }

    #[test]
    fn reconstruction_on_sampled_balls() {
        use rand::Rng;
        let fam = builtin_family().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            // random symmetric in the ε_v ball around Id
            let mut d = [[0.0f64; 3]; 3];
            for a in 0..3 {
                for b in a..3 {
                    let x = rng.gen_range(-1.0..1.0);
                    d[a][b] = x;
                    d[b][a] = x;
                }
            }
            let norm = frob(&d);
            let scale = rng.gen_range(0.0..0.999) * fam.eps_v / norm;
            let mut r = [[0.0f64; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    r[a][b] = d[a][b] * scale + if a == b { 1.0 } else { 0.0 };
                }
            }
            let rec = fam.reconstruct_sym(&r).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    assert!((rec[a][b] - r[a][b]).abs() <= 1e-12);
                }
            }
            // random skew in the ε_F ball
            let w: [f64; 3] =
                [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let wn = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
            let s = rng.gen_range(0.0..0.999) * fam.eps_f / (2.0f64.sqrt() * wn);
            let sk = [
                [0.0, -w[2] * s, w[1] * s],
                [w[2] * s, 0.0, -w[0] * s],
                [-w[1] * s, w[0] * s, 0.0],
            ];
            for i in 0..3 {
                let rec = fam.reconstruct_skew(&sk, i).unwrap();
                for a in 0..3 {
                    for b in 0..3 {
                        assert!((rec[a][b] - sk[a][b]).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn gamma_squared_is_affine_fd_oracle() {
        // second finite difference of γ² along any direction must vanish;
        // first FD derivative of γ must match L/(2γ)
        let fam = builtin_family().unwrap();
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let mut dir = [[0.0f64; 3]; 3];
        dir[0][1] = 0.6;
        dir[1][0] = 0.6;
        dir[2][2] = -0.4;
        let at = |s: f64| -> Vec<f64> {
            let mut r = id;
            for a in 0..3 {
                for b in 0..3 {
                    r[a][b] += s * dir[a][b];
                }
            }
            fam.gamma_sym(&r).unwrap()
        };
        // second difference of the exactly-affine γ²: a large step avoids
        // rounding amplification without any truncation penalty
        let h2 = 1e-2 * fam.eps_v;
        let (qm, q0, qp) = (at(-h2), at(0.0), at(h2));
        for m in 0..6 {
            let second = (qp[m] * qp[m] - 2.0 * q0[m] * q0[m] + qm[m] * qm[m]) / (h2 * h2);
            assert!(second.abs() < 1e-8, "second FD of γ² = {second}");
        }
        // gradient of γ itself: small step, compared against L/(2γ)
        let h = 1e-5;
        let (gm, g0, gp) = (at(-h), at(0.0), at(h));
        for m in 0..6 {
            let fd = (gp[m] - gm[m]) / (2.0 * h);
            let forms = fam.gamma_sym.forms_f64();
            let lin = forms[m][0] * dir[0][0]
                + forms[m][1] * dir[1][1]
                + forms[m][2] * dir[2][2]
                + forms[m][3] * dir[0][1]
                + forms[m][4] * dir[0][2]
                + forms[m][5] * dir[1][2];
            let exact = lin / (2.0 * g0[m]);
            assert!((fd - exact).abs() < 1e-8 * exact.abs().max(1.0), "fd {fd} vs {exact}");
        }
    }

    #[test]
    fn rejects_outside_ball() {
        let fam = builtin_family().unwrap();
        let mut r = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        r[0][0] += 2.0 * fam.eps_v;
        assert!(matches!(fam.gamma_sym(&r), Err(Error::GammaDomain { .. })));
    }

    #[test]
    fn duplicated_xi1_fails_verification() {
        let mut fam = builtin_family().unwrap();
        // force a duplicate ξ₁ across two frames
        let f0 = fam.lambda_v[0].clone();
        let donor = fam.lambda_i[0][0].clone();
        fam.lambda_i[0][0] = Frame { xi: donor.xi.clone(), xi1: f0.xi1.clone(), xi2: donor.xi2.clone() };
        assert!(verify_invariants(&fam).is_err());
    }

    #[test]
    fn export_import_roundtrip() {
        let fam = builtin_family().unwrap();
        let text = export_table(&fam);
        let back = import_table(&text).unwrap();
        assert_eq!(back.n_lambda, fam.n_lambda);
        assert_eq!(back.lambda_v, fam.lambda_v);
        assert_eq!(back.lambda_i, fam.lambda_i);
        assert_eq!(back.eps_v, fam.eps_v);
    }

    #[test]
    fn eps_margin_positive_on_boundary_scan() {
        // min γ² over sampled ball boundary stays ≥ c_min/2 (certification)
        use rand::Rng;
        let fam = builtin_family().unwrap();
        let c_min: f64 = fam.gamma_sym.base_f64().iter().cloned().fold(f64::INFINITY, f64::min);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst = f64::INFINITY;
        for _ in 0..500 {
            let mut d = [[0.0f64; 3]; 3];
            for a in 0..3 {
                for b in a..3 {
                    let x: f64 = rng.gen_range(-1.0..1.0);
                    d[a][b] = x;
                    d[b][a] = x;
                }
            }
            let s = fam.eps_v / frob(&d);
            let mut r = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            for a in 0..3 {
                for b in 0..3 {
                    r[a][b] += d[a][b] * s;
                }
            }
            if let Ok(g) = fam.gamma_sym(&r) {
                for gm in g {
                    worst = worst.min(gm * gm);
                }
            }
        }
        assert!(worst >= c_min / 2.0 - 1e-12, "worst γ² = {worst}, c_min/2 = {}", c_min / 2.0);
    }
}
