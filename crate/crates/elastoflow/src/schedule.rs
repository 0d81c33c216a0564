//! Iteration parameter schedules.
//!
//! Paper mode keeps the full double-exponential frequency ladder
//! λ_q = a^{b^q}, δ_q = λ₁^{3β}λ_q^{−2β} symbolically and verifies the
//! parameter inequalities in exact rational arithmetic — those frequencies are
//! far beyond any grid. Desk mode carries explicit per-level (λ, σ, r, μ, δ, ℓ)
//! values, validated for grid feasibility, so that one or two steps of the
//! construction can actually be assembled and measured.

use crate::blocks::BlockParams;
use crate::error::{Error, Result};
use crate::exact::{rat, rat_int, to_f64, Rat};
use crate::geometry::DirectionFamily;
use crate::grid::GridSpec;
use num::{BigInt, One, Signed, Zero};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Paper,
    Desk,
}

/// Explicit parameters for one desk-mode level (the step q → q+1).
#[derive(Debug, Clone)]
pub struct LevelParams {
    pub block: BlockParams,
    /// Amplitude scale δ_{q+1} fed to the cutoff functions.
    pub delta: f64,
    /// Mollification length ℓ for this step.
    pub ell: f64,
}

#[derive(Debug, Clone)]
pub struct ParameterSchedule {
    pub mode: Mode,
    pub a: u64,
    pub b: u32,
    pub alpha: Rat,
    pub beta: Rat,
    /// Dissipation exponent θ ∈ [0,1).
    pub theta: Rat,
    /// Desk relaxation floor for μσ (1 recovers the strict μ > σ⁻¹ regime).
    pub mu_relax: f64,
    pub levels: Vec<LevelParams>,
}

/// θ_* = 2θ − 1 for θ > 1/2, else 0.
pub fn theta_star(theta: &Rat) -> Rat {
    let half = rat(1, 2);
    if theta > &half {
        theta * rat_int(2) - rat_int(1)
    } else {
        Rat::zero()
    }
}

/// One exact-rational parameter verdict.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl ParameterSchedule {
    pub fn desk(
        theta: Rat,
        mu_relax: f64,
        levels: Vec<LevelParams>,
    ) -> Result<Self> {
        if theta < Rat::zero() || theta >= Rat::one() {
            return Err(Error::InvalidParameter("θ must lie in [0,1)".into()));
        }
        for l in &levels {
            l.block.validate(mu_relax)?;
            if !(l.delta > 0.0) {
                return Err(Error::InvalidParameter("δ must be positive".into()));
            }
            if !(l.ell > 0.0) {
                return Err(Error::InvalidParameter("ℓ must be positive".into()));
            }
        }
        Ok(Self {
            mode: Mode::Desk,
            a: 0,
            b: 0,
            alpha: Rat::zero(),
            beta: Rat::zero(),
            theta,
            mu_relax,
            levels,
        })
    }

    pub fn paper(a: u64, b: u32, alpha: Rat, beta: Rat, theta: Rat) -> Result<Self> {
        let s = Self {
            mode: Mode::Paper,
            a,
            b,
            alpha,
            beta,
            theta,
            mu_relax: 1.0,
            levels: Vec::new(),
        };
        let checks = s.paper_checks();
        if let Some(fail) = checks.iter().find(|c| !c.pass) {
            return Err(Error::InvalidParameter(format!(
                "paper-mode parameters rejected: {} ({})",
                fail.name, fail.detail
            )));
        }
        Ok(s)
    }

    /// θ as f64 for the multiplier operators.
    pub fn theta_f64(&self) -> f64 {
        to_f64(&self.theta)
    }

    pub fn level(&self, q: usize) -> Result<&LevelParams> {
        self.levels.get(q).ok_or_else(|| {
            Error::InvalidParameter(format!("no desk parameters for level {q}"))
        })
    }

    /// All exact-rational parameter inequalities of the construction,
    /// evaluated without building any field:
    ///   θ ∈ [0,1);  0 < α ≤ (1−θ*)/8;  αb ∈ N;  αb > 800;  βb² ≤ 1/16;
    ///   the exponent-bookkeeping maximum equals −32/b;  −32/b ≤ −2βb;
    ///   and δ₁ = λ₁^β in exponent arithmetic.
    pub fn paper_checks(&self) -> Vec<ParamCheck> {
        let mut out = Vec::new();
        let b_rat = rat_int(self.b as i64);
        let ts = theta_star(&self.theta);

        let theta_ok = self.theta >= Rat::zero() && self.theta < Rat::one();
        out.push(ParamCheck {
            name: "theta_range".into(),
            pass: theta_ok,
            detail: format!("θ = {}", self.theta),
        });

        // 0 < α ≤ (1 − θ*)/8
        let alpha_cap = (Rat::one() - &ts) / rat_int(8);
        out.push(ParamCheck {
            name: "alpha_range".into(),
            pass: self.alpha > Rat::zero() && self.alpha <= alpha_cap.clone(),
            detail: format!("α = {}, cap (1−θ*)/8 = {}", self.alpha, alpha_cap),
        });

        // αb ∈ N and αb > 800
        let alpha_b = &self.alpha * &b_rat;
        out.push(ParamCheck {
            name: "alpha_b_integer".into(),
            pass: alpha_b.is_integer() && alpha_b.is_positive(),
            detail: format!("αb = {alpha_b}"),
        });
        out.push(ParamCheck {
            name: "alpha_b_exceeds_800".into(),
            pass: alpha_b > rat_int(800),
            detail: format!("αb = {alpha_b}"),
        });

        // βb² ≤ 1/16
        let beta_b2 = &self.beta * &b_rat * &b_rat;
        out.push(ParamCheck {
            name: "beta_b_squared".into(),
            pass: self.beta > Rat::zero() && beta_b2 <= rat(1, 16),
            detail: format!("βb² = {beta_b2}"),
        });

        // exponent bookkeeping: max{300/b − α/2, −4α, 120/b − 3α, −32/b} = −32/b
        let e1 = rat_int(300) / &b_rat - &self.alpha / rat_int(2);
        let e2 = -(&self.alpha * rat_int(4));
        let e3 = rat_int(120) / &b_rat - &self.alpha * rat_int(3);
        let e4 = -(rat_int(32) / &b_rat);
        let max = [&e1, &e2, &e3, &e4].iter().fold(e1.clone(), |m, x| {
            if **x > m {
                (*x).clone()
            } else {
                m
            }
        });
        out.push(ParamCheck {
            name: "stress_exponent_max".into(),
            pass: max == e4,
            detail: format!("max{{{e1}, {e2}, {e3}, {e4}}} = {max}"),
        });

        // −32/b ≤ −2βb so the collected stress bound closes the induction
        let rhs = -(rat_int(2) * &self.beta * &b_rat);
        out.push(ParamCheck {
            name: "stress_closes_induction".into(),
            pass: e4 <= rhs,
            detail: format!("−32/b = {e4} vs −2βb = {rhs}"),
        });

        // dissipation absorption: θ* − 1 + 4α ≤ −4α
        let lhs = &ts - Rat::one() + &self.alpha * rat_int(4);
        let rhs2 = -(&self.alpha * rat_int(4));
        out.push(ParamCheck {
            name: "dissipation_absorbed".into(),
            pass: lhs <= rhs2,
            detail: format!("θ*−1+4α = {lhs} vs −4α = {rhs2}"),
        });

        // δ-ladder sanity: δ₁ = λ₁^{3β}·λ₁^{−2β} = λ₁^β in exponents of a
        // (exponent of λ_q is b^q; exact BigInt arithmetic for small q)
        let bq = |q: u32| -> BigInt { BigInt::from(self.b).pow(q) };
        let d1 = rat_int(3) * &self.beta * Rat::from(bq(1))
            - rat_int(2) * &self.beta * Rat::from(bq(1));
        let expect = &self.beta * Rat::from(bq(1));
        out.push(ParamCheck {
            name: "delta_ladder_q1".into(),
            pass: d1 == expect,
            detail: format!("exp_a(δ₁) = {d1}, exp_a(λ₁^β) = {expect}"),
        });

        // δ decreasing along the ladder: exp(δ_{q+1}) < exp(δ_q) for q = 1..3
        let mut decreasing = true;
        for q in 1..4u32 {
            let eq = rat_int(3) * &self.beta * Rat::from(bq(1))
                - rat_int(2) * &self.beta * Rat::from(bq(q));
            let eq1 = rat_int(3) * &self.beta * Rat::from(bq(1))
                - rat_int(2) * &self.beta * Rat::from(bq(q + 1));
            decreasing &= eq1 < eq;
        }
        out.push(ParamCheck {
            name: "delta_ladder_decreasing".into(),
            pass: decreasing,
            detail: "exp_a(δ_q) strictly decreasing, q = 1..4".into(),
        });

        out
    }

    /// Paper-mode (λ, σ, r, μ) exponents of λ_{q+1} for display.
    pub fn paper_block_exponents(&self) -> [(String, Rat); 4] {
        let one = Rat::one();
        [
            ("lambda".into(), one.clone()),
            ("sigma".into(), -(one.clone() - rat_int(2) * &self.alpha)),
            ("r".into(), -(one.clone() - rat_int(6) * &self.alpha)),
            ("mu".into(), one - &self.alpha),
        ]
    }
}

/// Largest λσ (the sublattice stride divisor) the grid can hold for a family:
/// the single-harmonic pair of the widest frame must fit the band.
pub fn max_feasible_lam_sigma(family: &DirectionFamily, grid: &GridSpec) -> i64 {
    let n = BigInt::from(family.n_lambda);
    let worst = family
        .all_frames()
        .iter()
        .map(|f| {
            let score = |v: &crate::exact::Vec3R| -> i64 {
                v.iter()
                    .map(|x| {
                        let s = x * Rat::from(n.clone());
                        let i: i64 = s.to_integer().try_into().unwrap_or(i64::MAX);
                        i.abs()
                    })
                    .max()
                    .unwrap()
            };
            score(&f.xi) + score(&f.xi1)
        })
        .max()
        .unwrap_or(1);
    grid.band() / worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::builtin_family;

    #[test]
    fn paper_mode_accepts_valid_parameters() {
        // α = 1/16, b = 2¹⁴ ⇒ αb = 1024 > 800; β b² ≤ 1/16 needs β ≤ 2⁻³²
        let b = 1u32 << 14;
        let alpha = rat(1, 16);
        let beta = rat(1, 1u64.wrapping_shl(36) as i64);
        let s = ParameterSchedule::paper(100, b, alpha, beta, rat(1, 2)).unwrap();
        assert!(s.paper_checks().iter().all(|c| c.pass));
    }

    #[test]
    fn paper_mode_rejects_bad_parameters() {
        // αb = 512 ≤ 800
        let r = ParameterSchedule::paper(100, 1 << 13, rat(1, 16), rat(1, 1 << 30), rat(1, 2));
        assert!(r.is_err());
        // βb² > 1/16
        let r = ParameterSchedule::paper(100, 1 << 14, rat(1, 16), rat(1, 4), rat(1, 2));
        assert!(r.is_err());
        // α too large for θ = 3/4 (θ* = 1/2, cap = 1/16)
        let r = ParameterSchedule::paper(100, 1 << 18, rat(1, 8), rat(1, 1 << 40), rat(3, 4));
        assert!(r.is_err());
    }

    #[test]
    fn theta_star_branches() {
        assert_eq!(theta_star(&rat(1, 4)), rat_int(0));
        assert_eq!(theta_star(&rat(1, 2)), rat_int(0));
        assert_eq!(theta_star(&rat(3, 4)), rat(1, 2));
    }

    #[test]
    fn feasible_lambda_sigma_for_builtin_family() {
        let fam = builtin_family().unwrap();
        let g64 = GridSpec::new(64, 2, 1.0).unwrap();
        // worst frame content is 15 ⇒ λσ ≤ 31/15 = 2
        assert_eq!(max_feasible_lam_sigma(&fam, &g64), 2);
        let g32 = GridSpec::new(32, 2, 1.0).unwrap();
        assert_eq!(max_feasible_lam_sigma(&fam, &g32), 1);
    }

    #[test]
    fn desk_mode_validation() {
        let theta = rat(1, 2);
        let lvl = LevelParams {
            block: BlockParams {
                lambda: 2,
                sigma: rat(1, 2),
                r: rat(3, 4),
                mu: 4.0,
                n_lambda: 9,
            },
            delta: 0.2,
            ell: 0.1,
        };
        assert!(ParameterSchedule::desk(theta.clone(), 1.0, vec![lvl.clone()]).is_ok());
        let mut bad = lvl;
        bad.block.sigma = rat(2, 5);
        assert!(ParameterSchedule::desk(theta, 1.0, vec![bad]).is_err());
    }
}
