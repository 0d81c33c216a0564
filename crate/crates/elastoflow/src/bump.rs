//! The standard smooth bump exp(−1/(1−s²)) on (−1,1) and its Fourier
//! transforms, shared by the mollifiers and the oscillation profiles.

/// b(s) = exp(−1/(1−s²)) for |s| < 1, else 0.
pub fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// ∫_{−1}^{1} b(s) e^{−iωs} ds = 2∫₀¹ b(s) cos(ωs) ds (b is even, so the
/// transform is real). Composite Simpson; the integrand is C^∞ with all
/// derivatives vanishing at the endpoints, so convergence is superalgebraic.
pub fn bump_ft(omega: f64) -> f64 {
    const N: usize = 4096; // panels
    let h = 1.0 / N as f64;
    let f = |s: f64| bump(s) * (omega * s).cos();
    let mut acc = f(0.0) + f(1.0);
    for i in 1..N {
        let s = i as f64 * h;
        acc += if i % 2 == 1 { 4.0 * f(s) } else { 2.0 * f(s) };
    }
    2.0 * acc * h / 3.0
}

/// Fourier transform of the radial 3D bump b(|x|):
/// ∫_{R³} b(|x|) e^{−ik·x} dx = 4π ∫₀¹ s² b(s) sinc(ωs) ds, ω = |k|.
pub fn radial_bump_ft(omega: f64) -> f64 {
    const N: usize = 4096;
    let h = 1.0 / N as f64;
    let f = |s: f64| {
        let ws = omega * s;
        let sinc = if ws.abs() < 1e-8 { 1.0 - ws * ws / 6.0 } else { ws.sin() / ws };
        s * s * bump(s) * sinc
    };
    let mut acc = f(0.0) + f(1.0);
    for i in 1..N {
        let s = i as f64 * h;
        acc += if i % 2 == 1 { 4.0 * f(s) } else { 2.0 * f(s) };
    }
    4.0 * std::f64::consts::PI * acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_ft_at_zero_is_mass() {
        // ∫b ≈ 0.443993816168... (standard constant for exp(−1/(1−s²)))
        let m = bump_ft(0.0);
        assert!((m - 0.4439938161680786).abs() < 1e-12, "{m}");
    }

    #[test]
    fn bump_ft_decays() {
        assert!(bump_ft(40.0).abs() < 1e-3);
        assert!(bump_ft(40.0).abs() < bump_ft(10.0).abs());
        assert!(bump_ft(80.0).abs() < 1e-4 * bump_ft(0.0));
    }

    #[test]
    fn radial_ft_positive_mass() {
        let m = radial_bump_ft(0.0);
        assert!(m > 0.0);
        assert!(radial_bump_ft(30.0).abs() < m * 1e-2);
    }
}
