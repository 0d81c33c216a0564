//! Minimal exact-rational linear algebra used by the direction-family
//! construction; everything here is arbitrary precision, no floating point.

use num::{BigInt, BigRational, Signed, Zero};

pub type Rat = BigRational;

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from(BigInt::from(n))
}

pub type Vec3R = [Rat; 3];

pub fn v3(a: i64, b: i64, c: i64, den: i64) -> Vec3R {
    [rat(a, den), rat(b, den), rat(c, den)]
}

pub fn dot3(a: &Vec3R, b: &Vec3R) -> Rat {
    &a[0] * &b[0] + &a[1] * &b[1] + &a[2] * &b[2]
}

pub fn cross3(a: &Vec3R, b: &Vec3R) -> Vec3R {
    [
        &a[1] * &b[2] - &a[2] * &b[1],
        &a[2] * &b[0] - &a[0] * &b[2],
        &a[0] * &b[1] - &a[1] * &b[0],
    ]
}

pub fn sub3(a: &Vec3R, b: &Vec3R) -> Vec3R {
    [&a[0] - &b[0], &a[1] - &b[1], &a[2] - &b[2]]
}

pub fn is_zero3(a: &Vec3R) -> bool {
    a.iter().all(|x| x.is_zero())
}

/// Two nonzero vectors are parallel iff their cross product vanishes.
pub fn parallel(a: &Vec3R, b: &Vec3R) -> bool {
    is_zero3(&cross3(a, b))
}

pub fn to_f64(r: &Rat) -> f64 {
    let num = r.numer();
    let den = r.denom();
    // exact for the small numerators/denominators used here
    bigint_to_f64(num) / bigint_to_f64(den)
}

fn bigint_to_f64(b: &BigInt) -> f64 {
    let s = b.to_string();
    s.parse::<f64>().unwrap()
}

pub fn vec3_f64(v: &Vec3R) -> [f64; 3] {
    [to_f64(&v[0]), to_f64(&v[1]), to_f64(&v[2])]
}

/// Smallest positive integer N with N·v ∈ Z³.
pub fn integrality_scale(v: &Vec3R) -> BigInt {
    let mut l = BigInt::from(1);
    for x in v {
        l = num::integer::lcm(l, x.denom().abs());
    }
    l
}

/// Solves A x = b exactly by Gauss elimination with exact pivoting.
/// Returns None when A is singular.
pub fn solve(a: &[Vec<Rat>], b: &[Rat]) -> Option<Vec<Rat>> {
    let n = a.len();
    debug_assert!(a.iter().all(|row| row.len() == n));
    debug_assert_eq!(b.len(), n);
    let mut m: Vec<Vec<Rat>> = a.to_vec();
    let mut rhs: Vec<Rat> = b.to_vec();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let p = m[col][col].clone();
        for x in m[col].iter_mut() {
            *x = &*x / &p;
        }
        rhs[col] = &rhs[col] / &p;
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c2 in 0..n {
                    let sub = &f * &m[col][c2];
                    m[r][c2] = &m[r][c2] - &sub;
                }
                let sub = &f * &rhs[col];
                rhs[r] = &rhs[r] - &sub;
            }
        }
    }
    Some(rhs)
}

/// Exact inverse of a square matrix; None when singular.
pub fn invert(a: &[Vec<Rat>]) -> Option<Vec<Vec<Rat>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![Rat::zero(); n];
        e[j] = rat_int(1);
        cols.push(solve(a, &e)?);
    }
    // cols[j] is the j-th column of A⁻¹
    let mut inv = vec![vec![Rat::zero(); n]; n];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            inv[i][j] = col[i].clone();
        }
    }
    Some(inv)
}

pub fn mat_vec(a: &[Vec<Rat>], x: &[Rat]) -> Vec<Rat> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(r, v)| r * v).fold(Rat::zero(), |s, t| s + t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_and_invert() {
        let a = vec![
            vec![rat_int(2), rat_int(1)],
            vec![rat_int(1), rat_int(3)],
        ];
        let b = vec![rat_int(5), rat_int(10)];
        let x = solve(&a, &b).unwrap();
        assert_eq!(x[0], rat_int(1));
        assert_eq!(x[1], rat_int(3));
        let inv = invert(&a).unwrap();
        let back = mat_vec(&inv, &b);
        assert_eq!(back, x);
    }

    #[test]
    fn singular_detected() {
        let a = vec![
            vec![rat_int(1), rat_int(2)],
            vec![rat_int(2), rat_int(4)],
        ];
        assert!(solve(&a, &[rat_int(1), rat_int(2)]).is_none());
    }

    #[test]
    fn cross_orthogonality() {
        let a = v3(1, 4, 8, 9);
        let b = v3(4, 7, -4, 9);
        assert!(dot3(&a, &b).is_zero());
        let c = cross3(&a, &b);
        assert!(dot3(&a, &c).is_zero());
        assert_eq!(dot3(&c, &c), rat_int(1));
    }
}
