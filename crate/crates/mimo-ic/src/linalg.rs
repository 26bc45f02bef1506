//! Complex dense linear algebra on top of nalgebra: sorted SVD, numeric rank
//! with a relative threshold, null spaces, column spaces and seeded Gaussian
//! draws.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = nalgebra::DVector<C64>;

/// Default relative rank threshold shared by every numeric decision.
pub const DEFAULT_REL_TOL: f64 = 1e-6;

/// Threshold `rel_tol * max(s1, tiny) * max(rows, cols)`.
pub fn rank_tol(s1: f64, rows: usize, cols: usize, rel_tol: f64) -> f64 {
    rel_tol * s1.max(f64::MIN_POSITIVE) * rows.max(cols).max(1) as f64
}

/// Singular values in descending order. Empty for an empty matrix.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn rank(a: &CMat, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        None => 0,
        Some(&s1) => {
            let t = rank_tol(s1, a.nrows(), a.ncols(), rel_tol);
            s.iter().filter(|&&x| x > t).count()
        }
    }
}

/// Right singular vectors as the columns of an `n x n` unitary matrix, with
/// the matching singular values (padded with zeros to length `n`), both
/// sorted by decreasing singular value.
fn full_right_svd(a: &CMat) -> (Vec<f64>, CMat) {
    let (m, n) = a.shape();
    let padded = if m < n {
        let mut p = CMat::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = CMat::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        for r in 0..n {
            v[(r, c)] = v_t[(i, r)].conj();
        }
    }
    (s, v)
}

/// Orthonormal basis of the right null space, as columns. The rank cut uses
/// [`rank_tol`] on the original shape.
pub fn null_space(a: &CMat, rel_tol: f64) -> CMat {
    null_space_by(a, |s1| rank_tol(s1, a.nrows(), a.ncols(), rel_tol))
}

/// Null space with threshold `rel_tol * s1`, without the dimension factor.
/// Meant for large stacked systems whose smallest genuine singular values
/// sit close to the dimension-scaled threshold.
pub fn null_space_unscaled(a: &CMat, rel_tol: f64) -> CMat {
    null_space_by(a, |s1| rel_tol * s1.max(f64::MIN_POSITIVE))
}

fn null_space_by(a: &CMat, tol: impl Fn(f64) -> f64) -> CMat {
    let (m, n) = a.shape();
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    if m == 0 {
        return CMat::identity(n, n);
    }
    let (s, v) = full_right_svd(a);
    let t = tol(s[0]);
    let r = s.iter().take(m.min(n)).filter(|&&x| x > t).count();
    v.columns(r, n - r).into_owned()
}

/// Unit right singular vector of the smallest singular value.
pub fn min_right_singular_vector(a: &CMat) -> CMat {
    let n = a.ncols();
    let (_, v) = full_right_svd(a);
    v.columns(n - 1, 1).into_owned()
}

/// Eigenvalues of a square complex matrix, in Schur order.
pub fn eigenvalues(a: &CMat) -> Vec<C64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let (_, t) = nalgebra::Schur::new(a.clone()).unpack();
    (0..t.nrows()).map(|k| t[(k, k)]).collect()
}

/// Orthonormal basis of the left null space, as rows: `x a = 0`.
pub fn left_null_space(a: &CMat, rel_tol: f64) -> CMat {
    null_space(&a.adjoint(), rel_tol).adjoint()
}

/// Orthonormal basis of the column space, truncated at the numeric rank.
pub fn column_space(a: &CMat, rel_tol: f64) -> CMat {
    let s1 = singular_values(a).first().copied().unwrap_or(0.0);
    column_space_abs(a, rank_tol(s1, a.nrows(), a.ncols(), rel_tol))
}

/// Left singular vectors whose singular values exceed `tol`.
pub fn column_space_abs(a: &CMat, tol: f64) -> CMat {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return CMat::zeros(m, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested u");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let keep: Vec<usize> = order.into_iter().filter(|&i| svd.singular_values[i] > tol).collect();
    let mut out = CMat::zeros(m, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        out.set_column(c, &u.column(i));
    }
    out
}

/// Frobenius norm of the part of `b` outside the column space of `a`,
/// relative to the norm of `b`. Zero when `b` is zero.
pub fn subspace_residual(a: &CMat, b: &CMat, rel_tol: f64) -> f64 {
    let nb = b.norm();
    if nb == 0.0 {
        return 0.0;
    }
    let q = column_space(a, rel_tol);
    let outside = b - &q * (q.adjoint() * b);
    outside.norm() / nb
}

/// Horizontal concatenation. All blocks must share the row count `rows`.
pub fn hstack(rows: usize, blocks: &[&CMat]) -> CMat {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Vertical concatenation. All blocks must share the column count `cols`.
pub fn vstack(cols: usize, blocks: &[&CMat]) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Block diagonal matrix from the given blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Scales `v` to unit norm and rotates its phase so the first entry of
/// non-negligible magnitude is real and positive. Entries below
/// `f64::EPSILON` times the norm are treated as zero and set to zero.
pub fn canonical_unit(v: &mut CMat) {
    let n = v.norm();
    if n == 0.0 {
        return;
    }
    *v /= C64::new(n, 0.0);
    for x in v.iter_mut() {
        if x.norm() <= f64::EPSILON {
            *x = C64::new(0.0, 0.0);
        }
    }
    if let Some(lead) = v.iter().copied().find(|x| x.norm() > 0.0) {
        let phase = lead.conj() / lead.norm();
        *v *= phase;
        for x in v.iter_mut() {
            if x.im.abs() <= f64::EPSILON {
                x.im = 0.0;
            }
            if x.re.abs() <= f64::EPSILON {
                x.re = 0.0;
            }
        }
        let n = v.norm();
        *v /= C64::new(n, 0.0);
    }
}

/// Mixes seed material into one 64-bit seed (splitmix64 finalizer folded
/// over the parts).
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. circularly symmetric complex normal entries of unit
/// variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

pub fn is_finite(a: &CMat) -> bool {
    a.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(seed: u64, r: usize, c: usize) -> CMat {
        complex_gaussian(&mut rng_from(seed), r, c)
    }

    #[test]
    fn rank_of_identity_and_zero() {
        assert_eq!(rank(&CMat::identity(3, 3), DEFAULT_REL_TOL), 3);
        assert_eq!(rank(&CMat::zeros(4, 2), DEFAULT_REL_TOL), 0);
        assert_eq!(rank(&CMat::zeros(0, 2), DEFAULT_REL_TOL), 0);
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let a = random(1, 3, 7);
        let z = null_space(&a, DEFAULT_REL_TOL);
        assert_eq!(z.shape(), (7, 4));
        assert!((&a * &z).norm() < 1e-12);
        let g = z.adjoint() * &z;
        assert!((g - CMat::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn null_space_of_low_rank_tall_matrix() {
        let a = random(2, 6, 2) * random(3, 2, 5);
        let z = null_space(&a, DEFAULT_REL_TOL);
        assert_eq!(z.ncols(), 3);
        assert!((&a * &z).norm() < 1e-10 * a.norm());
    }

    #[test]
    fn left_null_space_annihilates() {
        let a = random(4, 5, 3);
        let l = left_null_space(&a, DEFAULT_REL_TOL);
        assert_eq!(l.shape(), (2, 5));
        assert!((&l * &a).norm() < 1e-12);
    }

    #[test]
    fn eigenpairs() {
        let a = random(11, 5, 5);
        for lambda in eigenvalues(&a) {
            let shifted = &a - CMat::identity(5, 5) * lambda;
            let v = min_right_singular_vector(&shifted);
            assert!((&a * &v - &v * lambda).norm() < 1e-10);
        }
    }

    #[test]
    fn column_space_rank() {
        let a = random(5, 6, 2) * random(6, 2, 4);
        let q = column_space(&a, DEFAULT_REL_TOL);
        assert_eq!(q.ncols(), 2);
        assert!(subspace_residual(&q, &a, DEFAULT_REL_TOL) < 1e-12);
        let b = random(7, 6, 1);
        assert!(subspace_residual(&q, &b, DEFAULT_REL_TOL) > 1e-3);
    }

    #[test]
    fn canonical_unit_sign() {
        let mut v = CMat::from_column_slice(3, 1, &[
            C64::new(0.0, 0.0),
            C64::new(0.0, -2.0),
            C64::new(1.0, 0.0),
        ]);
        canonical_unit(&mut v);
        assert!((v.norm() - 1.0).abs() < 1e-15);
        assert_eq!(v[0], C64::new(0.0, 0.0));
        assert!(v[1].im == 0.0 && v[1].re > 0.0);
    }

    #[test]
    fn seeded_draws_repeat() {
        assert_eq!(random(9, 3, 3), random(9, 3, 3));
        assert_ne!(random(9, 3, 3), random(10, 3, 3));
        assert_ne!(mix_seed(&[1, 2]), mix_seed(&[2, 1]));
    }

    #[test]
    fn stacking() {
        let a = random(1, 2, 2);
        let b = random(2, 2, 3);
        let h = hstack(2, &[&a, &b]);
        assert_eq!(h.shape(), (2, 5));
        assert_eq!(h.columns(2, 3).into_owned(), b);
        let d = block_diag(&[a.clone(), b.clone()]);
        assert_eq!(d.shape(), (4, 5));
        assert_eq!(d[(0, 2)], C64::new(0.0, 0.0));
    }
}
