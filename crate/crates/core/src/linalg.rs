//! Dense complex linear algebra used by the protocol simulator.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>` (column-major). Large products
//! go through `matrixmultiply::zgemm`; eigen and singular value problems go
//! through nalgebra.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// `a * b`.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = CMat::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: Complex64 is repr(C) with layout [re, im], matching
    // matrixmultiply's c64; all strides describe column-major buffers of the
    // stated sizes.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr().cast(),
            1,
            m as isize,
            b.as_ptr().cast(),
            1,
            k as isize,
            [0.0, 0.0],
            c.as_mut_ptr().cast(),
            1,
            m as isize,
        );
    }
    c
}

/// `a^dagger * b`.
pub fn matmul_adj(a: &CMat, b: &CMat) -> CMat {
    matmul(&a.adjoint(), b)
}

/// `a * b^dagger`.
pub fn matmul_by_adj(a: &CMat, b: &CMat) -> CMat {
    matmul(a, &b.adjoint())
}

/// Frobenius norm of `m^dagger m - I`; bounds the operator-norm residual.
pub fn unitarity_residual(m: &CMat) -> f64 {
    let mut g = matmul_adj(m, m);
    for i in 0..g.ncols() {
        g[(i, i)] -= ONE;
    }
    g.norm()
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

/// Eigenvalues of a Hermitian matrix (ascending not guaranteed).
pub fn hermitian_eigenvalues(h: &CMat) -> Vec<f64> {
    let sym = (h + h.adjoint()).scale(0.5);
    sym.symmetric_eigenvalues().iter().copied().collect()
}

/// Trace norm `Tr sqrt(X^dagger X)` as the sum of singular values.
pub fn trace_norm(x: &CMat) -> f64 {
    x.clone().singular_values().iter().sum()
}

/// Trace norm of a Hermitian matrix via its eigenvalues.
pub fn trace_norm_hermitian(h: &CMat) -> f64 {
    hermitian_eigenvalues(h).iter().map(|l| l.abs()).sum()
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

/// Applies `f` to the eigenvalues of a Hermitian matrix.
pub fn hermitian_map(h: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let sym = (h + h.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let q = &eig.eigenvectors;
    let d = CMat::from_diagonal(&eig.eigenvalues.map(|l| C64::new(f(l), 0.0)));
    q * d * q.adjoint()
}

/// Square root of a positive semidefinite matrix (negative eigenvalues from
/// roundoff are clamped).
pub fn sqrt_psd(a: &CMat) -> CMat {
    hermitian_map(a, |l| l.max(0.0).sqrt())
}

/// `|psi><psi|`.
pub fn outer(psi: &[C64]) -> CMat {
    let d = psi.len();
    CMat::from_fn(d, d, |i, j| psi[i] * psi[j].conj())
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Partial trace of an operator on `dims[0] (x) dims[1] (x) ...`, keeping the
/// subsystems listed in `keep` (in their original order). The first
/// subsystem is the most significant in the basis index.
pub fn partial_trace(rho: &CMat, dims: &[usize], keep: &[usize]) -> CMat {
    let total: usize = dims.iter().product();
    assert_eq!(rho.nrows(), total, "operator does not match subsystem dims");
    assert_eq!(rho.ncols(), total, "operator is not square");
    assert!(keep.windows(2).all(|w| w[0] < w[1]), "keep must be increasing");
    assert!(keep.iter().all(|&k| k < dims.len()), "subsystem out of range");
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let dk: usize = keep.iter().map(|&i| dims[i]).product();
    let dt: usize = traced.iter().map(|&i| dims[i]).product();
    // Place-value of each subsystem in the full index.
    let mut stride = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        stride[i] = stride[i + 1] * dims[i + 1];
    }
    let offsets = |subs: &[usize], count: usize| -> Vec<usize> {
        (0..count)
            .map(|mut idx| {
                let mut off = 0;
                for &s in subs.iter().rev() {
                    off += (idx % dims[s]) * stride[s];
                    idx /= dims[s];
                }
                off
            })
            .collect()
    };
    let ko = offsets(keep, dk);
    let to = offsets(&traced, dt);
    let mut out = CMat::zeros(dk, dk);
    for (j, &cj) in ko.iter().enumerate() {
        for (i, &ci) in ko.iter().enumerate() {
            out[(i, j)] = to.iter().map(|&t| rho[(ci + t, cj + t)]).sum();
        }
    }
    out
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-random isometry with `cols <= rows` orthonormal columns.
pub fn random_isometry<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    assert!(cols <= rows);
    let qr = random_ginibre(rng, rows, cols).qr();
    let mut q = qr.q();
    let r = qr.r();
    // Fix column phases so the distribution is Haar.
    for j in 0..cols {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..rows {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMat {
    random_isometry(rng, d, d)
}

pub fn random_pure_state<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..d).map(|_| gaussian(rng)).collect();
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Random density matrix `G G^dagger / Tr` with `G` a `d x rank` Ginibre
/// matrix.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, d: usize, rank: usize) -> CMat {
    let g = random_ginibre(rng, d, rank.max(1));
    let rho = &g * g.adjoint();
    let tr = trace(&rho).re;
    rho.unscale(tr)
}

/// Unitary whose first column is the unit vector `a`, completing it by
/// modified Gram-Schmidt against the standard basis.
pub fn complete_from_column(a: &[C64]) -> CMat {
    let d = a.len();
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(d);
    let norm = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    assert!(norm > 0.0, "cannot complete the zero vector");
    basis.push(a.iter().map(|x| x / norm).collect());
    for e in 0..d {
        if basis.len() == d {
            break;
        }
        let mut v = vec![ZERO; d];
        v[e] = ONE;
        for b in &basis {
            let overlap: C64 = b.iter().zip(&v).map(|(bi, vi)| bi.conj() * vi).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= overlap * bi;
            }
        }
        let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        // Candidates nearly inside the current span are skipped; at least
        // d - |basis| of the remaining standard vectors stay well conditioned.
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    assert_eq!(basis.len(), d, "Gram-Schmidt completion lost rank");
    CMat::from_fn(d, d, |i, j| basis[j][i])
}

/// Polar factor `Y (Y^dagger Y)^{-1/2}` of a full-column-rank matrix.
pub fn polar_isometry(y: &CMat) -> CMat {
    let g = matmul_adj(y, y);
    let inv_sqrt = hermitian_map(&g, |l| 1.0 / l.max(1e-300).sqrt());
    matmul(y, &inv_sqrt)
}

/// Orthonormal basis `Q = m C` of the column span of `m`, with the
/// coefficient matrix `C`. Directions with relative weight below `1e-8` are
/// dropped.
pub fn column_span(m: &CMat) -> (CMat, CMat) {
    if m.ncols() == 0 {
        return (CMat::zeros(m.nrows(), 0), CMat::zeros(0, 0));
    }
    let g = matmul_adj(m, m);
    let sym = (&g + g.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > top * 1e-8 && eig.eigenvalues[i] > 0.0)
        .collect();
    let mut coeff = CMat::zeros(m.ncols(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let scale = 1.0 / eig.eigenvalues[i].sqrt();
        for r in 0..m.ncols() {
            coeff[(r, c)] = eig.eigenvectors[(r, i)] * scale;
        }
    }
    if keep.is_empty() {
        return (CMat::zeros(m.nrows(), 0), coeff);
    }
    // One re-orthonormalization pass removes the loss from forming the Gram
    // matrix.
    let q0 = matmul(m, &coeff);
    let g0 = matmul_adj(&q0, &q0);
    let fix = hermitian_map(&g0, |l| 1.0 / l.max(1e-300).sqrt());
    let coeff = matmul(&coeff, &fix);
    (matmul(&q0, &fix), coeff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &CMat, b: &CMat, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn gemm_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_ginibre(&mut rng, 5, 7);
        let b = random_ginibre(&mut rng, 7, 3);
        assert!(close(&matmul(&a, &b), &(&a * &b), 1e-12));
        assert!(close(&matmul_adj(&b, &b), &(b.adjoint() * &b), 1e-12));
    }

    #[test]
    fn partial_trace_of_bell_pair() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let phi = [C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)];
        let rho = outer(&phi);
        let half = identity(2).scale(0.5);
        assert!(close(&partial_trace(&rho, &[2, 2], &[0]), &half, 1e-15));
        assert!(close(&partial_trace(&rho, &[2, 2], &[1]), &half, 1e-15));
        assert!(close(&partial_trace(&rho, &[2, 2], &[0, 1]), &rho, 0.0));
    }

    #[test]
    fn partial_trace_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_density(&mut rng, 2, 2);
        let b = random_density(&mut rng, 3, 3);
        let c = random_density(&mut rng, 2, 1);
        let abc = kron(&kron(&a, &b), &c);
        assert!(close(&partial_trace(&abc, &[2, 3, 2], &[1]), &b, 1e-12));
        assert!(close(&partial_trace(&abc, &[2, 3, 2], &[0, 2]), &kron(&a, &c), 1e-12));
    }

    #[test]
    fn completion_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [1, 2, 5, 16] {
            let a = random_pure_state(&mut rng, d);
            let u = complete_from_column(&a);
            assert!(unitarity_residual(&u) < 1e-12);
            for i in 0..d {
                assert!((u[(i, 0)] - a[i]).norm() < 1e-12);
            }
        }
        let mut e = vec![ZERO; 4];
        e[3] = ONE;
        assert!(unitarity_residual(&complete_from_column(&e)) < 1e-14);
    }

    #[test]
    fn random_unitaries_and_polar() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_unitary(&mut rng, 6);
        assert!(unitarity_residual(&u) < 1e-12);
        let y = random_ginibre(&mut rng, 8, 3);
        assert!(unitarity_residual(&polar_isometry(&y)) < 1e-12);
        let m = CMat::from_columns(&[y.column(0), y.column(1), y.column(0)]);
        let (span, coeff) = column_span(&m);
        assert_eq!(span.ncols(), 2);
        assert!(unitarity_residual(&span) < 1e-12);
        assert!((matmul(&m, &coeff) - &span).norm() < 1e-12);
    }

    #[test]
    fn trace_norms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_density(&mut rng, 4, 2);
        let b = random_density(&mut rng, 4, 4);
        let d = &a - &b;
        assert!((trace_norm(&d) - trace_norm_hermitian(&d)).abs() < 1e-10);
        let s = sqrt_psd(&a);
        assert!(close(&(&s * &s), &a, 1e-10));
    }
}
