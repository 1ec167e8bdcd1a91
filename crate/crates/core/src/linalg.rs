//! Small dense helpers shared by the simulator, the oracles and the solver.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{domain, Result};

pub type CMat = DMatrix<Complex64>;

/// Eigenvalues below this (but above `-PSD_CLIP`) are treated as zero.
pub const PSD_CLIP: f64 = 1e-12;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

pub fn pauli_y() -> CMat {
    let i = Complex64::new(0.0, 1.0);
    CMat::from_row_slice(2, 2, &[c(0.0), -i, i, c(0.0)])
}

pub fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

/// `n·σ` for a Bloch vector `n = (x, y, z)`.
pub fn bloch_observable(n: [f64; 3]) -> CMat {
    pauli_x() * c(n[0]) + pauli_y() * c(n[1]) + pauli_z() * c(n[2])
}

/// Projectors onto the `+1` (outcome 0) and `-1` (outcome 1) eigenspaces of `n·σ`.
pub fn bloch_projectors(n: [f64; 3]) -> [CMat; 2] {
    let o = bloch_observable(n);
    let id = identity(2);
    [(&id + &o) * c(0.5), (&id - &o) * c(0.5)]
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn dagger(a: &CMat) -> CMat {
    a.adjoint()
}

pub fn trace(a: &CMat) -> Complex64 {
    a.trace()
}

/// `tr(a b)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> Complex64 {
    let n = a.nrows();
    let mut s = Complex64::default();
    for i in 0..n {
        for k in 0..n {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let h = (a + a.adjoint()) * c(0.5);
    h.symmetric_eigenvalues().iter().copied().collect()
}

pub fn is_hermitian(a: &CMat, tol: f64) -> bool {
    (a - a.adjoint()).iter().all(|z| z.norm() <= tol)
}

/// Checks Hermiticity, unit trace and positivity of a density matrix.
pub fn check_density(rho: &CMat, tol: f64) -> Result<()> {
    if rho.nrows() != rho.ncols() {
        return domain("density matrix is not square");
    }
    if !is_hermitian(rho, tol) {
        return domain("density matrix is not Hermitian");
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
        return domain(format!("density matrix has trace {tr}"));
    }
    let min = hermitian_eigenvalues(rho).into_iter().fold(f64::INFINITY, f64::min);
    if min < -tol {
        return domain(format!("density matrix is not PSD (min eigenvalue {min:.3e})"));
    }
    Ok(())
}

/// `-Σ p ln p` over a probability-like vector; entries in `[-PSD_CLIP, 0]`
/// are clipped to zero, more negative ones are rejected.
pub fn entropy_of(values: &[f64]) -> Result<f64> {
    let mut h = 0.0;
    for &p in values {
        if p < -PSD_CLIP {
            return domain(format!("negative eigenvalue {p:.3e} in entropy"));
        }
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    Ok(h)
}

/// Von Neumann entropy in nats.
pub fn von_neumann_entropy(rho: &CMat) -> Result<f64> {
    entropy_of(&hermitian_eigenvalues(rho))
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    let f = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
    f(p) + f(1.0 - p)
}

/// Error-free transformation `a + b = s + e`.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let z = s - a;
    (s, (a - (s - z)) + (b - z))
}

/// Error-free transformation `a * b = p + e`.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Compensated dot product (Ogita-Rump-Oishi `Dot2`). Returns the value and
/// a bound on its absolute error.
pub fn dot2(xs: impl IntoIterator<Item = (f64, f64)>) -> (f64, f64) {
    let mut s = 0.0;
    let mut c = 0.0;
    let mut abs = 0.0;
    let mut n = 0usize;
    for (a, b) in xs {
        let (p, ep) = two_prod(a, b);
        let (t, es) = two_sum(s, p);
        s = t;
        c += ep + es;
        abs += (a * b).abs();
        n += 1;
    }
    let res = s + c;
    let u = f64::EPSILON / 2.0;
    let gamma = |k: usize| (k as f64 * u) / (1.0 - k as f64 * u);
    let err = u * res.abs() + gamma(n.max(1)).powi(2) * abs * 2.0 + f64::MIN_POSITIVE;
    (res, err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projectors_are_complete_and_idempotent() {
        let [p0, p1] = bloch_projectors([0.6, 0.0, 0.8]);
        let id = identity(2);
        assert!((&p0 + &p1 - id).norm() < 1e-15);
        assert!((&p0 * &p0 - &p0).norm() < 1e-15);
        assert!((&p0 * &p1).norm() < 1e-15);
    }

    #[test]
    fn entropy_clipping() {
        assert_eq!(entropy_of(&[1.0, -1e-13]).unwrap(), 0.0);
        assert!(entropy_of(&[1.0, -1e-9]).is_err());
        assert!((entropy_of(&[0.5, 0.5]).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn dot2_recovers_cancellation() {
        let (v, e) = dot2([(1e16, 1.0), (1.0, 1.0), (-1e16, 1.0)]);
        assert_eq!(v, 1.0);
        assert!(e < 1e-6);
    }

    #[test]
    fn binary_entropy_values() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert!((binary_entropy(0.5) - 1.0).abs() < 1e-15);
        assert!((binary_entropy(0.05) - 0.286_396_957_115_956_1).abs() < 1e-12);
    }
}
