//! Lyapunov and continuous algebraic Riccati equations, and the LQR gain.
//!
//! The CARE is solved from the stable invariant subspace of the Hamiltonian
//! matrix (via its matrix sign function) and then polished with
//! Newton–Kleinman iterations.

use nalgebra::DMatrix;

use super::{ensure_finite, ensure_square, is_hurwitz, Matrix, NumericsError, SpdMatrix};

/// Solves `Aᵀ X + X A = −Q` by the Kronecker formulation.
pub fn lyapunov_solve(a: &Matrix, q: &Matrix) -> Result<Matrix, NumericsError> {
    ensure_square(a)?;
    ensure_finite(a)?;
    ensure_finite(q)?;
    let n = a.nrows();
    if q.shape() != (n, n) {
        return Err(NumericsError::DimensionMismatch {
            expected: format!("{n}x{n}"),
            found: format!("{}x{}", q.nrows(), q.ncols()),
        });
    }
    // Column-major vec: vec(AᵀX) = (I ⊗ Aᵀ) vec X, vec(XA) = (Aᵀ ⊗ I) vec X.
    let at = a.transpose();
    let id = DMatrix::<f64>::identity(n, n);
    let op = id.kronecker(&at) + at.kronecker(&id);
    let rhs = -nalgebra::DVector::from_column_slice(q.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or(NumericsError::Singular("Lyapunov operator"))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

fn care_residual(a: &Matrix, g: &Matrix, q: &Matrix, x: &Matrix) -> Matrix {
    a.transpose() * x + x * a - x * g * x + q
}

fn matrix_sign(h: &Matrix) -> Result<Matrix, NumericsError> {
    let dim = h.nrows() as f64;
    let mut z = h.clone();
    let mut scaled = true;
    for _ in 0..200 {
        let zi = z
            .clone()
            .try_inverse()
            .ok_or_else(|| NumericsError::Synthesis("Hamiltonian has imaginary-axis eigenvalues".into()))?;
        let next = if scaled {
            let c = z.determinant().abs().powf(1.0 / dim);
            if !(c.is_finite() && c > 0.0) {
                return Err(NumericsError::Synthesis("sign iteration breakdown".into()));
            }
            (&z / c + zi * c) * 0.5
        } else {
            (&z + zi) * 0.5
        };
        let change = (&next - &z).norm() / next.norm();
        z = next;
        if change < 1e-2 {
            scaled = false;
        }
        if change < 1e-13 {
            return Ok(z);
        }
    }
    Err(NumericsError::Synthesis("sign iteration did not converge".into()))
}

/// Stabilizing solution of `AᵀX + XA − X B R⁻¹ Bᵀ X + Q = 0`.
pub fn care(a: &Matrix, b: &Matrix, q: &SpdMatrix, r: &SpdMatrix) -> Result<Matrix, NumericsError> {
    ensure_square(a)?;
    ensure_finite(a)?;
    ensure_finite(b)?;
    let n = a.nrows();
    let m = b.ncols();
    if b.nrows() != n || q.dim() != n || r.dim() != m {
        return Err(NumericsError::DimensionMismatch {
            expected: format!("A {n}x{n}, B {n}xm, Q {n}x{n}, R mxm"),
            found: format!("B {}x{}, Q {}x{}, R {}x{}", b.nrows(), m, q.dim(), q.dim(), r.dim(), r.dim()),
        });
    }
    let r_chol = r
        .matrix()
        .clone()
        .cholesky()
        .ok_or(NumericsError::Singular("R"))?;
    let rinv_bt = r_chol.solve(&b.transpose());
    let g = b * &rinv_bt;
    let qm = q.matrix();

    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-qm));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let w = matrix_sign(&h)?;
    let w11 = w.view((0, 0), (n, n));
    let w12 = w.view((0, n), (n, n));
    let w21 = w.view((n, 0), (n, n));
    let w22 = w.view((n, n), (n, n));
    let id = DMatrix::<f64>::identity(n, n);

    let mut lhs = DMatrix::<f64>::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &id));
    let mut rhs = DMatrix::<f64>::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(&id + w11)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));

    let mut x = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| NumericsError::Synthesis(e.to_string()))?;
    x = (&x + x.transpose()) * 0.5;
    ensure_finite(&x).map_err(|_| NumericsError::Synthesis("non-finite Riccati solution".into()))?;

    // Newton–Kleinman polish.
    for _ in 0..50 {
        let k = -(&rinv_bt * &x);
        let acl = a + b * &k;
        if !is_hurwitz(&acl)? {
            break;
        }
        let rhs = qm + k.transpose() * r.matrix() * &k;
        let next = lyapunov_solve(&acl, &rhs)?;
        let step = (&next - &x).norm();
        x = next;
        if step <= 1e-15 * x.norm().max(1.0) {
            break;
        }
    }

    let k = -(&rinv_bt * &x);
    if !is_hurwitz(&(a + b * &k))? {
        return Err(NumericsError::Synthesis(
            "no stabilizing solution; (A, B) is not stabilizable".into(),
        ));
    }
    let resid = care_residual(a, &g, qm, &x).norm();
    if resid > 1e-8 * qm.norm() {
        return Err(NumericsError::Synthesis(format!("CARE residual {resid:.3e} too large")));
    }
    Ok(x)
}

/// LQR gain for `u = K x` (so that `A + B K` is Hurwitz): `K = −R⁻¹ Bᵀ X`.
pub fn lqr_gain(a: &Matrix, b: &Matrix, q: &SpdMatrix, r: &SpdMatrix) -> Result<Matrix, NumericsError> {
    let x = care(a, b, q, r)?;
    let r_chol = r.matrix().clone().cholesky().ok_or(NumericsError::Singular("R"))?;
    Ok(-r_chol.solve(&(b.transpose() * x)))
}
