use nalgebra::{Complex, Schur};

use super::{ensure_finite, ensure_square, Matrix, NumericsError, SpdMatrix};

/// Induced 2-norm (largest singular value).
pub fn operator_norm(m: &Matrix) -> Result<f64, NumericsError> {
    ensure_finite(m)?;
    if m.is_empty() {
        return Ok(0.0);
    }
    Ok(m.clone().singular_values().max())
}

/// `(λ_min, λ_max)` of an SPD matrix.
pub fn spectral_bounds(p: &SpdMatrix) -> (f64, f64) {
    (p.lambda_min(), p.lambda_max())
}

const QR_MAX_ITER: usize = 10_000;
const QR_TOL: f64 = 1e-12;

/// All eigenvalues with multiplicity, sorted by real then imaginary part.
///
/// 2×2 inputs use the characteristic polynomial directly; larger inputs go
/// through a real Schur decomposition (shifted QR).
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex<f64>>, NumericsError> {
    ensure_square(m)?;
    ensure_finite(m)?;
    let mut out = match m.nrows() {
        0 => Vec::new(),
        1 => vec![Complex::new(m[(0, 0)], 0.0)],
        2 => {
            let half_tr = 0.5 * (m[(0, 0)] + m[(1, 1)]);
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = half_tr * half_tr - det;
            if disc >= 0.0 {
                let s = disc.sqrt();
                // Avoid cancellation in the smaller-magnitude root.
                let big = if half_tr >= 0.0 { half_tr + s } else { half_tr - s };
                let small = if big != 0.0 { det / big } else { 0.0 };
                vec![Complex::new(big, 0.0), Complex::new(small, 0.0)]
            } else {
                let s = (-disc).sqrt();
                vec![Complex::new(half_tr, s), Complex::new(half_tr, -s)]
            }
        }
        _ => {
            let schur = Schur::try_new(m.clone(), QR_TOL, QR_MAX_ITER)
                .ok_or_else(|| NumericsError::Synthesis("QR iteration did not converge".into()))?;
            schur.complex_eigenvalues().iter().copied().collect()
        }
    };
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

/// True when every eigenvalue has a strictly negative real part.
pub fn is_hurwitz(m: &Matrix) -> Result<bool, NumericsError> {
    Ok(eigenvalues(m)?.iter().all(|z| z.re < 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix_from_rows;
    use nalgebra::DMatrix;

    #[test]
    fn norms_of_simple_matrices() {
        assert!((operator_norm(&DMatrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-15);
        let d = matrix_from_rows(&[vec![3.0, 0.0], vec![0.0, -4.0]]).unwrap();
        assert!((operator_norm(&d).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn norm_matches_gram_closed_form() {
        let a2 = matrix_from_rows(&[vec![1.0, -5.0], vec![1.0, 2.0]]).unwrap();
        // Gram matrix [[2,-3],[-3,29]]: λ_max = (31 + √765)/2.
        let oracle = ((31.0 + 765f64.sqrt()) / 2.0).sqrt();
        let got = operator_norm(&a2).unwrap();
        assert!((got - oracle).abs() / oracle < 1e-10);
        assert!((got - 5.4156).abs() < 1e-4);
    }

    #[test]
    fn spectral_bounds_of_diagonal() {
        let p = SpdMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 5.0]]).unwrap();
        assert_eq!(spectral_bounds(&p), (2.0, 5.0));
        assert_eq!(spectral_bounds(&SpdMatrix::identity(4)), (1.0, 1.0));
    }

    #[test]
    fn spectral_bounds_of_example_p() {
        let p = SpdMatrix::from_rows(&[vec![2.9171, 0.3489], vec![0.3489, 3.6256]]).unwrap();
        let (tr, det): (f64, f64) = (2.9171 + 3.6256, 2.9171 * 3.6256 - 0.3489 * 0.3489);
        let disc = ((tr * tr) / 4.0 - det).sqrt();
        let (lo, hi) = (tr / 2.0 - disc, tr / 2.0 + disc);
        let (gl, gh) = spectral_bounds(&p);
        assert!((gl - lo).abs() / lo < 1e-10 && (gh - hi).abs() / hi < 1e-10);
        assert!((gl - 2.7741).abs() < 1e-4 && (gh - 3.7686).abs() < 1e-4);
    }

    #[test]
    fn eigenvalues_of_diagonal_and_rotation() {
        let d = matrix_from_rows(&[vec![-1.0, 0.0], vec![0.0, -2.0]]).unwrap();
        let ev = eigenvalues(&d).unwrap();
        assert_eq!(ev, vec![Complex::new(-2.0, 0.0), Complex::new(-1.0, 0.0)]);
        assert!(is_hurwitz(&d).unwrap());

        let r = matrix_from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let ev = eigenvalues(&r).unwrap();
        assert!((ev[0].im + 1.0).abs() < 1e-15 && (ev[1].im - 1.0).abs() < 1e-15);
        assert!(!is_hurwitz(&r).unwrap());
    }

    #[test]
    fn eigenvalues_larger_via_schur() {
        // Block diagonal with a known spectrum {-1, -3, 2±i}.
        let m = matrix_from_rows(&[
            vec![-1.0, 0.0, 0.0, 0.0],
            vec![0.0, -3.0, 0.0, 0.0],
            vec![0.0, 0.0, 2.0, -1.0],
            vec![0.0, 0.0, 1.0, 2.0],
        ])
        .unwrap();
        // Similarity transform to hide the structure.
        let t = matrix_from_rows(&[
            vec![1.0, 2.0, 0.0, 1.0],
            vec![0.0, 1.0, 3.0, 0.0],
            vec![1.0, 0.0, 1.0, 1.0],
            vec![0.0, 1.0, 0.0, 2.0],
        ])
        .unwrap();
        let ti = t.clone().try_inverse().unwrap();
        let ev = eigenvalues(&(&t * m * ti)).unwrap();
        let want = [(-3.0, 0.0), (-1.0, 0.0), (2.0, -1.0), (2.0, 1.0)];
        for (z, (re, im)) in ev.iter().zip(want) {
            assert!((z.re - re).abs() < 1e-6 && (z.im - im).abs() < 1e-6, "{ev:?}");
        }
    }
}
