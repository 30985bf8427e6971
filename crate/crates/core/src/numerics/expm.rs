//! Matrix exponential via scaling-and-squaring with a Padé(13) kernel, and the
//! exact zero-order-hold step built on top of it.

use nalgebra::{DMatrix, DVector};

use super::{ensure_finite, ensure_square, Matrix, NumericsError};

/// Padé(13,13) numerator coefficients.
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// 1-norm threshold below which Padé(13) reaches unit roundoff.
const THETA13: f64 = 5.371_920_351_148_152;

fn one_norm(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Returns `e^{tA}`.
///
/// `t` may be zero or negative. Non-square or non-finite input is rejected.
pub fn matrix_exponential(a: &Matrix, t: f64) -> Result<Matrix, NumericsError> {
    ensure_square(a)?;
    ensure_finite(a)?;
    if !t.is_finite() {
        return Err(NumericsError::NonFinite);
    }
    let n = a.nrows();
    if n == 0 || t == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    Ok(expm_unchecked(&(a * t)))
}

pub(crate) fn expm_unchecked(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let norm = one_norm(a);
    if norm == 0.0 {
        return DMatrix::identity(n, n);
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-s);
    let mut result = pade13(&scaled);
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

fn pade13(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let b = &PADE13;
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];

    let p = &v + &u;
    let q = &v - &u;
    // q is well conditioned for ||a||_1 <= theta13.
    q.lu().solve(&p).expect("Padé denominator is nonsingular after scaling")
}

/// One exact step of `ẋ = A x + b` with constant `b` over `dt`.
///
/// Returns `(Φ, ψ)` with `Φ = e^{A dt}` and `ψ = ∫₀^{dt} e^{As} ds · b`, read off
/// the augmented exponential `exp([[A, b], [0, 0]] dt)`.
pub fn affine_step(a: &Matrix, b: &DVector<f64>, dt: f64) -> Result<(Matrix, DVector<f64>), NumericsError> {
    ensure_square(a)?;
    ensure_finite(a)?;
    let n = a.nrows();
    if b.len() != n {
        return Err(NumericsError::DimensionMismatch {
            expected: format!("vector of length {n}"),
            found: format!("length {}", b.len()),
        });
    }
    if !b.iter().all(|v| v.is_finite()) || !dt.is_finite() {
        return Err(NumericsError::NonFinite);
    }
    if dt < 0.0 {
        return Err(NumericsError::NegativeDuration(dt));
    }
    let mut aug = DMatrix::<f64>::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, 1)).copy_from(b);
    let e = expm_unchecked(&(aug * dt));
    let phi = e.view((0, 0), (n, n)).into_owned();
    let psi = e.view((0, n), (n, 1)).column(0).into_owned();
    Ok((phi, psi))
}

/// Transition matrix and input integral for a fixed `dt`: `(e^{A dt}, ∫₀^{dt} e^{As} ds)`.
///
/// Used where the same step is applied to many different constant inputs.
pub fn zoh_pair(a: &Matrix, dt: f64) -> Result<(Matrix, Matrix), NumericsError> {
    ensure_square(a)?;
    ensure_finite(a)?;
    if !dt.is_finite() {
        return Err(NumericsError::NonFinite);
    }
    if dt < 0.0 {
        return Err(NumericsError::NegativeDuration(dt));
    }
    let n = a.nrows();
    let mut aug = DMatrix::<f64>::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, n)).fill_with_identity();
    let e = expm_unchecked(&(aug * dt));
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, n)).into_owned(),
    ))
}
