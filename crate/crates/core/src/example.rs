//! The two-mode benchmark: plants, LQR weights, logarithmic quantizer,
//! Lyapunov candidate and the simulation scenario.

use nalgebra::{DMatrix, DVector};

use crate::certify::{CertifyError, LyapunovSpec};
use crate::numerics::{Matrix, SpdMatrix};
use crate::quantization::LogQuantizer;
use crate::signals::{SignalError, SwitchingSignal};
use crate::simulator::{SimError, SwitchedSystem};

pub const TS: f64 = 0.025;
pub const XI0: f64 = 0.08;
pub const KAPPA: f64 = 1.2;
pub const C: f64 = 1.0;
pub const BIG_R: f64 = 68.6;
pub const R_SMALL: f64 = 0.175;
pub const P_ROWS: [[f64; 2]; 2] = [[2.9171, 0.3489], [0.3489, 3.6256]];

/// Published values used as reproduction targets.
pub const REPORTED_K1: [f64; 2] = [1.38, -1.86];
pub const REPORTED_K2: [f64; 2] = [-2.80, 3.77];
pub const REPORTED_EIG_12: f64 = 4.4538;
pub const REPORTED_EIG_21: [f64; 2] = [1.4091, 4.7750];
pub const REPORTED_D: f64 = 61.02;
pub const REPORTED_N: u64 = 84;
pub const REPORTED_A: f64 = 1.321;

pub const X0: [f64; 2] = [-60.0, 50.0];
pub const DWELL: f64 = 2.1;
pub const HORIZON: f64 = 30.0;

pub fn a1() -> Matrix {
    DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -3.0, 2.0]) / 6.0
}

pub fn b1() -> Matrix {
    DMatrix::from_row_slice(2, 1, &[-4.0, 3.0]) / 6.0
}

pub fn a2() -> Matrix {
    DMatrix::from_row_slice(2, 2, &[1.0, -5.0, 1.0, 2.0])
}

pub fn b2() -> Matrix {
    DMatrix::from_row_slice(2, 1, &[1.0, -1.0])
}

/// `(mode, A, B)` for both plants.
pub fn plants() -> Vec<(usize, Matrix, Matrix)> {
    vec![(1, a1(), b1()), (2, a2(), b2())]
}

/// LQR weights `Q = I`, `R = 1`.
pub fn lqr_weights() -> (SpdMatrix, SpdMatrix) {
    (SpdMatrix::identity(2), SpdMatrix::identity(1))
}

/// Both plants with their LQR gains.
pub fn system() -> Result<SwitchedSystem, SimError> {
    let (q, r) = lqr_weights();
    SwitchedSystem::with_lqr_gains(&plants(), &q, &r)
}

pub fn quantizer() -> LogQuantizer {
    LogQuantizer::new(XI0, KAPPA).expect("constant parameters are valid")
}

pub fn p_matrix() -> SpdMatrix {
    SpdMatrix::from_rows(&P_ROWS.map(|r| r.to_vec())).expect("constant P is SPD")
}

pub fn lyapunov_spec() -> Result<LyapunovSpec, CertifyError> {
    LyapunovSpec::new(p_matrix(), C, BIG_R, R_SMALL)
}

pub fn x0() -> DVector<f64> {
    DVector::from_row_slice(&X0)
}

/// Alternating modes starting in mode 1, switching every [`DWELL`] seconds.
///
/// The switches are shifted by `Ts/2` off the sampling grid: `2.1` is a
/// multiple of `Ts`, and on-grid switches produce no mismatch at all.
pub fn scenario_signal() -> Result<SwitchingSignal, SignalError> {
    SwitchingSignal::periodic(&[1, 2], DWELL, TS / 2.0, HORIZON)
}
