//! Heuristic common-Lyapunov candidate for the ideal closed loops.
//!
//! Carries no guarantee; pass the result through
//! [`verify_assumption3`](super::verify_assumption3).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CertifyError, LyapunovSpec};
use crate::numerics::{is_hurwitz, lyapunov_solve, operator_norm, Matrix, NumericsError, SpdMatrix};
use crate::simulator::SwitchedSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PCandidate {
    #[serde(rename = "P")]
    pub p: SpdMatrix,
    /// `max_p λmax(A_clᵀP + P A_cl) + ε`; `≤ 0` means the ideal loops share
    /// `V` with the required strictness.
    pub ideal_margin: f64,
    pub rounds_used: u32,
}

fn max_sym_eig(m: &Matrix) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().max()
}

fn worst(closed: &[Matrix], p: &Matrix) -> (usize, f64) {
    closed
        .iter()
        .map(|a| max_sym_eig(&(a.transpose() * p + p * a)))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc })
}

/// Weighted average of per-mode Lyapunov solutions `A_pᵀX_p + X_pA_p = −I`,
/// re-weighting toward the worst mode each round (and restarting from seeded
/// random weights if that stalls), stopping once
/// `A_pᵀP + PA_p ≼ −εI` for all ideal loops, `ε = 1e−3·max_p ‖A_p + B_pK_p‖`.
///
/// The result is scaled so the ideal loops decay at twice the template's
/// `C`, leaving headroom for the quantization error.
pub fn suggest_p(sys: &SwitchedSystem, template: &LyapunovSpec, rounds: u32, seed: u64) -> Result<PCandidate, CertifyError> {
    let n = sys.state_dim();
    let mut closed = Vec::new();
    for p in sys.mode_ids() {
        let a = sys.closed_loop(p, p)?;
        if !is_hurwitz(&a)? {
            return Err(NumericsError::Synthesis(format!("ideal loop of mode {p} is not Hurwitz")).into());
        }
        closed.push(a);
    }
    let mut eps = 0.0f64;
    for a in &closed {
        eps = eps.max(1e-3 * operator_norm(a)?);
    }
    let ident = DMatrix::<f64>::identity(n, n);
    let mut xs = Vec::new();
    for a in &closed {
        let x = lyapunov_solve(a, &ident)?;
        let scale = x.norm();
        xs.push(x / scale);
    }
    let combine = |w: &[f64]| -> Matrix {
        let total: f64 = w.iter().sum();
        xs.iter().zip(w).fold(Matrix::zeros(n, n), |acc, (x, wi)| acc + x * (*wi / total))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![1.0; xs.len()];
    let mut best = combine(&w);
    let mut best_val = worst(&closed, &best).1;
    let mut used = 0;
    let mut stall = 0;
    for round in 1..=rounds {
        used = round;
        if best_val + eps <= 0.0 {
            break;
        }
        let cand = combine(&w);
        let (i, v) = worst(&closed, &cand);
        if v < best_val {
            best = cand;
            best_val = v;
            stall = 0;
        } else {
            stall += 1;
        }
        if stall >= 8 {
            w.iter_mut().for_each(|wi| *wi = rng.random_range(0.05..1.0));
            stall = 0;
        } else {
            w[i] *= 1.5;
        }
    }

    // V̇ ≤ λmax(A_clᵀP + PA_cl)‖x‖², so scaling P to make that −2C doubles
    // the requested decay on the ideal loops.
    let p_norm = best.clone();
    let (_, v) = worst(&closed, &p_norm);
    let scale = if v < 0.0 { 2.0 * template.c / (-v) } else { 1.0 };
    let p = SpdMatrix::new(p_norm * scale)?;
    let (_, v) = worst(&closed, p.matrix());
    Ok(PCandidate {
        p,
        ideal_margin: v + eps * scale,
        rounds_used: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example;
    use crate::simulator::ModeData;
    use std::collections::BTreeMap;

    #[test]
    fn single_mode_is_the_lyapunov_solution() {
        let full = example::system().unwrap();
        let sys = SwitchedSystem::new(BTreeMap::from([(1, full.mode(1).unwrap().clone())])).unwrap();
        let spec = example::lyapunov_spec().unwrap();
        let c = suggest_p(&sys, &spec, 10, 0).unwrap();
        let a = sys.closed_loop(1, 1).unwrap();
        let x = lyapunov_solve(&a, &DMatrix::identity(2, 2)).unwrap();
        let ratio = c.p.matrix()[(0, 0)] / x[(0, 0)];
        assert!((c.p.matrix() - &x * ratio).amax() < 1e-9 * ratio);
        assert!(c.ideal_margin <= 0.0);
    }

    #[test]
    fn duplicated_mode_gives_same_candidate() {
        let full = example::system().unwrap();
        let d = full.mode(1).unwrap().clone();
        let one = SwitchedSystem::new(BTreeMap::from([(1, d.clone())])).unwrap();
        let two = SwitchedSystem::new(BTreeMap::from([(1, d.clone()), (2, d)])).unwrap();
        let spec = example::lyapunov_spec().unwrap();
        let a = suggest_p(&one, &spec, 10, 0).unwrap();
        let b = suggest_p(&two, &spec, 10, 0).unwrap();
        assert!((a.p.matrix() - b.p.matrix()).amax() < 1e-9);
    }

    #[test]
    fn example_candidate_is_common() {
        let spec = example::lyapunov_spec().unwrap();
        let c = suggest_p(&example::system().unwrap(), &spec, 200, 1).unwrap();
        assert!(c.ideal_margin <= 0.0, "{c:?}");
    }

    #[test]
    fn unstable_ideal_loop_is_rejected() {
        let sys = SwitchedSystem::new(BTreeMap::from([(
            1,
            ModeData {
                a: Matrix::identity(2, 2),
                b: Matrix::zeros(2, 1),
                k: Matrix::zeros(1, 2),
            },
        )]))
        .unwrap();
        let spec = example::lyapunov_spec().unwrap();
        assert!(matches!(
            suggest_p(&sys, &spec, 5, 0),
            Err(CertifyError::Numerics(NumericsError::Synthesis(_)))
        ));
    }
}
