use serde::{Deserialize, Serialize};

use super::{CertificateReport, CertifyError};
use crate::signals::{MismatchProfile, SwitchingSignal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetViolation {
    pub t: f64,
    /// `None` for the `μ(t,0) ≤ L t` form.
    pub t0: Option<f64>,
    pub mu: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetVerdict {
    pub ok: bool,
    #[serde(rename = "L")]
    pub l: f64,
    pub b_of_a: f64,
    pub t0s: Vec<f64>,
    pub points_checked: usize,
    pub first_violation: Option<BudgetViolation>,
}

/// The natural budget rate for a certificate: `1/n_min`, pulled strictly
/// below `L_max` if the two coincide.
pub fn default_budget_rate(report: &CertificateReport) -> Option<f64> {
    let l_max = report.l_max?;
    let n = report.n_min? as f64;
    Some((1.0 / n).min(l_max * (1.0 - 1e-12)))
}

/// Checks `μ(t,0) ≤ L t` and `μ(t,T₀) ≤ b(a) + L(t − T₀)` for every `T₀` in
/// `t0s` (default: all mismatch onsets before `horizon`).
///
/// `μ` grows with slope 1 on mismatch intervals and is flat elsewhere, while
/// the bounds grow with slope `L < 1`, so the worst points are the interval
/// ends; those are always checked, together with a uniform grid of spacing
/// `grid_dt` up to `horizon`.
pub fn theorem2_budget_check(
    sig: &SwitchingSignal,
    ts: f64,
    report: &CertificateReport,
    l: Option<f64>,
    t0s: Option<&[f64]>,
    horizon: f64,
    grid_dt: f64,
) -> Result<BudgetVerdict, CertifyError> {
    if !report.valid {
        return Err(CertifyError::InvalidInput("certificate is not valid".into()));
    }
    let (l_max, b) = match (report.l_max, report.b_of_a) {
        (Some(l), Some(b)) => (l, b),
        _ => return Err(CertifyError::InvalidInput("certificate has no mismatch budget".into())),
    };
    let l = match l {
        Some(l) => l,
        None => default_budget_rate(report).expect("valid certificate has n_min"),
    };
    if !(l >= 0.0 && l < l_max) {
        return Err(CertifyError::InvalidInput(format!("L = {l} must lie in [0, L_max = {l_max})")));
    }
    if !(horizon > 0.0 && grid_dt > 0.0) {
        return Err(CertifyError::InvalidInput("horizon and grid_dt must be > 0".into()));
    }
    let prof = MismatchProfile::new(sig, ts)?;
    let t0s: Vec<f64> = match t0s {
        Some(v) => {
            for &t0 in v {
                if !sig.is_mismatched(ts, t0)? {
                    return Err(CertifyError::InvalidInput(format!("T0 = {t0} is not a mismatch onset")));
                }
            }
            v.to_vec()
        }
        None => prof.onsets().take_while(|&t| t < horizon).collect(),
    };

    let mut pts: Vec<f64> = prof
        .intervals()
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .filter(|&t| t > 0.0 && t <= horizon)
        .collect();
    let steps = (horizon / grid_dt).ceil() as u64;
    pts.extend((1..=steps).map(|i| (i as f64 * grid_dt).min(horizon)));
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    let mut checked = 0;
    let mut first: Option<BudgetViolation> = None;
    let mut note = |v: BudgetViolation| {
        if first.is_none_or(|f| v.t < f.t) {
            first = Some(v);
        }
    };
    for &t in &pts {
        let mu = prof.measure(0.0, t);
        checked += 1;
        if mu > l * t {
            note(BudgetViolation { t, t0: None, mu, bound: l * t });
            break;
        }
    }
    for &t0 in &t0s {
        for &t in pts.iter().filter(|&&t| t > t0) {
            let mu = prof.measure(t0, t);
            let bound = b + l * (t - t0);
            checked += 1;
            if mu > bound {
                note(BudgetViolation { t, t0: Some(t0), mu, bound });
                break;
            }
        }
    }
    Ok(BudgetVerdict {
        ok: first.is_none(),
        l,
        b_of_a: b,
        t0s,
        points_checked: checked,
        first_violation: first,
    })
}
