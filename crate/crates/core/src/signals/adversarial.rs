//! Worst-case dwell-time signals that nearly saturate the mismatch bounds.

use serde::{Deserialize, Serialize};

use super::{check_ts, sample_time, SignalError, Switch, SwitchingSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialVariant {
    /// Mismatch counted from time zero.
    FromZero,
    /// Mismatch counted from an onset `T₀` with `σ(T₀) ≠ σ([T₀]⁻)`.
    AfterT0,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialInstance {
    pub signal: SwitchingSignal,
    /// Evaluation time `t`.
    pub t: f64,
    pub t0: Option<f64>,
}

/// Builds a dwell-`n·Ts` signal alternating between modes 1 and 2 whose
/// mismatch comes within `Ts/n + epsilon` of the upper bound.
///
/// * `FromZero`: switches at `k·n·Ts + ε/m` (`k = 1..m`), `t = m·n·Ts + Ts`,
///   giving `μ(0,t) = t/n − (Ts/n + ε)`.
/// * `AfterT0`: `[T₀]⁻ = n·Ts`, `T₀ − [T₀]⁻ = ε/(2(m+1))` with a switch at
///   `T₀`, then switches at `T₀ + k·n·Ts + ε/(2(m+1))`, and
///   `t = T₀ + m·n·Ts + Ts`, giving `μ(T₀,t) ≥ Ts + (t−T₀)/n − (Ts/n + ε)`.
pub fn adversarial_signal(
    n: u32,
    ts: f64,
    m: u32,
    epsilon: f64,
    variant: AdversarialVariant,
) -> Result<AdversarialInstance, SignalError> {
    check_ts(ts)?;
    if n == 0 || m == 0 {
        return Err(SignalError::InvalidParameter("n and m must be at least 1".into()));
    }
    if !(epsilon > 0.0 && epsilon < ts * f64::from(m)) {
        return Err(SignalError::InvalidParameter(format!(
            "epsilon must lie in (0, m*Ts), got {epsilon}"
        )));
    }
    let (nf, mf) = (f64::from(n), f64::from(m));
    let mode_after = |k: u32| if k.is_multiple_of(2) { 1 } else { 2 };
    match variant {
        AdversarialVariant::FromZero => {
            let offset = epsilon / mf;
            let switches = (1..=m)
                .map(|k| Switch {
                    time: f64::from(k) * nf * ts + offset,
                    mode: mode_after(k),
                })
                .collect();
            Ok(AdversarialInstance {
                signal: SwitchingSignal::new(1, switches)?,
                t: mf * nf * ts + ts,
                t0: None,
            })
        }
        AdversarialVariant::AfterT0 => {
            let half = epsilon / (2.0 * (mf + 1.0));
            let t0 = sample_time(u64::from(n), ts) + half;
            let mut switches = vec![Switch { time: t0, mode: 2 }];
            switches.extend((1..=m).map(|k| Switch {
                time: t0 + f64::from(k) * nf * ts + half,
                mode: mode_after(k + 1),
            }));
            Ok(AdversarialInstance {
                signal: SwitchingSignal::new(1, switches)?,
                t: t0 + mf * nf * ts + ts,
                t0: Some(t0),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{mu_upper_bound_check, total_mismatch};

    #[test]
    fn from_zero_hand_values() {
        let inst = adversarial_signal(2, 0.025, 4, 0.004, AdversarialVariant::FromZero).unwrap();
        assert!((inst.t - 0.225).abs() < 1e-15);
        let mu = total_mismatch(&inst.signal, 0.025, 0.0, inst.t).unwrap();
        assert!((mu - 0.096).abs() < 1e-14, "{mu}");
        let lower = inst.t / 2.0 - (0.0125 + 0.004);
        assert!(mu >= lower - 1e-14);
    }

    #[test]
    fn after_t0_onset_is_mismatched() {
        let inst = adversarial_signal(3, 0.025, 5, 0.01, AdversarialVariant::AfterT0).unwrap();
        let t0 = inst.t0.unwrap();
        assert!(inst.signal.is_mismatched(0.025, t0).unwrap());
        assert!(inst.signal.dwell_time(inst.t).unwrap() >= 3.0 * 0.025 * (1.0 - 1e-9));
    }

    #[test]
    fn upper_bound_margin_is_tight() {
        let (n, ts, eps) = (2, 0.025, 1e-3);
        let inst = adversarial_signal(n, ts, 10, eps, AdversarialVariant::FromZero).unwrap();
        let c = mu_upper_bound_check(&inst.signal, ts, n, inst.t, None).unwrap();
        assert!(c.ok);
        assert!(c.bound - c.mu <= ts / f64::from(n) + eps + 1e-12);
    }

    #[test]
    fn long_horizon_reaches_target() {
        let inst = adversarial_signal(1, 0.025, 400, 0.01, AdversarialVariant::FromZero).unwrap();
        assert!(inst.t >= 10.0);
    }

    #[test]
    fn parameter_errors() {
        assert!(adversarial_signal(0, 0.025, 4, 0.001, AdversarialVariant::FromZero).is_err());
        assert!(adversarial_signal(2, 0.025, 4, 0.2, AdversarialVariant::FromZero).is_err());
        assert!(adversarial_signal(2, 0.025, 4, 0.0, AdversarialVariant::AfterT0).is_err());
    }
}
