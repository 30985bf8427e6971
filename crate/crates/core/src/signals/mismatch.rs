use serde::{Deserialize, Serialize};

use super::{check_ts, sample_index, sample_time, SignalError, SwitchingSignal};

/// Maximal intervals `[start, end)` on which `σ(τ) ≠ σ([τ]⁻)`.
///
/// Only sampling intervals that contain a switch can carry mismatch, so the
/// sweep walks the switches and splits each such interval at the switch
/// instants it contains.
pub fn mismatch_intervals(sig: &SwitchingSignal, ts: f64) -> Result<Vec<(f64, f64)>, SignalError> {
    check_ts(ts)?;
    Ok(intervals_unchecked(sig, ts, f64::INFINITY))
}

fn intervals_unchecked(sig: &SwitchingSignal, ts: f64, until: f64) -> Vec<(f64, f64)> {
    let sw = sig.switches();
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, s) in sw.iter().enumerate() {
        if s.time >= until {
            break;
        }
        let k = sample_index(s.time, ts);
        let held = sig.mode_at_unchecked(sample_time(k, ts));
        if s.mode == held {
            continue;
        }
        let next_sample = sample_time(k + 1, ts);
        let end = match sw.get(i + 1) {
            Some(n) if n.time < next_sample => n.time,
            _ => next_sample,
        };
        match out.last_mut() {
            Some(last) if last.1 == s.time => last.1 = end,
            _ => out.push((s.time, end)),
        }
    }
    out
}

/// `μ(τ₁, τ₂)`: the length of `{τ ∈ [tau2, tau1) : σ(τ) ≠ σ([τ]⁻)}`.
pub fn total_mismatch(sig: &SwitchingSignal, ts: f64, tau2: f64, tau1: f64) -> Result<f64, SignalError> {
    check_ts(ts)?;
    if !(tau2 >= 0.0) {
        return Err(SignalError::NegativeTime(tau2));
    }
    if !(tau1 > tau2) {
        return Err(SignalError::EmptyWindow { tau2, tau1 });
    }
    let profile = MismatchProfile::from_intervals(intervals_unchecked(sig, ts, tau1));
    Ok(profile.measure(tau2, tau1))
}

/// Precomputed mismatch intervals of one signal, for repeated `μ` queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchProfile {
    intervals: Vec<(f64, f64)>,
}

impl MismatchProfile {
    pub fn new(sig: &SwitchingSignal, ts: f64) -> Result<Self, SignalError> {
        Ok(Self::from_intervals(mismatch_intervals(sig, ts)?))
    }

    fn from_intervals(intervals: Vec<(f64, f64)>) -> Self {
        Self { intervals }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Length of the mismatch set inside `[a, b)`; zero when `b ≤ a`.
    pub fn measure(&self, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let first = self.intervals.partition_point(|&(_, end)| end <= a);
        self.intervals[first..]
            .iter()
            .take_while(|&&(start, _)| start < b)
            .map(|&(start, end)| end.min(b) - start.max(a))
            .fold(0.0, |acc, d| acc + d)
    }

    /// Starts of the mismatch intervals: the instants `T₀` after which the
    /// trajectory may leave the inner ellipsoid.
    pub fn onsets(&self) -> impl Iterator<Item = f64> + '_ {
        self.intervals.iter().map(|&(s, _)| s)
    }

    /// CSV with `start,end` columns.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("start,end\n");
        for (a, b) in &self.intervals {
            s.push_str(&format!("{a},{b}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TS: f64 = 0.025;

    #[test]
    fn no_switch_window_is_zero() {
        let s = SwitchingSignal::from_pairs(1, &[(0.03, 2)]).unwrap();
        assert_eq!(total_mismatch(&s, TS, 0.06, 1.0).unwrap(), 0.0);
        assert_eq!(total_mismatch(&SwitchingSignal::constant(1), TS, 0.0, 5.0).unwrap(), 0.0);
        // Positive zero, so CSV output reads "0" rather than "-0".
        assert!(total_mismatch(&s, TS, 0.06, 1.0).unwrap().is_sign_positive());
    }

    #[test]
    fn single_switch_hand_sweep() {
        let s = SwitchingSignal::from_pairs(1, &[(0.03, 2)]).unwrap();
        let mu = total_mismatch(&s, TS, 0.0, 0.1).unwrap();
        assert!((mu - 0.02).abs() < 1e-15, "{mu}");
        assert_eq!(mismatch_intervals(&s, TS).unwrap(), vec![(0.03, sample_time(2, TS))]);
    }

    #[test]
    fn switch_on_sample_is_free() {
        let s = SwitchingSignal::from_pairs(1, &[(sample_time(3, TS), 2)]).unwrap();
        assert_eq!(total_mismatch(&s, TS, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn two_switches_in_one_interval() {
        // 1 -> 2 -> 1 inside [0.025, 0.05): mismatch only while in mode 2.
        let s = SwitchingSignal::from_pairs(1, &[(0.03, 2), (0.04, 1)]).unwrap();
        let iv = mismatch_intervals(&s, TS).unwrap();
        assert_eq!(iv, vec![(0.03, 0.04)]);
        // 1 -> 2 -> 3: contiguous mismatch is merged.
        let s = SwitchingSignal::from_pairs(1, &[(0.03, 2), (0.04, 3)]).unwrap();
        assert_eq!(mismatch_intervals(&s, TS).unwrap(), vec![(0.03, sample_time(2, TS))]);
    }

    #[test]
    fn window_errors() {
        let s = SwitchingSignal::constant(1);
        assert!(matches!(total_mismatch(&s, TS, 1.0, 1.0), Err(SignalError::EmptyWindow { .. })));
        assert!(matches!(total_mismatch(&s, 0.0, 0.0, 1.0), Err(SignalError::BadSamplingPeriod(_))));
    }

    #[test]
    fn csv_export() {
        let s = SwitchingSignal::from_pairs(1, &[(0.03, 2)]).unwrap();
        let csv = MismatchProfile::new(&s, TS).unwrap().to_csv();
        assert_eq!(csv, "start,end\n0.03,0.05\n");
    }

    fn arb_signal() -> impl Strategy<Value = SwitchingSignal> {
        prop::collection::vec((0.001f64..0.2, 0usize..2), 0..12).prop_map(|gaps| {
            let mut t = 0.0;
            let mut mode = 1;
            let mut pairs = Vec::new();
            for (g, step) in gaps {
                t += g;
                mode = 1 + (mode + step) % 3;
                pairs.push((t, mode));
            }
            SwitchingSignal::from_pairs(1, &pairs).unwrap()
        })
    }

    proptest! {
        #[test]
        fn additivity(sig in arb_signal(), a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
            let mut v = [a, b, c];
            v.sort_by(f64::total_cmp);
            prop_assume!(v[0] < v[1] && v[1] < v[2]);
            let whole = total_mismatch(&sig, TS, v[0], v[2]).unwrap();
            let parts = total_mismatch(&sig, TS, v[0], v[1]).unwrap() + total_mismatch(&sig, TS, v[1], v[2]).unwrap();
            prop_assert!((whole - parts).abs() < 1e-14);
        }

        #[test]
        fn intervals_match_pointwise_definition(sig in arb_signal()) {
            let iv = mismatch_intervals(&sig, TS).unwrap();
            for i in 0..2_000 {
                let t = i as f64 * 1.6 / 2_000.0 + 1e-7;
                let inside = iv.iter().any(|&(a, b)| a <= t && t < b);
                prop_assert_eq!(inside, sig.is_mismatched(TS, t).unwrap(), "t = {}", t);
            }
        }
    }
}
