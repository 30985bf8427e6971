//! Switching signals: evaluation, sampled evaluation, total mismatch time,
//! dwell time, and generators (random dwell-constrained and adversarial).
//!
//! Times are plain `f64` seconds. Event sweeps compare times exactly: a switch
//! meant to coincide with a sampling instant must be placed at
//! [`sample_time`]`(k, ts)` bit-for-bit.

mod adversarial;
mod mismatch;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adversarial::{adversarial_signal, AdversarialInstance, AdversarialVariant};
pub use mismatch::{mismatch_intervals, total_mismatch, MismatchProfile};

/// Mode label, as used in configuration files.
pub type Mode = usize;

/// Relative slack on the dwell-time precondition of the mismatch bounds.
///
/// Switch times built as `k·n·Ts + offset` are not exactly `n·Ts` apart in
/// floating point; this absorbs that rounding and nothing more.
pub const DWELL_RELATIVE_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("switch times must be finite, positive and strictly increasing (at index {0})")]
    BadSwitchTime(usize),
    #[error("self-switch to mode {mode} at t = {time}")]
    SelfSwitch { time: f64, mode: Mode },
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("sampling period must be positive and finite, got {0}")]
    BadSamplingPeriod(f64),
    #[error("empty window [{tau2}, {tau1})")]
    EmptyWindow { tau2: f64, tau1: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Switch {
    pub time: f64,
    pub mode: Mode,
}

/// Right-continuous piecewise-constant mode schedule with finitely many switches.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSignal {
    initial_mode: Mode,
    switches: Vec<Switch>,
}

/// The canonical `k`-th sampling instant `k·Ts`.
#[inline]
pub fn sample_time(k: u64, ts: f64) -> f64 {
    k as f64 * ts
}

/// Index `k` with `k·Ts ≤ t < (k+1)·Ts`, using the canonical sample times.
pub fn sample_index(t: f64, ts: f64) -> u64 {
    let mut k = (t / ts).floor().max(0.0) as u64;
    while k > 0 && sample_time(k, ts) > t {
        k -= 1;
    }
    while sample_time(k + 1, ts) <= t {
        k += 1;
    }
    k
}

/// `[t]⁻`: the latest sampling instant not after `t`.
pub fn last_sample(t: f64, ts: f64) -> f64 {
    sample_time(sample_index(t, ts), ts)
}

fn check_ts(ts: f64) -> Result<(), SignalError> {
    if ts.is_finite() && ts > 0.0 {
        Ok(())
    } else {
        Err(SignalError::BadSamplingPeriod(ts))
    }
}

impl SwitchingSignal {
    pub fn new(initial_mode: Mode, switches: Vec<Switch>) -> Result<Self, SignalError> {
        let mut prev_time = 0.0;
        let mut prev_mode = initial_mode;
        for (i, s) in switches.iter().enumerate() {
            if !(s.time.is_finite() && s.time > prev_time) {
                return Err(SignalError::BadSwitchTime(i));
            }
            if s.mode == prev_mode {
                return Err(SignalError::SelfSwitch {
                    time: s.time,
                    mode: s.mode,
                });
            }
            prev_time = s.time;
            prev_mode = s.mode;
        }
        Ok(Self {
            initial_mode,
            switches,
        })
    }

    pub fn constant(mode: Mode) -> Self {
        Self {
            initial_mode: mode,
            switches: Vec::new(),
        }
    }

    /// Builds a signal from `(time, new_mode)` pairs.
    pub fn from_pairs(initial_mode: Mode, pairs: &[(f64, Mode)]) -> Result<Self, SignalError> {
        Self::new(
            initial_mode,
            pairs.iter().map(|&(time, mode)| Switch { time, mode }).collect(),
        )
    }

    pub fn initial_mode(&self) -> Mode {
        self.initial_mode
    }

    pub fn switches(&self) -> &[Switch] {
        &self.switches
    }

    /// All modes the signal visits.
    pub fn modes(&self) -> Vec<Mode> {
        let mut m: Vec<Mode> = std::iter::once(self.initial_mode)
            .chain(self.switches.iter().map(|s| s.mode))
            .collect();
        m.sort_unstable();
        m.dedup();
        m
    }

    /// Number of switches at times `≤ t`.
    fn switches_up_to(&self, t: f64) -> usize {
        self.switches.partition_point(|s| s.time <= t)
    }

    /// `σ(t)`: the mode set by the latest switch at or before `t`.
    pub fn mode_at(&self, t: f64) -> Result<Mode, SignalError> {
        if !(t >= 0.0) {
            return Err(SignalError::NegativeTime(t));
        }
        Ok(self.mode_at_unchecked(t))
    }

    pub(crate) fn mode_at_unchecked(&self, t: f64) -> Mode {
        match self.switches_up_to(t) {
            0 => self.initial_mode,
            i => self.switches[i - 1].mode,
        }
    }

    /// `σ([t]⁻)`: the mode seen by the sampler for the interval containing `t`.
    pub fn sampled_mode_at(&self, ts: f64, t: f64) -> Result<Mode, SignalError> {
        check_ts(ts)?;
        if !(t >= 0.0) {
            return Err(SignalError::NegativeTime(t));
        }
        Ok(self.mode_at_unchecked(last_sample(t, ts)))
    }

    /// Smallest of the first switch time and all consecutive gaps, counting
    /// only switches before `horizon`. `None` means no switch constrains it.
    pub fn dwell_time(&self, horizon: f64) -> Option<f64> {
        let times: Vec<f64> = self
            .switches
            .iter()
            .map(|s| s.time)
            .take_while(|&t| t < horizon)
            .collect();
        let first = *times.first()?;
        Some(
            times
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(first, f64::min),
        )
    }

    /// True iff every sampling interval `[kTs, (k+1)Ts)` before `horizon`
    /// contains at most one switch.
    pub fn check_assumption1(&self, ts: f64, horizon: f64) -> Result<bool, SignalError> {
        check_ts(ts)?;
        let mut last: Option<u64> = None;
        for s in self.switches.iter().take_while(|s| s.time < horizon) {
            let k = sample_index(s.time, ts);
            if last == Some(k) {
                return Ok(false);
            }
            last = Some(k);
        }
        Ok(true)
    }

    /// Whether `σ(t) ≠ σ([t]⁻)`.
    pub fn is_mismatched(&self, ts: f64, t: f64) -> Result<bool, SignalError> {
        Ok(self.mode_at(t)? != self.sampled_mode_at(ts, t)?)
    }

    /// Seeded signal with dwell time at least `n·Ts`: gaps uniform in
    /// `[n·Ts, 3n·Ts]` and each new mode uniform among the others. Starts in
    /// `modes[0]`.
    pub fn random_dwell(modes: &[Mode], n: u32, ts: f64, horizon: f64, seed: u64) -> Result<Self, SignalError> {
        check_ts(ts)?;
        if n == 0 {
            return Err(SignalError::InvalidParameter("n must be at least 1".into()));
        }
        let mut distinct = modes.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(SignalError::InvalidParameter("need at least two distinct modes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dwell = f64::from(n) * ts;
        let mut mode = modes[0];
        let mut t = 0.0;
        let mut switches = Vec::new();
        loop {
            t += rng.random_range(dwell..=3.0 * dwell);
            if t >= horizon {
                break;
            }
            let others: Vec<Mode> = distinct.iter().copied().filter(|&m| m != mode).collect();
            mode = others[rng.random_range(0..others.len())];
            switches.push(Switch { time: t, mode });
        }
        Self::new(modes[0], switches)
    }

    /// Alternates through `modes` every `period` seconds, with the first
    /// switch at `period + offset`.
    pub fn periodic(modes: &[Mode], period: f64, offset: f64, horizon: f64) -> Result<Self, SignalError> {
        if modes.len() < 2 {
            return Err(SignalError::InvalidParameter("need at least two modes".into()));
        }
        if !(period > 0.0 && period.is_finite() && offset >= 0.0) {
            return Err(SignalError::InvalidParameter("period must be > 0 and offset >= 0".into()));
        }
        let mut switches = Vec::new();
        let mut k = 1u64;
        loop {
            let t = k as f64 * period + offset;
            if t >= horizon {
                break;
            }
            switches.push(Switch {
                time: t,
                mode: modes[(k as usize) % modes.len()],
            });
            k += 1;
        }
        Self::new(modes[0], switches)
    }

    /// Like [`SwitchingSignal::periodic`] with the switches placed exactly on
    /// the sampling grid, at `[k·n·Ts]` for `k ≥ 1`.
    pub fn periodic_on_grid(modes: &[Mode], n: u64, ts: f64, horizon: f64) -> Result<Self, SignalError> {
        check_ts(ts)?;
        if modes.len() < 2 || n == 0 {
            return Err(SignalError::InvalidParameter("need two modes and n >= 1".into()));
        }
        let mut switches = Vec::new();
        let mut k = 1u64;
        while sample_time(k * n, ts) < horizon {
            switches.push(Switch {
                time: sample_time(k * n, ts),
                mode: modes[(k as usize) % modes.len()],
            });
            k += 1;
        }
        Self::new(modes[0], switches)
    }
}

/// On-disk form: `{"initial_mode":1,"switches":[[2.1,2],[4.2,1]]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalRepr {
    initial_mode: Mode,
    #[serde(default)]
    switches: Vec<(f64, Mode)>,
}

impl Serialize for SwitchingSignal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SignalRepr {
            initial_mode: self.initial_mode,
            switches: self.switches.iter().map(|w| (w.time, w.mode)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SwitchingSignal {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = SignalRepr::deserialize(d)?;
        SwitchingSignal::from_pairs(r.initial_mode, &r.switches).map_err(serde::de::Error::custom)
    }
}

/// Result of checking μ against the dwell-time upper bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuBoundCheck {
    pub mu: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Checks `μ(0,t) < t/n`, or with `t0` given, `μ(t0,t) < Ts + (t − t0)/n`.
///
/// Requires dwell time `≥ n·Ts` (up to [`DWELL_RELATIVE_SLACK`]) and, for the
/// second form, `σ(t0) ≠ σ([t0]⁻)` and `t > t0`.
pub fn mu_upper_bound_check(
    sig: &SwitchingSignal,
    ts: f64,
    n: u32,
    t: f64,
    t0: Option<f64>,
) -> Result<MuBoundCheck, SignalError> {
    check_ts(ts)?;
    if n == 0 {
        return Err(SignalError::InvalidParameter("n must be at least 1".into()));
    }
    let required = f64::from(n) * ts;
    if let Some(d) = sig.dwell_time(t.max(t0.unwrap_or(0.0)) + ts) {
        if d < required * (1.0 - DWELL_RELATIVE_SLACK) {
            return Err(SignalError::Precondition(format!(
                "dwell time {d} is below n*Ts = {required}"
            )));
        }
    }
    let n = f64::from(n);
    match t0 {
        None => {
            let mu = total_mismatch(sig, ts, 0.0, t)?;
            let bound = t / n;
            Ok(MuBoundCheck { mu, bound, ok: mu < bound })
        }
        Some(t0) => {
            if !sig.is_mismatched(ts, t0)? {
                return Err(SignalError::Precondition(format!(
                    "σ(T0) = σ([T0]⁻) at T0 = {t0}"
                )));
            }
            let mu = total_mismatch(sig, ts, t0, t)?;
            let bound = ts + (t - t0) / n;
            Ok(MuBoundCheck { mu, bound, ok: mu < bound })
        }
    }
}
