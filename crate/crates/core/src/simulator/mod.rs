//! Exact event-driven simulation of the sampled, quantized switched loop
//!
//! ```text
//! ẋ = A_σ(t) x + B_σ(t) K_σ([t]⁻) Q(x([t]⁻))
//! ```
//!
//! The event grid is the union of sampling instants `k·Ts` and switch times.
//! Between two events the right-hand side is constant-affine, so every
//! segment (and every dense output point inside it) is advanced exactly by
//! [`affine_step`] from the segment start.

mod crossings;

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{affine_step, is_hurwitz, lqr_gain, Matrix, NumericsError, SpdMatrix};
use crate::quantization::Quantizer;
use crate::signals::{sample_index, sample_time, Mode, SignalError, SwitchingSignal};

pub use crossings::{crossing_times, verify_growth_rates, Crossings, EllipsoidPair, GrowthReport, RateViolation};

/// Two event times closer than this many ulps (relative), but not equal,
/// are treated as a collision.
const COLLISION_ULPS: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("mode {0} is not defined by the system")]
    UnknownMode(Mode),
    #[error("switch at t = {time} collides with event at t = {other} within float resolution")]
    Collision { time: f64, other: f64 },
    #[error("invalid setting: {0}")]
    InvalidSetting(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Plant matrices and feedback gain of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeData {
    #[serde(with = "crate::numerics::serde_rows")]
    pub a: Matrix,
    #[serde(with = "crate::numerics::serde_rows")]
    pub b: Matrix,
    #[serde(with = "crate::numerics::serde_rows")]
    pub k: Matrix,
}

/// Finite family of linear plants with per-mode state-feedback gains `u = K x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSystem {
    modes: BTreeMap<Mode, ModeData>,
    state_dim: usize,
    input_dim: usize,
}

impl SwitchedSystem {
    pub fn new(modes: BTreeMap<Mode, ModeData>) -> Result<Self, SimError> {
        let first = modes
            .values()
            .next()
            .ok_or_else(|| SimError::Dimension("system has no modes".into()))?;
        let (n, m) = (first.a.nrows(), first.b.ncols());
        if n == 0 || m == 0 {
            return Err(SimError::Dimension("empty state or input dimension".into()));
        }
        for (p, d) in &modes {
            let shapes = [
                ("A", d.a.shape(), (n, n)),
                ("B", d.b.shape(), (n, m)),
                ("K", d.k.shape(), (m, n)),
            ];
            for (name, got, want) in shapes {
                if got != want {
                    return Err(SimError::Dimension(format!(
                        "mode {p}: {name} is {}x{}, expected {}x{}",
                        got.0, got.1, want.0, want.1
                    )));
                }
            }
            if ![&d.a, &d.b, &d.k].iter().all(|x| x.iter().all(|v| v.is_finite())) {
                return Err(NumericsError::NonFinite.into());
            }
        }
        Ok(Self {
            modes,
            state_dim: n,
            input_dim: m,
        })
    }

    /// Builds the system with LQR gains `K_p = −R⁻¹B_pᵀX_p` for each `(p, A_p, B_p)`.
    pub fn with_lqr_gains(plants: &[(Mode, Matrix, Matrix)], q: &SpdMatrix, r: &SpdMatrix) -> Result<Self, SimError> {
        let mut modes = BTreeMap::new();
        for (p, a, b) in plants {
            let k = lqr_gain(a, b, q, r)?;
            modes.insert(
                *p,
                ModeData {
                    a: a.clone(),
                    b: b.clone(),
                    k,
                },
            );
        }
        Self::new(modes)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn mode_ids(&self) -> impl Iterator<Item = Mode> + '_ {
        self.modes.keys().copied()
    }

    pub fn modes(&self) -> &BTreeMap<Mode, ModeData> {
        &self.modes
    }

    pub fn mode(&self, p: Mode) -> Result<&ModeData, SimError> {
        self.modes.get(&p).ok_or(SimError::UnknownMode(p))
    }

    /// `B_p K_q`.
    pub fn input_gain(&self, p: Mode, q: Mode) -> Result<Matrix, SimError> {
        Ok(&self.mode(p)?.b * &self.mode(q)?.k)
    }

    /// `A_p + B_p K_q`.
    pub fn closed_loop(&self, p: Mode, q: Mode) -> Result<Matrix, SimError> {
        Ok(&self.mode(p)?.a + self.input_gain(p, q)?)
    }

    /// Ordered pairs `(p, q)` with `p ≠ q`.
    pub fn mismatch_pairs(&self) -> Vec<(Mode, Mode)> {
        let ids: Vec<Mode> = self.mode_ids().collect();
        ids.iter()
            .flat_map(|&p| ids.iter().filter(move |&&q| q != p).map(move |&q| (p, q)))
            .collect()
    }

    /// Modes whose ideal loop `A_p + B_p K_p` is not Hurwitz. Not an error:
    /// callers decide whether to warn.
    pub fn unstable_ideal_loops(&self) -> Result<Vec<Mode>, SimError> {
        let mut out = Vec::new();
        for p in self.mode_ids() {
            if !is_hurwitz(&self.closed_loop(p, p)?)? {
                out.push(p);
            }
        }
        Ok(out)
    }
}

/// `V̇_{p,q} = 2 xᵀP(A_p x + B_p K_q q_x)`; `V̇_p` is the `q = p` case.
pub fn lyapunov_derivative(
    p_mat: &SpdMatrix,
    sys: &SwitchedSystem,
    p: Mode,
    q: Mode,
    x: &DVector<f64>,
    qx: &DVector<f64>,
) -> Result<f64, SimError> {
    let n = sys.state_dim();
    if x.len() != n || qx.len() != n || p_mat.dim() != n {
        return Err(SimError::Dimension(format!("expected state dimension {n}")));
    }
    let f = &sys.mode(p)?.a * x + sys.input_gain(p, q)? * qx;
    Ok(2.0 * x.dot(&(p_mat.matrix() * f)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub ts: f64,
    pub horizon: f64,
    /// Dense output spacing; `Ts/10` when `None`.
    pub record_dt: Option<f64>,
    /// Matrix of the recorded `V(x) = xᵀPx`; identity when `None`.
    pub lyapunov: Option<SpdMatrix>,
}

impl SimSettings {
    pub fn new(ts: f64, horizon: f64) -> Self {
        Self {
            ts,
            horizon,
            record_dt: None,
            lyapunov: None,
        }
    }

    pub fn with_record_dt(mut self, dt: f64) -> Self {
        self.record_dt = Some(dt);
        self
    }

    pub fn with_lyapunov(mut self, p: SpdMatrix) -> Self {
        self.lyapunov = Some(p);
        self
    }

    pub fn record_dt(&self) -> f64 {
        self.record_dt.unwrap_or(self.ts / 10.0)
    }
}

/// Interval between consecutive events, with everything held constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub plant_mode: Mode,
    pub gain_mode: Mode,
    /// `q_x = Q(x([t]⁻))`.
    pub qx: DVector<f64>,
    /// `x([t]⁻)`, the state at the latest sampling instant.
    pub x_sample: DVector<f64>,
    pub x_start: DVector<f64>,
    pub x_end: DVector<f64>,
    /// `B_p K_q q_x`.
    pub drift: DVector<f64>,
}

impl Segment {
    pub fn mismatched(&self) -> bool {
        self.plant_mode != self.gain_mode
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSample {
    pub time: f64,
    pub x: DVector<f64>,
    pub v: f64,
    pub plant_mode: Mode,
    pub gain_mode: Mode,
    pub mismatch: bool,
    pub segment: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrajectoryEvent {
    Sample { time: f64, index: u64 },
    Switch { time: f64, from: Mode, to: Mode },
    /// First entry into the inner ellipsoid.
    InnerEntry { time: f64 },
    InnerExit { time: f64 },
    /// Leaving the interior of the outer ellipsoid.
    OuterExit { time: f64 },
    /// Leaving the interior of the inflated inner ellipsoid after first entry.
    InflatedExit { time: f64 },
}

impl TrajectoryEvent {
    pub fn time(&self) -> f64 {
        match *self {
            TrajectoryEvent::Sample { time, .. }
            | TrajectoryEvent::Switch { time, .. }
            | TrajectoryEvent::InnerEntry { time }
            | TrajectoryEvent::InnerExit { time }
            | TrajectoryEvent::OuterExit { time }
            | TrajectoryEvent::InflatedExit { time } => time,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    segments: Vec<Segment>,
    samples: Vec<DenseSample>,
    events: Vec<TrajectoryEvent>,
    plant: BTreeMap<Mode, Matrix>,
    lyapunov: SpdMatrix,
}

impl Trajectory {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn samples(&self) -> &[DenseSample] {
        &self.samples
    }

    /// Sampling and switch events in processing order.
    pub fn events(&self) -> &[TrajectoryEvent] {
        &self.events
    }

    pub fn lyapunov(&self) -> &SpdMatrix {
        &self.lyapunov
    }

    pub fn t_start(&self) -> f64 {
        self.segments[0].t_start
    }

    pub fn horizon(&self) -> f64 {
        self.segments[self.segments.len() - 1].t_end
    }

    /// Index of the segment containing `t` (`[t_start, t_end)`, the last one
    /// closed), clamped to the simulated range.
    pub fn segment_at(&self, t: f64) -> usize {
        self.segments
            .partition_point(|s| s.t_start <= t)
            .saturating_sub(1)
    }

    /// Exact state at `t` inside segment `i`.
    pub fn state_in_segment(&self, i: usize, t: f64) -> DVector<f64> {
        let s = &self.segments[i];
        let dt = t - s.t_start;
        if dt == 0.0 {
            return s.x_start.clone();
        }
        if t == s.t_end {
            return s.x_end.clone();
        }
        let (phi, psi) = affine_step(&self.plant[&s.plant_mode], &s.drift, dt.max(0.0))
            .expect("segment data validated at simulation time");
        phi * &s.x_start + psi
    }

    pub fn state_at(&self, t: f64) -> DVector<f64> {
        self.state_in_segment(self.segment_at(t), t)
    }

    /// `ẋ` inside segment `i` at state `x`.
    pub fn velocity(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let s = &self.segments[i];
        &self.plant[&s.plant_mode] * x + &s.drift
    }

    /// CSV with columns `time,x_1..x_n,V,plant_mode,gain_mode,mismatch`.
    pub fn to_csv(&self) -> String {
        let n = self.lyapunov.dim();
        let mut out = String::from("time");
        for i in 1..=n {
            out.push_str(&format!(",x_{i}"));
        }
        out.push_str(",V,plant_mode,gain_mode,mismatch\n");
        for s in &self.samples {
            out.push_str(&format!("{}", s.time));
            for v in s.x.iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(
                ",{},{},{},{}\n",
                s.v,
                s.plant_mode,
                s.gain_mode,
                u8::from(s.mismatch)
            ));
        }
        out
    }
}

fn near(a: f64, b: f64) -> bool {
    a != b && (a - b).abs() <= COLLISION_ULPS * f64::EPSILON * a.abs().max(b.abs())
}

fn check_collisions(sig: &SwitchingSignal, ts: f64, horizon: f64) -> Result<(), SimError> {
    let mut prev: Option<f64> = None;
    for s in sig.switches().iter().take_while(|s| s.time < horizon) {
        let k = sample_index(s.time, ts);
        for other in [sample_time(k, ts), sample_time(k + 1, ts)].into_iter().chain(prev) {
            if near(s.time, other) {
                return Err(SimError::Collision { time: s.time, other });
            }
        }
        prev = Some(s.time);
    }
    Ok(())
}

/// Simulates the closed loop from `x0` at `t = 0` up to `settings.horizon`.
///
/// At each sampling instant the held state and gain refresh to `Q(x(kTs))` and
/// `K_σ(kTs)`; at each switch only the plant changes. Events at the same
/// instant are processed sample first, then switch.
pub fn simulate(
    sys: &SwitchedSystem,
    quantizer: &dyn Quantizer,
    sig: &SwitchingSignal,
    settings: &SimSettings,
    x0: &DVector<f64>,
) -> Result<Trajectory, SimError> {
    let SimSettings { ts, horizon, .. } = *settings;
    let record_dt = settings.record_dt();
    if !(ts.is_finite() && ts > 0.0) {
        return Err(SignalError::BadSamplingPeriod(ts).into());
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(SimError::InvalidSetting(format!("horizon must be > 0, got {horizon}")));
    }
    if !(record_dt.is_finite() && record_dt > 0.0) {
        return Err(SimError::InvalidSetting(format!("record_dt must be > 0, got {record_dt}")));
    }
    let n = sys.state_dim();
    if x0.len() != n {
        return Err(SimError::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(NumericsError::NonFinite.into());
    }
    let lyapunov = settings.lyapunov.clone().unwrap_or_else(|| SpdMatrix::identity(n));
    if lyapunov.dim() != n {
        return Err(SimError::Dimension(format!("P is {0}x{0}, expected {n}x{n}", lyapunov.dim())));
    }
    for m in sig.modes() {
        sys.mode(m)?;
    }
    check_collisions(sig, ts, horizon)?;

    // Merged event list: (time, sample index, switch index).
    let switches: Vec<_> = sig.switches().iter().take_while(|s| s.time < horizon).collect();
    let mut grid: Vec<(f64, Option<u64>, Option<usize>)> = Vec::new();
    let (mut k, mut j) = (0u64, 0usize);
    loop {
        let ts_k = sample_time(k, ts);
        let sample_next = (ts_k < horizon).then_some(ts_k);
        let switch_next = switches.get(j).map(|s| s.time);
        match (sample_next, switch_next) {
            (None, None) => break,
            (Some(a), Some(b)) if a == b => {
                grid.push((a, Some(k), Some(j)));
                k += 1;
                j += 1;
            }
            (Some(a), Some(b)) if b < a => {
                grid.push((b, None, Some(j)));
                j += 1;
            }
            (Some(a), _) => {
                grid.push((a, Some(k), None));
                k += 1;
            }
            (None, Some(b)) => {
                grid.push((b, None, Some(j)));
                j += 1;
            }
        }
    }

    let plant: BTreeMap<Mode, Matrix> = sys.modes().iter().map(|(p, d)| (*p, d.a.clone())).collect();
    let mut segments = Vec::with_capacity(grid.len());
    let mut samples = Vec::new();
    let mut events = Vec::new();
    let mut x = x0.clone();
    let mut plant_mode = sig.initial_mode();
    let mut gain_mode = plant_mode;
    let mut qx = DVector::zeros(n);
    let mut x_sample = x.clone();
    let mut rec = 0u64;

    for (idx, &(t, sample, switch)) in grid.iter().enumerate() {
        if let Some(kk) = sample {
            gain_mode = sig.mode_at(t)?;
            qx = quantizer.quantize(&x);
            x_sample = x.clone();
            events.push(TrajectoryEvent::Sample { time: t, index: kk });
        }
        if let Some(jj) = switch {
            let s = switches[jj];
            events.push(TrajectoryEvent::Switch {
                time: t,
                from: plant_mode,
                to: s.mode,
            });
            plant_mode = s.mode;
        }
        let last = idx + 1 == grid.len();
        let t_end = grid.get(idx + 1).map_or(horizon, |g| g.0);
        let a = &plant[&plant_mode];
        let drift = sys.input_gain(plant_mode, gain_mode)? * &qx;
        let seg_idx = segments.len();
        loop {
            let tr = rec as f64 * record_dt;
            let inside = if last { tr <= t_end } else { tr < t_end };
            if !inside {
                break;
            }
            rec += 1;
            if tr < t {
                continue;
            }
            let xr = if tr == t {
                x.clone()
            } else {
                let (phi, psi) = affine_step(a, &drift, tr - t)?;
                phi * &x + psi
            };
            samples.push(DenseSample {
                time: tr,
                v: lyapunov.quadratic_form(&xr),
                x: xr,
                plant_mode,
                gain_mode,
                mismatch: plant_mode != gain_mode,
                segment: seg_idx,
            });
        }
        let (phi, psi) = affine_step(a, &drift, t_end - t)?;
        let x_end = phi * &x + psi;
        segments.push(Segment {
            t_start: t,
            t_end,
            plant_mode,
            gain_mode,
            qx: qx.clone(),
            x_sample: x_sample.clone(),
            x_start: x.clone(),
            x_end: x_end.clone(),
            drift,
        });
        x = x_end;
    }

    Ok(Trajectory {
        segments,
        samples,
        events,
        plant,
        lyapunov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{matrix_exponential, matrix_from_rows};
    use crate::quantization::{IdentityQuantizer, LogQuantizer, ZeroQuantizer};

    fn m(rows: &[&[f64]]) -> Matrix {
        matrix_from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn single(a: Matrix, b: Matrix, k: Matrix) -> SwitchedSystem {
        SwitchedSystem::new(BTreeMap::from([(1, ModeData { a, b, k })])).unwrap()
    }

    fn two_mode() -> SwitchedSystem {
        let mut modes = BTreeMap::new();
        modes.insert(
            1,
            ModeData {
                a: m(&[&[0.0, 1.0], &[-2.0, -0.5]]),
                b: m(&[&[0.0], &[1.0]]),
                k: m(&[&[-1.0, -1.0]]),
            },
        );
        modes.insert(
            2,
            ModeData {
                a: m(&[&[0.5, 1.0], &[0.0, -1.0]]),
                b: m(&[&[1.0], &[0.0]]),
                k: m(&[&[-2.0, -0.5]]),
            },
        );
        SwitchedSystem::new(modes).unwrap()
    }

    #[test]
    fn dimension_validation() {
        let bad = BTreeMap::from([(
            1,
            ModeData {
                a: Matrix::identity(2, 2),
                b: Matrix::zeros(3, 1),
                k: Matrix::zeros(1, 2),
            },
        )]);
        assert!(matches!(SwitchedSystem::new(bad), Err(SimError::Dimension(_))));
        assert!(SwitchedSystem::new(BTreeMap::new()).is_err());
    }

    #[test]
    fn zero_quantizer_follows_free_response() {
        let a = m(&[&[-1.0, 0.3], &[0.0, -2.0]]);
        let sys = single(a.clone(), m(&[&[1.0], &[1.0]]), m(&[&[5.0, 5.0]]));
        let x0 = DVector::from_vec(vec![1.0, -2.0]);
        let st = SimSettings::new(0.025, 1.0);
        let tr = simulate(&sys, &ZeroQuantizer, &SwitchingSignal::constant(1), &st, &x0).unwrap();
        for s in tr.samples() {
            let expect = matrix_exponential(&a, s.time).unwrap() * &x0;
            assert!((&s.x - expect).amax() < 1e-12);
        }
        assert!(tr.samples().windows(2).all(|w| w[1].v < w[0].v));
    }

    fn rk4_reference(sys: &SwitchedSystem, q: &dyn Quantizer, ts: f64, x0: &DVector<f64>, t_end: f64) -> DVector<f64> {
        let d = sys.mode(1).unwrap();
        let bk = &d.b * &d.k;
        let h = 1e-6;
        let per = (ts / h).round() as usize;
        let steps = (t_end / h).round() as usize;
        let mut x = x0.clone();
        let mut qx = q.quantize(&x);
        for i in 0..steps {
            if i % per == 0 {
                qx = q.quantize(&x);
            }
            let u = &bk * &qx;
            let f = |y: &DVector<f64>| &d.a * y + &u;
            let k1 = f(&x);
            let k2 = f(&(&x + &k1 * (h / 2.0)));
            let k3 = f(&(&x + &k2 * (h / 2.0)));
            let k4 = f(&(&x + &k3 * h));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        x
    }

    #[test]
    fn agrees_with_rk4_reference() {
        let sys = single(
            m(&[&[0.0, 1.0], &[-1.0, 0.2]]),
            m(&[&[0.0], &[1.0]]),
            m(&[&[-1.0, -2.0]]),
        );
        let q = LogQuantizer::new(0.05, 1.3).unwrap();
        let x0 = DVector::from_vec(vec![1.5, -0.7]);
        // Ts = 1/32 keeps the RK4 grid aligned with the samples.
        let ts = 0.03125;
        let tr = simulate(&sys, &q, &SwitchingSignal::constant(1), &SimSettings::new(ts, 1.0), &x0).unwrap();
        let exact = tr.state_at(1.0);
        let rk = rk4_reference(&sys, &q, ts, &x0, 1.0);
        assert!((exact - rk).amax() < 1e-6);
    }

    #[test]
    fn segments_abut_and_state_is_continuous() {
        let sys = two_mode();
        let sig = SwitchingSignal::from_pairs(1, &[(0.0313, 2), (0.51, 1), (0.71, 2)]).unwrap();
        let x0 = DVector::from_vec(vec![2.0, 1.0]);
        let tr = simulate(&sys, &LogQuantizer::new(0.05, 1.2).unwrap(), &sig, &SimSettings::new(0.025, 1.0), &x0).unwrap();
        for w in tr.segments().windows(2) {
            assert_eq!(w[0].t_end, w[1].t_start);
            assert_eq!(w[0].x_end, w[1].x_start);
        }
        assert_eq!(tr.horizon(), 1.0);
        let mismatched: Vec<_> = tr.segments().iter().filter(|s| s.mismatched()).collect();
        assert_eq!(mismatched.len(), 3);
        assert_eq!((mismatched[0].t_start, mismatched[0].t_end), (0.0313, 0.05));
    }

    #[test]
    fn short_run_has_two_sample_events() {
        let sys = two_mode();
        let tr = simulate(
            &sys,
            &IdentityQuantizer,
            &SwitchingSignal::constant(1),
            &SimSettings::new(0.025, 0.05),
            &DVector::from_vec(vec![1.0, 0.0]),
        )
        .unwrap();
        let n_samples = tr
            .events()
            .iter()
            .filter(|e| matches!(e, TrajectoryEvent::Sample { .. }))
            .count();
        assert_eq!(n_samples, 2);
        assert_eq!(tr.samples().len(), 21);
        assert_eq!(tr.samples().last().unwrap().time, 0.05);
    }

    #[test]
    fn switch_on_sample_is_one_event_and_never_mismatched() {
        let sys = two_mode();
        let sig = SwitchingSignal::from_pairs(1, &[(sample_time(4, 0.025), 2)]).unwrap();
        let tr = simulate(&sys, &IdentityQuantizer, &sig, &SimSettings::new(0.025, 0.2), &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!(tr.segments().iter().all(|s| !s.mismatched()));
        assert_eq!(tr.segments().len(), 8);
        let at = tr.events().iter().position(|e| e.time() == sample_time(4, 0.025)).unwrap();
        assert!(matches!(tr.events()[at], TrajectoryEvent::Sample { .. }));
        assert!(matches!(tr.events()[at + 1], TrajectoryEvent::Switch { from: 1, to: 2, .. }));
    }

    #[test]
    fn near_collision_is_an_error() {
        let sys = two_mode();
        let t = sample_time(4, 0.025);
        let sig = SwitchingSignal::from_pairs(1, &[(t + t * f64::EPSILON, 2)]).unwrap();
        let err = simulate(&sys, &IdentityQuantizer, &sig, &SimSettings::new(0.025, 1.0), &DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, SimError::Collision { .. }));
    }

    #[test]
    fn unknown_mode_is_rejected() {
        let sig = SwitchingSignal::from_pairs(1, &[(0.3, 7)]).unwrap();
        let err = simulate(&two_mode(), &IdentityQuantizer, &sig, &SimSettings::new(0.025, 1.0), &DVector::zeros(2)).unwrap_err();
        assert_eq!(err, SimError::UnknownMode(7));
    }

    #[test]
    fn lyapunov_derivative_identities() {
        let sys = two_mode();
        let p = SpdMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let z = DVector::zeros(2);
        assert_eq!(lyapunov_derivative(&p, &sys, 1, 2, &z, &z).unwrap(), 0.0);
        let x = DVector::from_vec(vec![0.7, -1.1]);
        let acl = sys.closed_loop(1, 1).unwrap();
        let expect = x.dot(&((acl.transpose() * p.matrix() + p.matrix() * &acl) * &x));
        let got = lyapunov_derivative(&p, &sys, 1, 1, &x, &x).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_derivative_matches_finite_differences() {
        let sys = two_mode();
        let p = SpdMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let sig = SwitchingSignal::from_pairs(1, &[(0.3137, 2), (0.8011, 1)]).unwrap();
        let st = SimSettings::new(0.025, 1.2).with_lyapunov(p.clone());
        let tr = simulate(&sys, &LogQuantizer::new(0.05, 1.2).unwrap(), &sig, &st, &DVector::from_vec(vec![3.0, -1.0])).unwrap();
        let h = 1e-6;
        let mut checked = 0;
        for i in 1..=100 {
            let t = 1.2 * i as f64 / 101.0;
            let si = tr.segment_at(t);
            let seg = &tr.segments()[si];
            if t - h <= seg.t_start || t + h >= seg.t_end {
                continue;
            }
            let fd = (p.quadratic_form(&tr.state_in_segment(si, t + h)) - p.quadratic_form(&tr.state_in_segment(si, t - h))) / (2.0 * h);
            let x = tr.state_in_segment(si, t);
            let an = lyapunov_derivative(&p, &sys, seg.plant_mode, seg.gain_mode, &x, &seg.qx).unwrap();
            assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-3), "t={t}: {fd} vs {an}");
            checked += 1;
        }
        assert!(checked > 90);
    }

    #[test]
    fn simulation_is_deterministic() {
        let sys = two_mode();
        let sig = SwitchingSignal::random_dwell(&[1, 2], 3, 0.025, 2.0, 9).unwrap();
        let q = LogQuantizer::new(0.05, 1.2).unwrap();
        let st = SimSettings::new(0.025, 2.0);
        let x0 = DVector::from_vec(vec![1.0, 2.0]);
        let a = simulate(&sys, &q, &sig, &st, &x0).unwrap();
        let b = simulate(&sys, &q, &sig, &st, &x0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn csv_header() {
        let tr = simulate(
            &two_mode(),
            &IdentityQuantizer,
            &SwitchingSignal::constant(2),
            &SimSettings::new(0.025, 0.05),
            &DVector::from_vec(vec![1.0, 0.0]),
        )
        .unwrap();
        let csv = tr.to_csv();
        assert!(csv.starts_with("time,x_1,x_2,V,plant_mode,gain_mode,mismatch\n0,1,0,1,2,2,0\n"));
    }
}
