//! Ellipsoid entry/exit detection and empirical growth-rate checks along a
//! simulated trajectory.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{SimError, Trajectory, TrajectoryEvent};
use crate::numerics::SpdMatrix;

/// Outer set `Ē_P(R)`, inner set `E̲_P(r)`, and optionally the inflated
/// inner set `E̲_P(a·r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidPair {
    pub p: SpdMatrix,
    pub big_r: f64,
    pub r: f64,
    pub a: Option<f64>,
}

impl EllipsoidPair {
    pub fn new(p: SpdMatrix, big_r: f64, r: f64, a: Option<f64>) -> Result<Self, SimError> {
        if !(r > 0.0 && big_r > r && big_r.is_finite()) {
            return Err(SimError::InvalidSetting(format!("need R > r > 0, got R = {big_r}, r = {r}")));
        }
        let e = Self { p, big_r, r, a };
        if let Some(a) = a {
            if !(a > 1.0 && a.is_finite()) {
                return Err(SimError::InvalidSetting(format!("inflation a must be > 1, got {a}")));
            }
            if e.inflated_level().unwrap_or(0.0) >= e.outer_level() {
                return Err(SimError::InvalidSetting(format!(
                    "a²r²λmin(P) must stay below R²λmax(P) (a = {a})"
                )));
            }
        }
        Ok(e)
    }

    /// `R²λ_max(P)`.
    pub fn outer_level(&self) -> f64 {
        self.big_r * self.big_r * self.p.lambda_max()
    }

    /// `r²λ_min(P)`.
    pub fn inner_level(&self) -> f64 {
        self.r * self.r * self.p.lambda_min()
    }

    /// `a²r²λ_min(P)`.
    pub fn inflated_level(&self) -> Option<f64> {
        self.a.map(|a| a * a * self.inner_level())
    }
}

/// Located crossing instants. All lists are in increasing time order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Crossings {
    /// `T_r`: first time with `V ≤ r²λmin(P)`.
    pub entry: Option<f64>,
    /// Times where `V` rises above the inner level.
    pub inner_exits: Vec<f64>,
    /// Times where `V` reaches the outer level (leaving its interior).
    pub outer_exits: Vec<f64>,
    /// Times after `T_r` where `V` reaches the inflated level.
    pub inflated_exits: Vec<f64>,
}

impl Crossings {
    /// Never leaves `Int Ē_P(R)`, enters `E̲_P(r)`, and stays in
    /// `Int E̲_P(ar)` afterwards.
    pub fn attractive(&self) -> bool {
        self.outer_exits.is_empty() && self.entry.is_some() && self.inflated_exits.is_empty()
    }

    pub fn events(&self) -> Vec<TrajectoryEvent> {
        let mut ev: Vec<TrajectoryEvent> = self
            .entry
            .map(|time| TrajectoryEvent::InnerEntry { time })
            .into_iter()
            .chain(self.inner_exits.iter().map(|&time| TrajectoryEvent::InnerExit { time }))
            .chain(self.outer_exits.iter().map(|&time| TrajectoryEvent::OuterExit { time }))
            .chain(self.inflated_exits.iter().map(|&time| TrajectoryEvent::InflatedExit { time }))
            .collect();
        ev.sort_by(|a, b| a.time().total_cmp(&b.time()));
        ev
    }
}

/// Which side of a level counts as "inside" the target set.
#[derive(Clone, Copy)]
enum Side {
    /// `V > c`: outside the closed set.
    Above,
    /// `V ≥ c`: outside the open interior.
    AtOrAbove,
    /// `V ≤ c`: inside the closed set.
    AtOrBelow,
}

impl Side {
    fn holds(self, v: f64, c: f64) -> bool {
        match self {
            Side::Above => v > c,
            Side::AtOrAbove => v >= c,
            Side::AtOrBelow => v <= c,
        }
    }

    /// The predicate can turn on inside an interval only through a local
    /// maximum (`rising`) or a local minimum of `V`.
    fn rising(self) -> bool {
        !matches!(self, Side::AtOrBelow)
    }
}

struct Scanner<'a> {
    traj: &'a Trajectory,
    p: &'a SpdMatrix,
    tol: f64,
}

impl Scanner<'_> {
    fn v(&self, x: &DVector<f64>) -> f64 {
        self.p.quadratic_form(x)
    }

    fn vdot(&self, seg: usize, x: &DVector<f64>) -> f64 {
        2.0 * x.dot(&(self.p.matrix() * self.traj.velocity(seg, x)))
    }

    fn v_at(&self, seg: usize, t: f64) -> f64 {
        self.v(&self.traj.state_in_segment(seg, t))
    }

    /// Checkpoints of segment `i`: start, dense samples inside, end.
    fn checkpoints(&self, i: usize, cursor: &mut usize) -> Vec<(f64, DVector<f64>)> {
        let s = &self.traj.segments[i];
        let samples = &self.traj.samples;
        let mut pts = vec![(s.t_start, s.x_start.clone())];
        while *cursor < samples.len() && samples[*cursor].segment <= i {
            let d = &samples[*cursor];
            if d.segment == i && d.time > s.t_start && d.time < s.t_end {
                pts.push((d.time, d.x.clone()));
            }
            *cursor += 1;
        }
        if s.t_end > s.t_start {
            pts.push((s.t_end, s.x_end.clone()));
        }
        pts
    }

    /// First instant in `(lo, hi]` where `side` holds, given it fails at `lo`
    /// and holds at `hi`.
    fn bisect(&self, seg: usize, mut lo: f64, mut hi: f64, side: Side, c: f64) -> f64 {
        while hi - lo > self.tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if side.holds(self.v_at(seg, mid), c) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Interior extremum of `V` on `(lo, hi)` located by bisection on the
    /// sign of `V̇`.
    fn extremum(&self, seg: usize, mut lo: f64, mut hi: f64, rising: bool) -> f64 {
        while hi - lo > self.tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let d = self.vdot(seg, &self.traj.state_in_segment(seg, mid));
            if (d > 0.0) == rising {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// All instants at or after `from` where `side` switches from failing to
    /// holding. A predicate that already holds at the first checkpoint counts
    /// as an onset there when `initial` is set.
    fn onsets(&self, side: Side, c: f64, from: f64, initial: bool) -> Vec<f64> {
        let mut out = Vec::new();
        let mut cursor = 0;
        let mut state: Option<bool> = None;
        for i in 0..self.traj.segments.len() {
            let pts = self.checkpoints(i, &mut cursor);
            let mut prev: Option<(f64, bool)> = None;
            for (t, x) in &pts {
                let v = self.v(x);
                let now = side.holds(v, c);
                match (prev, state) {
                    (None, None) => {
                        if now && initial {
                            out.push(*t);
                        }
                    }
                    (None, Some(was)) => {
                        if now && !was {
                            out.push(*t);
                        }
                    }
                    (Some((tp, was)), _) => {
                        if now && !was {
                            out.push(self.bisect(i, tp, *t, side, c));
                        } else if !now && !was {
                            let xp = self.traj.state_in_segment(i, tp);
                            let (dl, dr) = (self.vdot(i, &xp), self.vdot(i, x));
                            let turns = if side.rising() { dl > 0.0 && dr < 0.0 } else { dl < 0.0 && dr > 0.0 };
                            if turns {
                                let te = self.extremum(i, tp, *t, side.rising());
                                if side.holds(self.v_at(i, te), c) {
                                    out.push(self.bisect(i, tp, te, side, c));
                                }
                            }
                        }
                    }
                }
                prev = Some((*t, now));
                state = Some(now);
            }
        }
        out.retain(|&t| t >= from);
        out
    }
}

/// Locates `T_r`, exits from `E̲_P(r)`, exits from `Int Ē_P(R)`, and (when
/// `a` is set) exits from `Int E̲_P(ar)` after `T_r`.
///
/// Crossings are bracketed on the dense checkpoints of each segment (plus any
/// interior extremum of `V`, found from the sign of `V̇`) and refined by
/// bisection with exact in-segment propagation to `1e−9·horizon`. An exit is
/// a crossing with `V` strictly rising; a tangential touch is not an exit.
pub fn crossing_times(traj: &Trajectory, ell: &EllipsoidPair) -> Crossings {
    let sc = Scanner {
        traj,
        p: &ell.p,
        tol: 1e-9 * traj.horizon(),
    };
    let t0 = traj.t_start();
    let entry = sc.onsets(Side::AtOrBelow, ell.inner_level(), t0, true).first().copied();
    let inner_exits = match entry {
        Some(te) => sc.onsets(Side::Above, ell.inner_level(), te, false),
        None => Vec::new(),
    };
    let outer_exits = sc.onsets(Side::AtOrAbove, ell.outer_level(), t0, true);
    let inflated_exits = match (entry, ell.inflated_level()) {
        (Some(te), Some(c)) => sc.onsets(Side::AtOrAbove, c, te, true),
        _ => Vec::new(),
    };
    Crossings {
        entry,
        inner_exits,
        outer_exits,
        inflated_exits,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateViolation {
    pub time: f64,
    pub mismatched: bool,
    /// `V̇ / ‖x‖²`.
    pub rate: f64,
    /// `−C` on matched samples, `D` on mismatched ones.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub matched_checked: usize,
    pub mismatched_checked: usize,
    /// Largest `V̇/‖x‖²` seen on matched samples (must be `≤ −C`).
    pub max_matched_rate: Option<f64>,
    /// Largest `V̇/‖x‖²` seen on mismatched samples (must be `≤ D`).
    pub max_mismatched_rate: Option<f64>,
    pub violation_count: usize,
    /// The first violations, capped at [`GrowthReport::MAX_LISTED`].
    pub violations: Vec<RateViolation>,
}

impl GrowthReport {
    pub const MAX_LISTED: usize = 100;

    pub fn matched_violations(&self) -> usize {
        self.violations.iter().filter(|v| !v.mismatched).count()
    }

    pub fn ok(&self) -> bool {
        self.violation_count == 0
    }
}

/// Checks `V̇ ≤ −C‖x‖²` on matched and `V̇ ≤ D‖x‖²` on mismatched dense
/// samples, skipping samples inside `E̲_P(r)` and samples whose held state
/// `x([t]⁻)` lies outside `Ē_P(R)`.
pub fn verify_growth_rates(traj: &Trajectory, ell: &EllipsoidPair, c: f64, d: f64) -> GrowthReport {
    let sc = Scanner { traj, p: &ell.p, tol: 0.0 };
    let (inner, outer) = (ell.inner_level(), ell.outer_level());
    let mut rep = GrowthReport {
        matched_checked: 0,
        mismatched_checked: 0,
        max_matched_rate: None,
        max_mismatched_rate: None,
        violation_count: 0,
        violations: Vec::new(),
    };
    for s in &traj.samples {
        let seg = &traj.segments[s.segment];
        let nx2 = s.x.norm_squared();
        if nx2 == 0.0 || sc.v(&s.x) <= inner || sc.v(&seg.x_sample) > outer {
            continue;
        }
        let rate = sc.vdot(s.segment, &s.x) / nx2;
        let (threshold, slot) = if s.mismatch {
            rep.mismatched_checked += 1;
            (d, &mut rep.max_mismatched_rate)
        } else {
            rep.matched_checked += 1;
            (-c, &mut rep.max_matched_rate)
        };
        *slot = Some(slot.map_or(rate, |m: f64| m.max(rate)));
        if rate > threshold {
            rep.violation_count += 1;
            if rep.violations.len() < GrowthReport::MAX_LISTED {
                rep.violations.push(RateViolation {
                    time: s.time,
                    mismatched: s.mismatch,
                    rate,
                    threshold,
                });
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{lyapunov_solve, matrix_from_rows};
    use crate::quantization::{IdentityQuantizer, ZeroQuantizer};
    use crate::signals::SwitchingSignal;
    use crate::simulator::{simulate, ModeData, SimSettings, SwitchedSystem};
    use std::collections::BTreeMap;

    fn decaying() -> (SwitchedSystem, SpdMatrix) {
        let a = matrix_from_rows(&[vec![-1.0, 2.0], vec![-2.0, -1.0]]).unwrap();
        let p = SpdMatrix::new(lyapunov_solve(&a, &nalgebra::DMatrix::identity(2, 2)).unwrap()).unwrap();
        let sys = SwitchedSystem::new(BTreeMap::from([(
            1,
            ModeData {
                a,
                b: nalgebra::DMatrix::zeros(2, 1),
                k: nalgebra::DMatrix::zeros(1, 2),
            },
        )]))
        .unwrap();
        (sys, p)
    }

    #[test]
    fn inside_from_the_start() {
        let (sys, p) = decaying();
        let st = SimSettings::new(0.025, 1.0).with_lyapunov(p.clone());
        let tr = simulate(&sys, &ZeroQuantizer, &SwitchingSignal::constant(1), &st, &DVector::from_vec(vec![0.01, 0.0])).unwrap();
        let ell = EllipsoidPair::new(p, 10.0, 1.0, Some(1.5)).unwrap();
        let c = crossing_times(&tr, &ell);
        assert_eq!(c.entry, Some(0.0));
        assert!(c.inner_exits.is_empty() && c.outer_exits.is_empty() && c.inflated_exits.is_empty());
        assert!(c.attractive());
    }

    #[test]
    fn entry_time_matches_closed_form() {
        // P = I/2 for A = −I: V = ‖x‖²/2 = ‖x0‖² e^{−2t}/2.
        let sys = SwitchedSystem::new(BTreeMap::from([(
            1,
            ModeData {
                a: -nalgebra::DMatrix::identity(2, 2),
                b: nalgebra::DMatrix::zeros(2, 1),
                k: nalgebra::DMatrix::zeros(1, 2),
            },
        )]))
        .unwrap();
        let p = SpdMatrix::identity(2);
        let tr = simulate(&sys, &ZeroQuantizer, &SwitchingSignal::constant(1), &SimSettings::new(0.1, 3.0), &DVector::from_vec(vec![3.0, 4.0])).unwrap();
        let ell = EllipsoidPair::new(p, 10.0, 1.0, None).unwrap();
        let c = crossing_times(&tr, &ell);
        let expect = 5.0f64.ln();
        assert!((c.entry.unwrap() - expect).abs() <= 2e-9 * 3.0, "{:?}", c.entry);
    }

    #[test]
    fn outward_spiral_exits_everything() {
        let a = matrix_from_rows(&[vec![0.2, 3.0], vec![-3.0, 0.2]]).unwrap();
        let sys = SwitchedSystem::new(BTreeMap::from([(
            1,
            ModeData {
                a,
                b: nalgebra::DMatrix::zeros(2, 1),
                k: nalgebra::DMatrix::zeros(1, 2),
            },
        )]))
        .unwrap();
        let tr = simulate(&sys, &IdentityQuantizer, &SwitchingSignal::constant(1), &SimSettings::new(0.05, 20.0), &DVector::from_vec(vec![0.1, 0.0])).unwrap();
        let ell = EllipsoidPair::new(SpdMatrix::identity(2), 2.0, 0.5, Some(1.5)).unwrap();
        let c = crossing_times(&tr, &ell);
        assert_eq!(c.entry, Some(0.0));
        // ‖x‖ = 0.1 e^{0.2 t}: crosses 0.5 at 5 ln 5 and 0.75 at 5 ln 7.5.
        assert!((c.inner_exits[0] - 5.0 * 5.0f64.ln()).abs() < 1e-7);
        assert!((c.inflated_exits[0] - 5.0 * 7.5f64.ln()).abs() < 1e-7);
        assert!((c.outer_exits[0] - 5.0 * 20.0f64.ln()).abs() < 1e-7);
        assert!(!c.attractive());
        assert_eq!(c.events().len(), 4);
    }

    #[test]
    fn growth_rates_of_a_matched_hurwitz_mode() {
        let (sys, p) = decaying();
        let st = SimSettings::new(0.025, 2.0).with_lyapunov(p.clone());
        let tr = simulate(&sys, &ZeroQuantizer, &SwitchingSignal::constant(1), &st, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let ell = EllipsoidPair::new(p, 10.0, 0.01, None).unwrap();
        // AᵀP + PA = −I gives V̇ = −‖x‖² exactly.
        let rep = verify_growth_rates(&tr, &ell, 1.0 - 1e-9, 0.0);
        assert!(rep.ok(), "{rep:?}");
        assert!(rep.matched_checked > 0);
        let rep = verify_growth_rates(&tr, &ell, 1.1, 0.0);
        assert_eq!(rep.violation_count, rep.matched_checked);
    }
}
