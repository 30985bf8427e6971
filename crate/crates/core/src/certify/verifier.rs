//! Seeded randomized check of the common-Lyapunov decay condition.
//!
//! For each state sample `x₀` drawn uniformly from `Ē_P(R)` and each mode `p`,
//! the non-switched loop `ẋ = A_p x + B_p K_p Q(x₀)` is propagated over one
//! sampling interval, and at the interior instants `j/(N+1)·Ts` we require
//! `V̇_p ≤ −C‖x‖²` unless `x(t) ∈ E̲_P(r)`.
//!
//! Sample `i` draws from its own ChaCha stream `(seed, i)`, and results are
//! merged in index order, so the report does not depend on the thread count.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CertifyError, LyapunovSpec, SPEC_VERSION};
use crate::ellipsoid::Ellipsoid;
use crate::numerics::{zoh_pair, Matrix};
use crate::quantization::Quantizer;
use crate::signals::Mode;
use crate::simulator::SwitchedSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierViolation {
    pub sample: u64,
    pub x0: Vec<f64>,
    pub mode: Mode,
    pub t: f64,
    pub vdot: f64,
    /// `−C‖x(t)‖²`.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierReport {
    pub spec_version: u32,
    pub seed: u64,
    pub samples_drawn: u64,
    pub time_points_per_sample: u32,
    pub modes: Vec<Mode>,
    /// Pointwise checks performed, including exempt ones.
    pub checks: u64,
    /// Checks satisfied through `x(t) ∈ E̲_P(r)`.
    pub exempt_inner: u64,
    /// Smallest `(−C‖x‖² − V̇)/‖x‖²` over non-exempt checks; negative on violation.
    pub min_margin: Option<f64>,
    pub violation_count: u64,
    /// The first violations in sample order, capped at
    /// [`VerifierReport::MAX_LISTED`].
    pub violations: Vec<VerifierViolation>,
    pub verdict: Verdict,
}

impl VerifierReport {
    pub const MAX_LISTED: usize = 100;
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifierOptions {
    pub n_state_samples: u64,
    pub n_time_samples: u32,
    pub seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

struct ModeStep {
    mode: Mode,
    a: Matrix,
    bk: Matrix,
    /// `(t_j, Φ(t_j), Γ(t_j))` for each interior instant.
    steps: Vec<(f64, Matrix, Matrix)>,
}

#[derive(Default)]
struct Partial {
    checks: u64,
    exempt: u64,
    min_margin: Option<f64>,
    violations: Vec<VerifierViolation>,
}

fn check_sample(
    idx: u64,
    seed: u64,
    sampler: &crate::ellipsoid::EllipsoidSampler,
    modes: &[ModeStep],
    q: &dyn Quantizer,
    spec: &LyapunovSpec,
) -> Partial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(idx);
    let x0 = sampler.sample(&mut rng);
    let qx = q.quantize(&x0);
    let inner = spec.inner_level();
    let p = spec.p.matrix();
    let mut out = Partial::default();
    for m in modes {
        let drift: DVector<f64> = &m.bk * &qx;
        for (t, phi, gam) in &m.steps {
            let x = phi * &x0 + gam * &drift;
            out.checks += 1;
            if spec.p.quadratic_form(&x) <= inner {
                out.exempt += 1;
                continue;
            }
            let nx2 = x.norm_squared();
            let vdot = 2.0 * x.dot(&(p * (&m.a * &x + &drift)));
            let threshold = -spec.c * nx2;
            let margin = (threshold - vdot) / nx2;
            out.min_margin = Some(out.min_margin.map_or(margin, |v: f64| v.min(margin)));
            if vdot > threshold {
                out.violations.push(VerifierViolation {
                    sample: idx,
                    x0: x0.iter().copied().collect(),
                    mode: m.mode,
                    t: *t,
                    vdot,
                    threshold,
                });
            }
        }
    }
    out
}

/// Runs the randomized decay check. Violations are data, not errors.
pub fn verify_assumption3(
    sys: &SwitchedSystem,
    q: &dyn Quantizer,
    spec: &LyapunovSpec,
    ts: f64,
    opts: &VerifierOptions,
) -> Result<VerifierReport, CertifyError> {
    if opts.n_state_samples == 0 || opts.n_time_samples == 0 {
        return Err(CertifyError::InvalidInput("need at least one state and one time sample".into()));
    }
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(CertifyError::InvalidInput(format!("Ts must be > 0, got {ts}")));
    }
    if spec.p.dim() != sys.state_dim() {
        return Err(CertifyError::InvalidInput("P does not match the state dimension".into()));
    }
    let nt = opts.n_time_samples;
    let mut modes = Vec::new();
    for (&mode, d) in sys.modes() {
        let mut steps = Vec::with_capacity(nt as usize);
        for j in 1..=nt {
            let t = f64::from(j) / f64::from(nt + 1) * ts;
            let (phi, gam) = zoh_pair(&d.a, t)?;
            steps.push((t, phi, gam));
        }
        modes.push(ModeStep {
            mode,
            a: d.a.clone(),
            bk: &d.b * &d.k,
            steps,
        });
    }
    let sampler = Ellipsoid::outer(&spec.p, spec.big_r).sampler()?;

    let run = || -> Vec<Partial> {
        (0..opts.n_state_samples as usize)
            .into_par_iter()
            .with_min_len(256)
            .map(|i| check_sample(i as u64, opts.seed, &sampler, &modes, q, spec))
            .collect()
    };
    let parts = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CertifyError::InvalidInput(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut rep = VerifierReport {
        spec_version: SPEC_VERSION,
        seed: opts.seed,
        samples_drawn: opts.n_state_samples,
        time_points_per_sample: nt,
        modes: sys.mode_ids().collect(),
        checks: 0,
        exempt_inner: 0,
        min_margin: None,
        violation_count: 0,
        violations: Vec::new(),
        verdict: Verdict::Pass,
    };
    for p in parts {
        rep.checks += p.checks;
        rep.exempt_inner += p.exempt;
        if let Some(m) = p.min_margin {
            rep.min_margin = Some(rep.min_margin.map_or(m, |v| v.min(m)));
        }
        rep.violation_count += p.violations.len() as u64;
        let room = VerifierReport::MAX_LISTED - rep.violations.len();
        rep.violations.extend(p.violations.into_iter().take(room));
    }
    if rep.violation_count > 0 {
        rep.verdict = Verdict::Fail;
    }
    Ok(rep)
}
