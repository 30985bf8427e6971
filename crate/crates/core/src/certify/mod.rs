//! Bound chain and certificates.
//!
//! From the system, the quantizer gains and a common Lyapunov candidate
//! `(P, C, R, r)` this computes, in order:
//!
//! ```text
//! Λ   = max_p ‖A_p‖
//! α₀  = max_{p,q} ‖B_p K_q‖ · c_mag
//! η   = α₀ (e^{ΛTs} − 1) / Λ                 (needs η < 1)
//! α₁  = e^{ΛTs} / (1 − η)
//! β₁  = (e^{ΛTs} − 1)(1 + α₀/Λ)
//! γ₀  = ‖P B_p K_q‖ · c_err                  (p ≠ q)
//! γ   = α₁ (β₁ ‖P B_p K_q‖ + γ₀)
//! D   = 2 max_{p≠q} (‖P(A_p + B_p K_q)‖ + γ)
//! C_P = C/λmax(P),  D_P = D/λmin(P)
//! n   = ⌈1 + D_P/C_P⌉,  a = exp(Ts (C_P + D_P)/2),  b(a) = 2 ln a/(C_P + D_P)
//! ```
//!
//! All gains are global sector bounds, so every constant is sound without
//! restricting the state region.

mod budget;
mod suggest;
mod verifier;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{operator_norm, NumericsError, SpdMatrix};
use crate::quantization::{QuantizerError, QuantizerGains};
use crate::signals::{Mode, SignalError};
use crate::simulator::{SimError, SwitchedSystem};

pub use budget::{default_budget_rate, theorem2_budget_check, BudgetVerdict, BudgetViolation};
pub use suggest::{suggest_p, PCandidate};
pub use verifier::{verify_assumption3, Verdict, VerifierOptions, VerifierReport, VerifierViolation};

/// Schema version written into every JSON report.
pub const SPEC_VERSION: u32 = 1;

/// Slack on the integer ceiling of `1 + D_P/C_P` against float noise.
const CEIL_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Common Lyapunov candidate `V = xᵀPx` with decay `C` and radii `R > r > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LyapunovSpecRepr", into = "LyapunovSpecRepr")]
pub struct LyapunovSpec {
    pub p: SpdMatrix,
    pub c: f64,
    pub big_r: f64,
    pub r: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LyapunovSpecRepr {
    #[serde(rename = "P")]
    p: SpdMatrix,
    #[serde(rename = "C")]
    c: f64,
    #[serde(rename = "R")]
    big_r: f64,
    r: f64,
}

impl TryFrom<LyapunovSpecRepr> for LyapunovSpec {
    type Error = CertifyError;
    fn try_from(v: LyapunovSpecRepr) -> Result<Self, Self::Error> {
        LyapunovSpec::new(v.p, v.c, v.big_r, v.r)
    }
}

impl From<LyapunovSpec> for LyapunovSpecRepr {
    fn from(v: LyapunovSpec) -> Self {
        Self {
            p: v.p,
            c: v.c,
            big_r: v.big_r,
            r: v.r,
        }
    }
}

impl LyapunovSpec {
    pub fn new(p: SpdMatrix, c: f64, big_r: f64, r: f64) -> Result<Self, CertifyError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(CertifyError::InvalidInput(format!("C must be > 0, got {c}")));
        }
        if !(r > 0.0 && big_r > r && big_r.is_finite()) {
            return Err(CertifyError::InvalidInput(format!("need R > r > 0, got R = {big_r}, r = {r}")));
        }
        Ok(Self { p, c, big_r, r })
    }

    pub fn outer_level(&self) -> f64 {
        self.big_r * self.big_r * self.p.lambda_max()
    }

    pub fn inner_level(&self) -> f64 {
        self.r * self.r * self.p.lambda_min()
    }
}

/// A constant indexed by an ordered mode pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairValue {
    pub p: Mode,
    pub q: Mode,
    pub value: f64,
}

pub type PairMap = BTreeMap<(Mode, Mode), f64>;

fn pair_list(m: &PairMap) -> Vec<PairValue> {
    m.iter().map(|(&(p, q), &value)| PairValue { p, q, value }).collect()
}

/// `Λ = max_p ‖A_p‖`.
pub fn lambda_bound(sys: &SwitchedSystem) -> Result<f64, CertifyError> {
    let mut lam = 0.0f64;
    for d in sys.modes().values() {
        lam = lam.max(operator_norm(&d.a)?);
    }
    Ok(lam)
}

/// `α₀ = max_{p,q} ‖B_p K_q‖ · c_mag`, over all ordered pairs including `p = q`.
pub fn alpha0(sys: &SwitchedSystem, gains: &QuantizerGains) -> Result<f64, CertifyError> {
    let mut best = 0.0f64;
    for p in sys.mode_ids() {
        for q in sys.mode_ids() {
            best = best.max(operator_norm(&sys.input_gain(p, q)?)?);
        }
    }
    Ok(best * gains.c_mag)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1 {
    pub eta: f64,
    /// `None` when `η ≥ 1`.
    pub alpha1: Option<f64>,
}

impl Lemma1 {
    pub fn eta_ok(&self) -> bool {
        self.alpha1.is_some()
    }
}

/// `(e^{ΛTs} − 1)/Λ`, continuous at `Λ = 0`.
fn expm1_over(lam: f64, ts: f64) -> f64 {
    if lam == 0.0 {
        ts
    } else {
        (lam * ts).exp_m1() / lam
    }
}

/// `η = α₀(e^{ΛTs} − 1)/Λ` and, when `η < 1`, `α₁ = e^{ΛTs}/(1 − η)`.
pub fn lemma1_constants(alpha0: f64, lam: f64, ts: f64) -> Result<Lemma1, CertifyError> {
    if !(lam >= 0.0 && ts >= 0.0 && alpha0 >= 0.0) {
        return Err(CertifyError::InvalidInput("Λ, Ts and α₀ must be non-negative".into()));
    }
    let eta = alpha0 * expm1_over(lam, ts);
    let alpha1 = (eta < 1.0).then(|| (lam * ts).exp() / (1.0 - eta));
    Ok(Lemma1 { eta, alpha1 })
}

/// `β₁ = (e^{ΛTs} − 1)(1 + α₀/Λ)`, written as `(e^{ΛTs} − 1) + α₀(e^{ΛTs} − 1)/Λ`.
pub fn lemma2_constant(alpha0: f64, lam: f64, ts: f64) -> Result<f64, CertifyError> {
    if !(lam >= 0.0 && ts >= 0.0 && alpha0 >= 0.0) {
        return Err(CertifyError::InvalidInput("Λ, Ts and α₀ must be non-negative".into()));
    }
    Ok((lam * ts).exp_m1() + alpha0 * expm1_over(lam, ts))
}

/// `γ₀(p,q) = ‖P B_p K_q‖ · c_err` for `p ≠ q`.
pub fn gamma0(sys: &SwitchedSystem, p: &SpdMatrix, gains: &QuantizerGains) -> Result<PairMap, CertifyError> {
    let mut out = PairMap::new();
    for (a, b) in sys.mismatch_pairs() {
        out.insert((a, b), operator_norm(&(p.matrix() * sys.input_gain(a, b)?))? * gains.c_err);
    }
    Ok(out)
}

/// `γ(p,q) = α₁(β₁‖P B_p K_q‖ + γ₀(p,q))`.
pub fn gamma(alpha1: f64, beta1: f64, p: &SpdMatrix, sys: &SwitchedSystem, g0: &PairMap) -> Result<PairMap, CertifyError> {
    let mut out = PairMap::new();
    for (&(a, b), &g) in g0 {
        let pbk = operator_norm(&(p.matrix() * sys.input_gain(a, b)?))?;
        out.insert((a, b), alpha1 * (beta1 * pbk + g));
    }
    Ok(out)
}

/// `D = 2 max_{p≠q}(‖P(A_p + B_p K_q)‖ + γ(p,q))`; `None` with fewer than two modes.
pub fn d_bound(p: &SpdMatrix, sys: &SwitchedSystem, g: &PairMap) -> Result<Option<f64>, CertifyError> {
    let mut best: Option<f64> = None;
    for (&(a, b), &gv) in g {
        let v = operator_norm(&(p.matrix() * sys.closed_loop(a, b)?))? + gv;
        best = Some(best.map_or(v, |m| m.max(v)));
    }
    Ok(best.map(|m| 2.0 * m))
}

/// `(C_P, D_P) = (C/λmax(P), D/λmin(P))`.
pub fn rates(c: f64, d: f64, p: &SpdMatrix) -> (f64, f64) {
    (c / p.lambda_max(), d / p.lambda_min())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MismatchBudget {
    /// Exclusive bound: any admissible `L` must satisfy `L < l_max`.
    pub l_max: f64,
    pub b_of_a: f64,
    pub a_cond_ok: bool,
}

/// `L_max = C_P/(C_P + D_P)`, `b(a) = 2 ln a/(C_P + D_P)`, and the check
/// `a²r²λmin(P) < R²λmax(P)`.
pub fn mismatch_budget(c_p: f64, d_p: f64, a: f64, spec: &LyapunovSpec) -> Result<MismatchBudget, CertifyError> {
    if !(a > 1.0) {
        return Err(CertifyError::InvalidInput(format!("a must be > 1, got {a}")));
    }
    let s = c_p + d_p;
    Ok(MismatchBudget {
        l_max: c_p / s,
        b_of_a: 2.0 * a.ln() / s,
        a_cond_ok: a * a * spec.inner_level() < spec.outer_level(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwellCertificate {
    pub n_min: u64,
    pub a: f64,
    pub valid: bool,
}

/// Smallest `n ∈ ℕ` with `n ≥ 1 + D_P/C_P`, and `a = exp(Ts(C_P + D_P)/2)`.
pub fn dwell_certificate(c_p: f64, d_p: f64, ts: f64, spec: &LyapunovSpec) -> Result<DwellCertificate, CertifyError> {
    if !(c_p > 0.0 && d_p >= 0.0 && ts > 0.0) {
        return Err(CertifyError::InvalidInput("need C_P > 0, D_P ≥ 0, Ts > 0".into()));
    }
    let x = 1.0 + d_p / c_p;
    let n_min = (x * (1.0 - CEIL_SLACK)).ceil().max(1.0) as u64;
    let a = (ts * (c_p + d_p) / 2.0).exp();
    let valid = a * a * spec.inner_level() < spec.outer_level();
    Ok(DwellCertificate { n_min, a, valid })
}

/// Where `D` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DSource {
    Computed,
    Supplied,
    /// Single-mode system: no mismatch is possible.
    NotApplicable,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CertifyOptions {
    /// Replace the computed `D` (the computed value is still reported).
    pub d_override: Option<f64>,
}

/// The full chain with validity flags and provenance notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub spec_version: u32,
    pub ts: f64,
    pub spec: LyapunovSpec,
    pub quantizer_gains: QuantizerGains,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub alpha0: f64,
    pub eta: f64,
    pub eta_ok: bool,
    pub alpha1: Option<f64>,
    pub beta1: f64,
    pub gamma0: Vec<PairValue>,
    pub gamma: Vec<PairValue>,
    pub mismatch_applicable: bool,
    /// `D` used downstream.
    #[serde(rename = "D")]
    pub d: Option<f64>,
    #[serde(rename = "D_computed")]
    pub d_computed: Option<f64>,
    #[serde(rename = "D_source")]
    pub d_source: DSource,
    #[serde(rename = "C_P")]
    pub c_p: f64,
    #[serde(rename = "D_P")]
    pub d_p: Option<f64>,
    #[serde(rename = "L_max")]
    pub l_max: Option<f64>,
    pub a: Option<f64>,
    pub b_of_a: Option<f64>,
    pub n_min: Option<u64>,
    pub a_cond_ok: bool,
    /// `eta_ok && a_cond_ok` and a usable `D`.
    pub valid: bool,
    pub provenance: BTreeMap<String, String>,
}

impl CertificateReport {
    /// `(C_P, D_P)` when `D` is available; `D_P = 0` without mismatch.
    pub fn rate_pair(&self) -> Option<(f64, f64)> {
        if self.mismatch_applicable {
            self.d_p.map(|d| (self.c_p, d))
        } else {
            Some((self.c_p, 0.0))
        }
    }

    pub fn gamma0_of(&self, p: Mode, q: Mode) -> Option<f64> {
        self.gamma0.iter().find(|v| v.p == p && v.q == q).map(|v| v.value)
    }

    pub fn gamma_of(&self, p: Mode, q: Mode) -> Option<f64> {
        self.gamma.iter().find(|v| v.p == p && v.q == q).map(|v| v.value)
    }
}

/// Computes the whole chain.
///
/// `η ≥ 1` and a failed `a`-condition are recorded as flags, not errors.
pub fn certify(
    sys: &SwitchedSystem,
    gains: &QuantizerGains,
    spec: &LyapunovSpec,
    ts: f64,
    opts: &CertifyOptions,
) -> Result<CertificateReport, CertifyError> {
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(CertifyError::InvalidInput(format!("Ts must be > 0, got {ts}")));
    }
    if spec.p.dim() != sys.state_dim() {
        return Err(CertifyError::InvalidInput(format!(
            "P is {0}x{0} but the state dimension is {1}",
            spec.p.dim(),
            sys.state_dim()
        )));
    }
    if let Some(d) = opts.d_override {
        if !(d > 0.0 && d.is_finite()) {
            return Err(CertifyError::InvalidInput(format!("D override must be > 0, got {d}")));
        }
    }
    let mut prov = BTreeMap::new();
    let note = |prov: &mut BTreeMap<String, String>, k: &str, v: &str| {
        prov.insert(k.to_string(), v.to_string());
    };

    let lambda = lambda_bound(sys)?;
    note(&mut prov, "Lambda", "max over modes of the largest singular value of A_p");
    let a0 = alpha0(sys, gains)?;
    note(
        &mut prov,
        "alpha0",
        "max over ordered pairs (p,q), p = q included, of ||B_p K_q|| times the analytic magnitude gain c_mag",
    );
    let l1 = lemma1_constants(a0, lambda, ts)?;
    note(&mut prov, "eta", "alpha0 (exp(Lambda Ts) - 1) / Lambda; alpha1 and beta1-based constants require eta < 1");
    let beta1 = lemma2_constant(a0, lambda, ts)?;
    note(&mut prov, "beta1", "(exp(Lambda Ts) - 1)(1 + alpha0/Lambda)");

    let mismatch_applicable = !sys.mismatch_pairs().is_empty();
    let g0 = gamma0(sys, &spec.p, gains)?;
    note(&mut prov, "gamma0", "||P B_p K_q|| times the analytic error gain c_err, p != q");
    let g = match l1.alpha1 {
        Some(a1) => gamma(a1, beta1, &spec.p, sys, &g0)?,
        None => PairMap::new(),
    };
    note(&mut prov, "gamma", "alpha1 (beta1 ||P B_p K_q|| + gamma0(p,q)); absent when eta >= 1");

    let d_computed = if l1.eta_ok() { d_bound(&spec.p, sys, &g)? } else { None };
    let (d, d_source) = if !mismatch_applicable {
        note(&mut prov, "D", "single mode: no mismatch, D not applicable");
        (None, DSource::NotApplicable)
    } else if let Some(dv) = opts.d_override {
        note(&mut prov, "D", "supplied externally; D_computed holds this chain's own value");
        (Some(dv), DSource::Supplied)
    } else {
        note(&mut prov, "D", "2 max over p != q of (||P (A_p + B_p K_q)|| + gamma(p,q))");
        (d_computed, DSource::Computed)
    };

    let c_p = spec.c / spec.p.lambda_max();
    let d_p = d.map(|d| d / spec.p.lambda_min());
    let d_p_eff = if mismatch_applicable { d_p } else { Some(0.0) };
    let (mut l_max, mut a, mut b_of_a, mut n_min, mut a_cond_ok) = (None, None, None, None, false);
    if let Some(dp) = d_p_eff {
        let cert = dwell_certificate(c_p, dp, ts, spec)?;
        let budget = mismatch_budget(c_p, dp, cert.a, spec)?;
        l_max = Some(budget.l_max);
        a = Some(cert.a);
        b_of_a = Some(budget.b_of_a);
        n_min = Some(cert.n_min);
        a_cond_ok = budget.a_cond_ok;
        note(&mut prov, "n_min", "smallest integer >= 1 + D_P/C_P (1e-12 relative slack)");
        note(&mut prov, "a", "exp(Ts (C_P + D_P)/2), which makes b(a) = Ts");
    }
    let valid = l1.eta_ok() && a_cond_ok && d_p_eff.is_some();
    Ok(CertificateReport {
        spec_version: SPEC_VERSION,
        ts,
        spec: spec.clone(),
        quantizer_gains: *gains,
        lambda,
        alpha0: a0,
        eta: l1.eta,
        eta_ok: l1.eta_ok(),
        alpha1: l1.alpha1,
        beta1,
        gamma0: pair_list(&g0),
        gamma: pair_list(&g),
        mismatch_applicable,
        d,
        d_computed,
        d_source,
        c_p,
        d_p,
        l_max,
        a,
        b_of_a,
        n_min,
        a_cond_ok,
        valid,
        provenance: prov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example;
    use crate::numerics::Matrix;
    use crate::quantization::Quantizer;
    use crate::simulator::ModeData;

    fn single_identity() -> SwitchedSystem {
        SwitchedSystem::new(BTreeMap::from([(
            1,
            ModeData {
                a: Matrix::identity(2, 2),
                b: Matrix::zeros(2, 1),
                k: Matrix::zeros(1, 2),
            },
        )]))
        .unwrap()
    }

    #[test]
    fn lambda_cases() {
        assert_eq!(lambda_bound(&single_identity()).unwrap(), 1.0);
        let lam = lambda_bound(&example::system().unwrap()).unwrap();
        assert!((lam - ((31.0 + 765f64.sqrt()) / 2.0).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn alpha0_cases() {
        let g = QuantizerGains::new(1.1, 1.0).unwrap();
        assert_eq!(alpha0(&single_identity(), &g).unwrap(), 0.0);
        let sys = example::system().unwrap();
        let k2 = &sys.mode(2).unwrap().k;
        let expect = 1.1 * 2f64.sqrt() * k2.norm();
        let a0 = alpha0(&sys, &g).unwrap();
        assert!((a0 - expect).abs() < 1e-10, "{a0} vs {expect}");
        assert!((a0 - 7.30).abs() < 0.01);
    }

    #[test]
    fn lemma_constants_match_formulae() {
        let l = lemma1_constants(0.0, 5.0, 0.025).unwrap();
        assert_eq!(l.eta, 0.0);
        assert!((l.alpha1.unwrap() - (0.125f64).exp()).abs() < 1e-15);
        let l = lemma1_constants(7.30493, 5.41565, 0.025).unwrap();
        assert!((l.eta - 0.19556).abs() < 1e-4, "{}", l.eta);
        assert!((l.alpha1.unwrap() - 1.42334).abs() < 1e-4);
        // Small-Ts limit.
        let l = lemma1_constants(7.3, 5.4, 1e-9).unwrap();
        assert!((l.eta - 7.3e-9).abs() < 1e-15 && (l.alpha1.unwrap() - 1.0).abs() < 1e-7);
        assert!(!lemma1_constants(7.3, 5.4, 10.0).unwrap().eta_ok());

        assert_eq!(lemma2_constant(3.0, 5.0, 0.0).unwrap(), 0.0);
        assert!((lemma2_constant(0.0, 5.0, 0.1).unwrap() - 0.5f64.exp_m1()).abs() < 1e-15);
        let b = lemma2_constant(7.30493, 5.41565, 0.025).unwrap();
        assert!((b - 0.34055).abs() < 1e-4, "{b}");
    }

    #[test]
    fn monotone_in_ts() {
        let spec = example::lyapunov_spec().unwrap();
        let mut prev = (0.0, 0.0, 1.0);
        for i in 1..=40 {
            let ts = i as f64 * 0.001;
            let eta = lemma1_constants(7.3, 5.4, ts).unwrap().eta;
            let b1 = lemma2_constant(7.3, 5.4, ts).unwrap();
            let a = dwell_certificate(0.26, 22.0, ts, &spec).unwrap().a;
            assert!(eta >= prev.0 && b1 >= prev.1 && a >= prev.2);
            prev = (eta, b1, a);
        }
    }

    #[test]
    fn gamma0_cases() {
        let sys = example::system().unwrap();
        let spec = example::lyapunov_spec().unwrap();
        let zero = QuantizerGains::new(1.0, 0.0).unwrap();
        assert!(gamma0(&sys, &spec.p, &zero).unwrap().values().all(|&v| v == 0.0));
        let g = example::quantizer().gains().unwrap();
        let g0 = gamma0(&sys, &spec.p, &g).unwrap();
        // ‖PB₂K₁‖ = ‖PB₂‖‖K₁‖ for a rank-one product.
        let pb2 = spec.p.matrix() * &sys.mode(2).unwrap().b;
        let expect = pb2.norm() * sys.mode(1).unwrap().k.norm();
        assert!((g0[&(2, 1)] - expect).abs() < 1e-10);
        assert!((pb2[(0, 0)] - 2.5682).abs() < 1e-4 && (pb2[(1, 0)] + 3.2767).abs() < 1e-4);
        let scaled = gamma0(&sys, &spec.p.scaled(3.0).unwrap(), &g).unwrap();
        for (k, v) in &g0 {
            assert!((scaled[k] - 3.0 * v).abs() < 1e-9);
        }
    }

    #[test]
    fn gamma_and_d_identities() {
        let sys = example::system().unwrap();
        let spec = example::lyapunov_spec().unwrap();
        let g0: PairMap = sys.mismatch_pairs().into_iter().map(|k| (k, 0.0)).collect();
        assert!(gamma(1.3, 0.0, &spec.p, &sys, &g0).unwrap().values().all(|&v| v == 0.0));
        let g0 = gamma0(&sys, &spec.p, &QuantizerGains::new(1.1, 1.0).unwrap()).unwrap();
        let g1 = gamma(1.3, 0.3, &spec.p, &sys, &g0).unwrap();
        let g2 = gamma(2.6, 0.3, &spec.p, &sys, &g0).unwrap();
        for k in g1.keys() {
            assert!((g2[k] - 2.0 * g1[k]).abs() < 1e-12);
        }
        assert_eq!(d_bound(&spec.p, &single_identity(), &PairMap::new()).unwrap(), None);
    }

    #[test]
    fn rates_cases() {
        let (c, d) = rates(1.0, 5.0, &SpdMatrix::identity(2));
        assert_eq!((c, d), (1.0, 5.0));
        let spec = example::lyapunov_spec().unwrap();
        let (c_p, d_p) = rates(1.0, 61.02, &spec.p);
        assert!((c_p - 0.2653).abs() < 1e-4 && (d_p - 22.00).abs() < 0.01, "{c_p} {d_p}");
        let (c2, d2) = rates(1.0, 61.02, &spec.p.scaled(2.0).unwrap());
        assert!((c2 - c_p / 2.0).abs() < 1e-12 && (d2 - d_p / 2.0).abs() < 1e-12);
    }

    #[test]
    fn dwell_certificate_cases() {
        let spec = example::lyapunov_spec().unwrap();
        let (c_p, d_p) = rates(1.0, 61.02, &spec.p);
        let cert = dwell_certificate(c_p, d_p, 0.025, &spec).unwrap();
        assert_eq!(cert.n_min, 84);
        assert!((cert.a - 1.321).abs() < 1e-3 && cert.valid);
        let b = mismatch_budget(c_p, d_p, cert.a, &spec).unwrap();
        assert!((b.b_of_a - 0.025).abs() <= 1e-12 * 0.025);
        assert!(b.a_cond_ok);

        let cert = dwell_certificate(0.3, 0.3, 0.025, &spec).unwrap();
        assert_eq!(cert.n_min, 2);
        assert!((cert.a - (0.025f64 * 0.3).exp()).abs() < 1e-15);
        let cert = dwell_certificate(0.3, 0.0, 0.025, &spec).unwrap();
        assert_eq!(cert.n_min, 1);
        assert!((cert.a - (0.025f64 * 0.15).exp()).abs() < 1e-15);
        // Integer boundary: 1 + D_P/C_P = 3 exactly.
        assert_eq!(dwell_certificate(0.1, 0.2, 0.025, &spec).unwrap().n_min, 3);
        assert!(mismatch_budget(0.3, 0.3, 1.0, &spec).is_err());
        let tiny = mismatch_budget(0.3, 0.3, 1.0 + 1e-12, &spec).unwrap();
        assert!(tiny.b_of_a < 1e-11);
    }

    #[test]
    fn full_chain_on_example() {
        let sys = example::system().unwrap();
        let spec = example::lyapunov_spec().unwrap();
        let g = example::quantizer().gains().unwrap();
        let rep = certify(&sys, &g, &spec, example::TS, &CertifyOptions::default()).unwrap();
        assert!(rep.eta_ok && rep.valid);
        assert_eq!(rep.d_source, DSource::Computed);
        let d = rep.d.unwrap();
        assert!((45.0..=120.0).contains(&d), "{d}");
        assert!((rep.gamma_of(2, 1).unwrap() - 18.13).abs() < 0.05);

        let rep = certify(&sys, &g, &spec, example::TS, &CertifyOptions { d_override: Some(61.02) }).unwrap();
        assert_eq!(rep.n_min, Some(84));
        assert_eq!(rep.d_source, DSource::Supplied);
        assert_eq!(rep.d_computed.map(|v| v == d), Some(true));
        let again = certify(&sys, &g, &spec, example::TS, &CertifyOptions { d_override: Some(61.02) }).unwrap();
        assert_eq!(serde_json::to_string(&rep).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn huge_ts_fails_eta() {
        let sys = example::system().unwrap();
        let spec = example::lyapunov_spec().unwrap();
        let g = example::quantizer().gains().unwrap();
        let rep = certify(&sys, &g, &spec, 10.0, &CertifyOptions::default()).unwrap();
        assert!(!rep.eta_ok && !rep.valid);
        assert!(rep.d.is_none() && rep.alpha1.is_none());
    }

    #[test]
    fn single_mode_marks_mismatch_not_applicable() {
        let sys = SwitchedSystem::new(BTreeMap::from([(1, example::system().unwrap().mode(1).unwrap().clone())])).unwrap();
        let spec = example::lyapunov_spec().unwrap();
        let g = example::quantizer().gains().unwrap();
        let rep = certify(&sys, &g, &spec, example::TS, &CertifyOptions::default()).unwrap();
        assert!(!rep.mismatch_applicable);
        assert_eq!(rep.d_source, DSource::NotApplicable);
        assert_eq!(rep.n_min, Some(1));
        assert!(rep.gamma0.is_empty() && rep.d.is_none());
    }

    #[test]
    fn lyapunov_json_round_trip() {
        let spec = example::lyapunov_spec().unwrap();
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.contains("\"R\":68.6") && s.contains("\"r\":0.175"));
        let back: LyapunovSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
        assert!(serde_json::from_str::<LyapunovSpec>(r#"{"P":[[1,0],[0,1]],"C":1,"R":0.1,"r":0.2}"#).is_err());
    }
}
