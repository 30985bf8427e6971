//! Pass/fail checks on the two-mode benchmark, shared by the CLI's
//! `reproduce-example` command and the acceptance suite.

pub mod properties;

use std::time::{Duration, Instant};

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::certify::{certify, LyapunovSpec, theorem2_budget_check, verify_assumption3, CertificateReport, CertifyOptions, Verdict, VerifierOptions, VerifierReport};
use crate::ellipsoid::Ellipsoid;
use crate::example;
use crate::numerics::{eigenvalues, lqr_gain};
use crate::quantization::Quantizer;
use crate::signals::SwitchingSignal;
use crate::simulator::{crossing_times, simulate, verify_growth_rates, Crossings, EllipsoidPair, SimSettings, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn within(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrComparison {
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub reported_k1: Vec<f64>,
    pub reported_k2: Vec<f64>,
    pub elapsed_s: f64,
}

/// LQR gains of both plants (`Q = I`, `R = 1`) against the published ones,
/// entrywise within 0.01, in under one second.
pub fn lqr_check() -> (Check, LqrComparison) {
    let (q, r) = example::lqr_weights();
    let start = Instant::now();
    let k1 = lqr_gain(&example::a1(), &example::b1(), &q, &r);
    let k2 = lqr_gain(&example::a2(), &example::b2(), &q, &r);
    let elapsed = start.elapsed();
    let (k1, k2) = match (k1, k2) {
        (Ok(a), Ok(b)) => (a.iter().copied().collect::<Vec<_>>(), b.iter().copied().collect::<Vec<_>>()),
        (Err(e), _) | (_, Err(e)) => {
            let cmp = LqrComparison {
                k1: vec![],
                k2: vec![],
                reported_k1: example::REPORTED_K1.to_vec(),
                reported_k2: example::REPORTED_K2.to_vec(),
                elapsed_s: elapsed.as_secs_f64(),
            };
            return (Check::new("LQR reproduction", false, format!("synthesis failed: {e}")), cmp);
        }
    };
    let ok1 = within(&k1, &example::REPORTED_K1, 0.01);
    let ok2 = within(&k2, &example::REPORTED_K2, 0.01);
    let fast = elapsed < Duration::from_secs(1);
    let detail = format!(
        "K1 = [{:.5}, {:.5}] vs [1.38, -1.86] ({}), K2 = [{:.5}, {:.5}] vs [-2.80, 3.77] ({}), {:.1} ms",
        k1[0],
        k1[1],
        if ok1 { "ok" } else { "off by more than 0.01" },
        k2[0],
        k2[1],
        if ok2 { "ok" } else { "off by more than 0.01" },
        elapsed.as_secs_f64() * 1e3
    );
    let cmp = LqrComparison {
        k1,
        k2,
        reported_k1: example::REPORTED_K1.to_vec(),
        reported_k2: example::REPORTED_K2.to_vec(),
        elapsed_s: elapsed.as_secs_f64(),
    };
    (Check::new("LQR reproduction", ok1 && ok2 && fast, detail), cmp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchEigenvalues {
    /// Eigenvalues of `A₁ + B₁K₂` as `[re, im]`.
    pub plant1_gain2: Vec<[f64; 2]>,
    /// Eigenvalues of `A₂ + B₂K₁` as `[re, im]`.
    pub plant2_gain1: Vec<[f64; 2]>,
}

fn contains_real(eigs: &[Complex<f64>], target: f64, tol: f64) -> bool {
    eigs.iter().any(|z| (z.re - target).abs() <= tol && z.im.abs() <= tol)
}

/// Unstable eigenvalues of the mismatched loops `A_p + B_pK_q`, `p ≠ q`.
pub fn mismatch_eigen_check() -> (Check, MismatchEigenvalues) {
    let sys = match example::system() {
        Ok(s) => s,
        Err(e) => return (Check::new("Mismatch instability", false, e.to_string()), MismatchEigenvalues { plant1_gain2: vec![], plant2_gain1: vec![] }),
    };
    let e12 = sys.closed_loop(1, 2).ok().and_then(|m| eigenvalues(&m).ok()).unwrap_or_default();
    let e21 = sys.closed_loop(2, 1).ok().and_then(|m| eigenvalues(&m).ok()).unwrap_or_default();
    let ok = contains_real(&e12, example::REPORTED_EIG_12, 1e-3)
        && example::REPORTED_EIG_21.iter().all(|&t| contains_real(&e21, t, 1e-3));
    let fmt = |v: &[Complex<f64>]| v.iter().map(|z| format!("{:.5}", z.re)).collect::<Vec<_>>().join(", ");
    let detail = format!("eig(A1+B1K2) = {{{}}}, eig(A2+B2K1) = {{{}}}", fmt(&e12), fmt(&e21));
    let pairs = |v: &[Complex<f64>]| v.iter().map(|z| [z.re, z.im]).collect();
    (
        Check::new("Mismatch instability", ok, detail),
        MismatchEigenvalues {
            plant1_gain2: pairs(&e12),
            plant2_gain1: pairs(&e21),
        },
    )
}

/// Certificate with the published `D` override: `n = 84`, `a = 1.321 ± 1e−3`,
/// `b(a) = Ts` to `1e−12` relative, in under 0.1 s.
pub fn certificate_check(spec: &LyapunovSpec, d_override: f64) -> (Check, Option<CertificateReport>) {
    let start = Instant::now();
    let rep = (|| {
        let sys = example::system().ok()?;
        let gains = example::quantizer().gains().ok()?;
        certify(&sys, &gains, spec, example::TS, &CertifyOptions { d_override: Some(d_override) }).ok()
    })();
    let elapsed = start.elapsed();
    let Some(rep) = rep else {
        return (Check::new("Certificate reproduction", false, "certification failed".into()), None);
    };
    let n_ok = rep.n_min == Some(example::REPORTED_N);
    let a_ok = rep.a.is_some_and(|a| (a - example::REPORTED_A).abs() <= 1e-3);
    let b_ok = rep.b_of_a.is_some_and(|b| (b - example::TS).abs() <= 1e-12 * example::TS);
    let fast = elapsed < Duration::from_millis(100);
    let detail = format!(
        "n_min = {:?}, a = {:.6}, b(a) = {:e}, valid = {}, {:.2} ms",
        rep.n_min,
        rep.a.unwrap_or(f64::NAN),
        rep.b_of_a.unwrap_or(f64::NAN),
        rep.valid,
        elapsed.as_secs_f64() * 1e3
    );
    (Check::new("Certificate reproduction", n_ok && a_ok && b_ok && rep.valid && fast, detail), Some(rep))
}

/// Randomized decay check of the published `P` at `samples × time_points`.
pub fn verifier_check(spec: &LyapunovSpec, samples: u64, time_points: u32, seed: u64, threads: Option<usize>) -> (Check, Option<VerifierReport>) {
    let start = Instant::now();
    let rep = (|| {
        let sys = example::system().ok()?;
        let opts = VerifierOptions {
            n_state_samples: samples,
            n_time_samples: time_points,
            seed,
            threads,
        };
        verify_assumption3(&sys, &example::quantizer(), spec, example::TS, &opts).ok()
    })();
    let elapsed = start.elapsed();
    let Some(rep) = rep else {
        return (Check::new("Randomized verification", false, "verifier failed to run".into()), None);
    };
    let pass = rep.verdict == Verdict::Pass;
    let mut detail = format!(
        "{} samples x {} time points: {} violations, min margin {:.4}, {:.2} s",
        samples,
        time_points,
        rep.violation_count,
        rep.min_margin.unwrap_or(f64::NAN),
        elapsed.as_secs_f64()
    );
    if samples < 100_000 {
        detail.push_str(" (reduced sample count: low confidence)");
    }
    (Check::new("Randomized verification", pass, detail), Some(rep))
}

/// Simulates the fixed-dwell scenario under the report's `P` and returns it
/// with its crossings.
pub fn scenario_run(report: &CertificateReport) -> Option<(Trajectory, Crossings)> {
    let sys = example::system().ok()?;
    let sig = example::scenario_signal().ok()?;
    let spec = &report.spec;
    let st = SimSettings::new(example::TS, example::HORIZON).with_lyapunov(spec.p.clone());
    let tr = simulate(&sys, &example::quantizer(), &sig, &st, &example::x0()).ok()?;
    let ell = EllipsoidPair::new(spec.p.clone(), spec.big_r, spec.r, report.a).ok()?;
    let c = crossing_times(&tr, &ell);
    Some((tr, c))
}

/// Fixed-dwell scenario plus `n_random` seeded dwell-`n_min·Ts` signals: each
/// must pass the mismatch budget, stay in `Int Ē_P(R)`, reach `E̲_P(r)`, and
/// stay in `Int E̲_P(ar)` afterwards.
pub fn theorem2_check(report: &CertificateReport, n_random: u64, seed: u64) -> Check {
    let name = "Attractivity end-to-end";
    let Some((_, c)) = scenario_run(report) else {
        return Check::new(name, false, "scenario simulation failed".into());
    };
    let fixed_ok = c.attractive();
    let mut detail = format!(
        "fixed dwell: T_r = {}, outer exits {}, inflated exits {}",
        c.entry.map_or("none".into(), |t| format!("{t:.4}")),
        c.outer_exits.len(),
        c.inflated_exits.len()
    );
    let (Ok(sys), Some(n)) = (example::system(), report.n_min) else {
        return Check::new(name, false, "certificate has no dwell bound".into());
    };
    let spec = &report.spec;
    let Ok(ell) = EllipsoidPair::new(spec.p.clone(), spec.big_r, spec.r, report.a) else {
        return Check::new(name, false, "bad ellipsoids".into());
    };
    let st = SimSettings::new(example::TS, example::HORIZON).with_lyapunov(spec.p.clone());
    let mut failures = Vec::new();
    for i in 0..n_random {
        let s = seed.wrapping_add(i);
        let ok = (|| {
            let sig = SwitchingSignal::random_dwell(&[1, 2], n as u32, example::TS, example::HORIZON, s).ok()?;
            let budget = theorem2_budget_check(&sig, example::TS, report, None, None, example::HORIZON, example::TS).ok()?;
            if !budget.ok {
                return Some(false);
            }
            let tr = simulate(&sys, &example::quantizer(), &sig, &st, &example::x0()).ok()?;
            Some(crossing_times(&tr, &ell).attractive())
        })();
        if ok != Some(true) {
            failures.push(s);
        }
    }
    detail.push_str(&format!("; random dwell-{n}Ts signals: {}/{} ok", n_random as usize - failures.len(), n_random));
    if !failures.is_empty() {
        detail.push_str(&format!(" (failing seeds {failures:?})"));
    }
    Check::new(name, fixed_ok && failures.is_empty(), detail)
}

/// This chain's own `D` on the benchmark: inside `[45, 120]` and never
/// exceeded by `V̇/‖x‖²` on mismatched samples of `runs` random simulations.
pub fn computed_d_check(spec: &LyapunovSpec, runs: u64, seed: u64) -> (Check, Option<f64>) {
    let name = "Computed D soundness";
    let rep = (|| {
        let sys = example::system().ok()?;
        certify(&sys, &example::quantizer().gains().ok()?, spec, example::TS, &CertifyOptions::default()).ok()
    })();
    let Some(d) = rep.and_then(|r| r.d) else {
        return (Check::new(name, false, "no computed D".into()), None);
    };
    let in_range = (45.0..=120.0).contains(&d);
    let Ok(sys) = example::system() else {
        return (Check::new(name, false, "system".into()), Some(d));
    };
    let Ok(ell) = EllipsoidPair::new(spec.p.clone(), spec.big_r, spec.r, None) else {
        return (Check::new(name, false, "bad ellipsoids".into()), Some(d));
    };
    let Ok(sampler) = Ellipsoid::outer(&spec.p, spec.big_r).sampler() else {
        return (Check::new(name, false, "sampler".into()), Some(d));
    };
    let (mut violations, mut checked, mut worst) = (0usize, 0usize, f64::NEG_INFINITY);
    let horizon = 10.0;
    for i in 0..runs {
        let s = seed.wrapping_add(i);
        // Short dwell (8·Ts) to produce plenty of mismatch.
        let Ok(sig) = SwitchingSignal::random_dwell(&[1, 2], 8, example::TS, horizon, s) else {
            violations += 1;
            continue;
        };
        let x0 = {
            use rand::SeedableRng;
            sampler.sample(&mut rand_chacha::ChaCha8Rng::seed_from_u64(s))
        };
        let st = SimSettings::new(example::TS, horizon).with_lyapunov(spec.p.clone());
        match simulate(&sys, &example::quantizer(), &sig, &st, &x0) {
            Ok(tr) => {
                let g = verify_growth_rates(&tr, &ell, 0.0, d);
                violations += g.violations.iter().filter(|v| v.mismatched).count();
                checked += g.mismatched_checked;
                if let Some(m) = g.max_mismatched_rate {
                    worst = worst.max(m);
                }
            }
            Err(_) => violations += 1,
        }
    }
    let detail = format!(
        "D = {d:.4} (in [45,120]: {in_range}); {runs} runs, {checked} mismatched samples, max V'/|x|^2 = {worst:.3}, {violations} violations"
    );
    (Check::new(name, in_range && violations == 0 && checked > 0, detail), Some(d))
}
