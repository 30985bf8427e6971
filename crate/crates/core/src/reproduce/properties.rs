//! Randomized property checks over signals, transition maps and the bound
//! chain. Every check is seeded and returns a [`Check`].

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Check;
use crate::certify::{certify, verify_assumption3, CertificateReport, CertifyOptions, VerifierOptions};
use crate::ellipsoid::Ellipsoid;
use crate::example;
use crate::numerics::{matrix_exponential, operator_norm, Matrix};
use crate::quantization::Quantizer;
use crate::signals::{
    adversarial_signal, last_sample, mu_upper_bound_check, total_mismatch, AdversarialVariant, MismatchProfile, Mode,
    SwitchingSignal,
};
use crate::simulator::{simulate, SimSettings};

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn benchmark_report() -> Option<CertificateReport> {
    let sys = example::system().ok()?;
    let gains = example::quantizer().gains().ok()?;
    certify(&sys, &gains, &example::lyapunov_spec().ok()?, example::TS, &CertifyOptions::default()).ok()
}

/// Unconstrained random signal on `[0, horizon)`: 0–15 switches at uniform
/// times, each to a different mode among 1..=3.
fn random_signal(r: &mut ChaCha8Rng, horizon: f64) -> Option<SwitchingSignal> {
    let k = r.random_range(0..=15);
    let mut times: Vec<f64> = (0..k).map(|_| r.random_range(0.0..horizon)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut mode: Mode = 1;
    let mut pairs = Vec::new();
    for t in times {
        let next = loop {
            let m = r.random_range(1..=3);
            if m != mode {
                break m;
            }
        };
        mode = next;
        pairs.push((t, mode));
    }
    SwitchingSignal::from_pairs(1, &pairs).ok()
}

/// Midpoint Riemann sum of `1[σ(τ) ≠ σ([τ]⁻)]` on `[a, b)` with step `h`.
fn riemann_mu(sig: &SwitchingSignal, ts: f64, a: f64, b: f64, h: f64) -> f64 {
    let sw = sig.switches();
    let steps = ((b - a) / h).round() as u64;
    let mut idx = 0;
    let mut total = 0.0;
    for k in 0..steps {
        let tau = a + (k as f64 + 0.5) * h;
        while idx < sw.len() && sw[idx].time <= tau {
            idx += 1;
        }
        let now = if idx == 0 { sig.initial_mode() } else { sw[idx - 1].mode };
        let Ok(held) = sig.mode_at(last_sample(tau, ts)) else {
            return f64::NAN;
        };
        if now != held {
            total += h;
        }
    }
    total
}

/// Exact `μ` against a `1e−6`-grid Riemann measure, on `[0, 1)` and a random
/// sub-window, within `2h(#switches + 1)`.
pub fn mu_oracle(n_signals: u64, seed: u64) -> Check {
    let (ts, horizon, h) = (example::TS, 1.0, 1e-6);
    let bad: Vec<String> = (0..n_signals)
        .into_par_iter()
        .filter_map(|i| {
            let mut r = rng(seed, i);
            let Some(sig) = random_signal(&mut r, horizon) else {
                return Some(format!("signal {i}: construction failed"));
            };
            let lo = (r.random_range(0.0..0.5f64) / h).round() * h;
            let hi = (r.random_range(0.6..1.0f64) / h).round() * h;
            let tol = 2.0 * h * (sig.switches().len() as f64 + 1.0);
            for (a, b) in [(0.0, horizon), (lo, hi)] {
                let exact = total_mismatch(&sig, ts, a, b).unwrap_or(f64::NAN);
                let approx = riemann_mu(&sig, ts, a, b, h);
                if !((exact - approx).abs() <= tol) {
                    return Some(format!("signal {i} on [{a},{b}): exact {exact} vs grid {approx}"));
                }
            }
            None
        })
        .collect();
    let detail = format!("{n_signals} signals, {} mismatched", bad.len());
    Check::new("mu oracle equivalence", bad.is_empty(), with_first(detail, &bad))
}

fn with_first(mut detail: String, bad: &[String]) -> String {
    if let Some(b) = bad.first() {
        detail.push_str(&format!("; first: {b}"));
    }
    detail
}

/// `μ(0,t) < t/n` and `μ(T₀,t) < Ts + (t−T₀)/n` on dwell-`n·Ts` signals,
/// `n` cycling through {1, 2, 5, 84}, at every mismatch-interval end and 20
/// random instants (and for every onset `T₀`).
pub fn mu_upper_bounds(n_signals: u64, seed: u64) -> Check {
    let ts = example::TS;
    let ns = [1u32, 2, 5, 84];
    let results: Vec<Result<usize, String>> = (0..n_signals)
        .into_par_iter()
        .map(|i| {
            let n = ns[(i % 4) as usize];
            let horizon = 40.0 * f64::from(n) * ts;
            let mut r = rng(seed, i);
            let sig = SwitchingSignal::random_dwell(&[1, 2, 3], n, ts, horizon, seed ^ (i << 8)).map_err(|e| e.to_string())?;
            let prof = MismatchProfile::new(&sig, ts).map_err(|e| e.to_string())?;
            let mut ts_pts: Vec<f64> = prof.intervals().iter().flat_map(|&(a, b)| [a, b]).filter(|&t| t > 0.0 && t < horizon).collect();
            ts_pts.extend((0..20).map(|_| r.random_range(1e-9..horizon)));
            let mut checked = 0;
            for &t in &ts_pts {
                let c = mu_upper_bound_check(&sig, ts, n, t, None).map_err(|e| format!("n={n}: {e}"))?;
                checked += 1;
                if !c.ok {
                    return Err(format!("n={n}, t={t}: mu {} >= {}", c.mu, c.bound));
                }
            }
            for t0 in prof.onsets() {
                for &t in ts_pts.iter().filter(|&&t| t > t0) {
                    let c = mu_upper_bound_check(&sig, ts, n, t, Some(t0)).map_err(|e| format!("n={n}: {e}"))?;
                    checked += 1;
                    if !c.ok {
                        return Err(format!("n={n}, T0={t0}, t={t}: mu {} >= {}", c.mu, c.bound));
                    }
                }
            }
            Ok(checked)
        })
        .collect();
    let bad: Vec<String> = results.iter().filter_map(|r| r.as_ref().err().cloned()).collect();
    let checked: usize = results.iter().filter_map(|r| r.as_ref().ok()).sum();
    let detail = format!("{n_signals} signals, {checked} strict checks, {} failing signals", bad.len());
    Check::new("Dwell-time upper bounds on mu", bad.is_empty(), with_first(detail, &bad))
}

/// Adversarial constructions over `n ∈ {1,2,5,84}`, `m ∈ {1,3,10}`,
/// `ε ∈ {1e−4, 1e−3, 1e−2}` reach the lower bounds
/// `μ(0,t) ≥ t/n − (Ts/n + ε)` and `μ(T₀,t) ≥ Ts + (t−T₀)/n − (Ts/n + ε)`,
/// measured directly, while still obeying the upper bounds.
pub fn mu_lower_bounds() -> Check {
    let ts = example::TS;
    let mut bad = Vec::new();
    let mut cases = 0;
    for n in [1u32, 2, 5, 84] {
        for m in [1u32, 3, 10] {
            for eps in [1e-4, 1e-3, 1e-2] {
                for variant in [AdversarialVariant::FromZero, AdversarialVariant::AfterT0] {
                    cases += 1;
                    let tag = format!("n={n} m={m} eps={eps} {variant:?}");
                    let inst = match adversarial_signal(n, ts, m, eps, variant) {
                        Ok(i) => i,
                        Err(e) => {
                            bad.push(format!("{tag}: {e}"));
                            continue;
                        }
                    };
                    let nf = f64::from(n);
                    let t0 = inst.t0.unwrap_or(0.0);
                    let mu = total_mismatch(&inst.signal, ts, t0, inst.t).unwrap_or(f64::NAN);
                    let upper = if inst.t0.is_some() { ts + (inst.t - t0) / nf } else { inst.t / nf };
                    let lower = upper - (ts / nf + eps);
                    let slack = 1e-12 * inst.t;
                    if !(mu >= lower - slack && mu < upper) {
                        bad.push(format!("{tag}: mu {mu} outside [{lower}, {upper})"));
                    }
                }
            }
        }
    }
    let detail = format!("{cases} constructions, {} outside the bounds", bad.len());
    Check::new("Adversarial lower bounds on mu", bad.is_empty(), with_first(detail, &bad))
}

/// `‖Φ(t,0) − I‖ ≤ e^{Λt} − 1` for products of benchmark mode exponentials
/// along random switch sequences with `t ≤ 5·Ts`.
pub fn phi_bound(n_sequences: u64, seed: u64) -> Check {
    let Ok(sys) = example::system() else {
        return Check::new("Transition-map bound", false, "system".into());
    };
    let Ok(lam) = crate::certify::lambda_bound(&sys) else {
        return Check::new("Transition-map bound", false, "lambda".into());
    };
    let modes: Vec<(Mode, Matrix)> = sys.modes().iter().map(|(&p, d)| (p, d.a.clone())).collect();
    let mut worst = f64::NEG_INFINITY;
    let mut bad = Vec::new();
    for i in 0..n_sequences {
        let mut r = rng(seed, i);
        let t = r.random_range(1e-4..=5.0 * example::TS);
        let k = r.random_range(0..=6);
        let mut cuts: Vec<f64> = (0..k).map(|_| r.random_range(0.0..t)).collect();
        cuts.push(0.0);
        cuts.push(t);
        cuts.sort_by(f64::total_cmp);
        let mut phi = Matrix::identity(2, 2);
        for w in cuts.windows(2) {
            let a = &modes[r.random_range(0..modes.len())].1;
            match matrix_exponential(a, w[1] - w[0]) {
                Ok(e) => phi = e * phi,
                Err(e) => bad.push(format!("sequence {i}: {e}")),
            }
        }
        let lhs = operator_norm(&(phi - Matrix::identity(2, 2))).unwrap_or(f64::NAN);
        let rhs = (lam * t).exp_m1();
        worst = worst.max(lhs / rhs);
        if !(lhs <= rhs * (1.0 + 1e-12)) {
            bad.push(format!("sequence {i}: {lhs} > {rhs} at t = {t}"));
        }
    }
    let detail = format!("{n_sequences} sequences, max ratio {worst:.4}, {} violations", bad.len());
    Check::new("Transition-map bound", bad.is_empty(), with_first(detail, &bad))
}

/// Per-instant inequalities along simulated benchmark trajectories: with
/// `x₋ = x([t]⁻)` in `Ē_P(R)`, `‖x₋‖ < α₁‖x(t)‖` and `‖x(t) − x₋‖ < β₁‖x₋‖`,
/// and on mismatched instants `‖PB_pK_q(q_x − x(t))‖ < γ(p,q)‖x(t)‖`.
///
/// Runs use random `x(0)` in `Ē_P(R)` and random dwell-`8·Ts` signals so that
/// mismatch is frequent.
pub fn lemma_inequalities(runs: u64, instants_per_run: u64, seed: u64) -> Check {
    let name = "Lemma 1 / Lemma 2 / Theorem 1 inequalities";
    let (Some(rep), Ok(sys)) = (benchmark_report(), example::system()) else {
        return Check::new(name, false, "certification failed".into());
    };
    let (Some(alpha1), beta1) = (rep.alpha1, rep.beta1) else {
        return Check::new(name, false, "eta >= 1".into());
    };
    let p = example::p_matrix();
    let outer = Ellipsoid::outer(&p, example::BIG_R);
    let Ok(sampler) = outer.sampler() else {
        return Check::new(name, false, "sampler".into());
    };
    let horizon = 10.0;
    let results: Vec<Result<[usize; 3], String>> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(seed, i);
            let x0 = sampler.sample(&mut r);
            let sig = SwitchingSignal::random_dwell(&[1, 2], 8, example::TS, horizon, seed.wrapping_add(i)).map_err(|e| e.to_string())?;
            let st = SimSettings::new(example::TS, horizon).with_lyapunov(p.clone());
            let tr = simulate(&sys, &example::quantizer(), &sig, &st, &x0).map_err(|e| e.to_string())?;
            let mut counts = [0usize; 3];
            for _ in 0..instants_per_run {
                let t = r.random_range(0.0..horizon);
                let seg = &tr.segments()[tr.segment_at(t)];
                let x = tr.state_in_segment(tr.segment_at(t), t);
                let xs = &seg.x_sample;
                let (nx, nxs) = (x.norm(), xs.norm());
                if nxs == 0.0 {
                    continue;
                }
                if outer.contains(xs) {
                    counts[0] += 1;
                    if !(nxs < alpha1 * nx) {
                        return Err(format!("run {i}, t={t}: |x_s| = {nxs} >= a1|x| = {}", alpha1 * nx));
                    }
                }
                counts[1] += 1;
                let dx = (&x - xs).norm();
                if !(dx < beta1 * nxs) {
                    return Err(format!("run {i}, t={t}: |x - x_s| = {dx} >= b1|x_s| = {}", beta1 * nxs));
                }
                if seg.mismatched() {
                    counts[2] += 1;
                    let g = rep.gamma_of(seg.plant_mode, seg.gain_mode).ok_or("missing gamma")?;
                    let pbk = p.matrix() * sys.input_gain(seg.plant_mode, seg.gain_mode).map_err(|e| e.to_string())?;
                    let lhs = (pbk * (&seg.qx - &x)).norm();
                    if !(lhs < g * nx) {
                        return Err(format!("run {i}, t={t}: {lhs} >= gamma|x| = {}", g * nx));
                    }
                }
            }
            Ok(counts)
        })
        .collect();
    let bad: Vec<String> = results.iter().filter_map(|r| r.as_ref().err().cloned()).collect();
    let mut tot = [0usize; 3];
    for c in results.iter().filter_map(|r| r.as_ref().ok()) {
        for k in 0..3 {
            tot[k] += c[k];
        }
    }
    let detail = format!(
        "{runs} runs x {instants_per_run} instants: {} Lemma 1, {} Lemma 2, {} Theorem 1 checks, {} failing runs",
        tot[0],
        tot[1],
        tot[2],
        bad.len()
    );
    Check::new(name, bad.is_empty() && tot[2] > 0, with_first(detail, &bad))
}

/// Sampling oracle for `α₀` and `γ₀`: `‖B_pK_q Q(x)‖ ≤ α₀‖x‖` for all
/// ordered pairs and `‖PB_pK_q(Q(x) − x)‖ ≤ γ₀(p,q)‖x‖` for `p ≠ q`, over
/// seeded `x` uniform in `Ē_P(R)` and, every other sample, rescaled
/// log-uniformly over `[1e−4, 1e4]` to reach the deadzone and far field.
pub fn gain_soundness(n_samples: u64, seed: u64) -> Check {
    let name = "alpha0 / gamma0 soundness";
    let (Some(rep), Ok(sys)) = (benchmark_report(), example::system()) else {
        return Check::new(name, false, "certification failed".into());
    };
    let p = example::p_matrix();
    let Ok(sampler) = Ellipsoid::outer(&p, example::BIG_R).sampler() else {
        return Check::new(name, false, "sampler".into());
    };
    let q = example::quantizer();
    let ids: Vec<Mode> = sys.mode_ids().collect();
    let mut pairs = Vec::new();
    for &a in &ids {
        for &b in &ids {
            let Ok(bk) = sys.input_gain(a, b) else {
                return Check::new(name, false, "input gain".into());
            };
            let g0 = if a != b { rep.gamma0_of(a, b) } else { None };
            pairs.push((bk.clone(), p.matrix() * bk, g0));
        }
    }
    let alpha0 = rep.alpha0;
    let worst = (0..n_samples as usize)
        .into_par_iter()
        .with_min_len(1024)
        .map(|i| {
            let mut r = rng(seed, i as u64);
            let mut x: DVector<f64> = sampler.sample(&mut r);
            if i % 2 == 1 {
                let n = x.norm();
                if n > 0.0 {
                    x *= 10f64.powf(r.random_range(-4.0..4.0)) / n;
                }
            }
            let nx = x.norm();
            if nx == 0.0 {
                return (f64::NEG_INFINITY, f64::NEG_INFINITY);
            }
            let qx = q.quantize(&x);
            let err = &qx - &x;
            let (mut ra, mut rg) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for (bk, pbk, g0) in &pairs {
                ra = ra.max((bk * &qx).norm() / (alpha0 * nx));
                if let Some(g0) = g0 {
                    rg = rg.max((pbk * &err).norm() / (g0 * nx));
                }
            }
            (ra, rg)
        })
        .reduce(|| (f64::NEG_INFINITY, f64::NEG_INFINITY), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    let ok = worst.0 <= 1.0 + 1e-12 && worst.1 <= 1.0 + 1e-12;
    let detail = format!(
        "{n_samples} samples: max observed / alpha0 = {:.4}, max observed / gamma0 = {:.4}",
        worst.0, worst.1
    );
    Check::new(name, ok, detail)
}

/// Same seed, 1 vs 8 worker threads: byte-identical verifier JSON.
pub fn verifier_thread_determinism(samples: u64, seed: u64) -> Check {
    let name = "Verifier determinism across threads";
    let run = |threads| {
        let sys = example::system().ok()?;
        let spec = example::lyapunov_spec().ok()?;
        let opts = VerifierOptions {
            n_state_samples: samples,
            n_time_samples: 5,
            seed,
            threads: Some(threads),
        };
        let rep = verify_assumption3(&sys, &example::quantizer(), &spec, example::TS, &opts).ok()?;
        serde_json::to_string(&rep).ok()
    };
    match (run(1), run(8)) {
        (Some(a), Some(b)) => Check::new(name, a == b, format!("{samples} samples, {} JSON bytes, identical: {}", a.len(), a == b)),
        _ => Check::new(name, false, "verifier failed to run".into()),
    }
}
