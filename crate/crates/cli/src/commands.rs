use std::error::Error;
use std::fs;
use std::path::Path;

use serde::Serialize;

use qsc_core::certify::{
    certify as run_certify, suggest_p, verify_assumption3, CertificateReport, CertifyOptions, LyapunovSpec, Verdict,
    VerifierOptions,
};
use qsc_core::example;
use qsc_core::numerics::SpdMatrix;
use qsc_core::reproduce::{self, properties, Check};
use qsc_core::signals::{MismatchProfile, SwitchingSignal};
use qsc_core::simulator::{crossing_times, simulate as run_simulate, Crossings, EllipsoidPair, SimSettings, TrajectoryEvent};

use crate::config::{example_config, ProblemConfig};
use crate::Common;

type Res = Result<Outcome, Box<dyn Error>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success = 0,
    ConfigError = 1,
    CertificateFailure = 2,
    VerificationFailure = 3,
}

const SUGGEST_ROUNDS: u32 = 200;

fn load(common: &Common) -> Result<ProblemConfig, Box<dyn Error>> {
    let path = common.config.as_ref().ok_or("--config is required")?;
    Ok(ProblemConfig::load(&path.to_string_lossy())?)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Box<dyn Error>> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports always serialize");
    s.push('\n');
    s
}

/// The configured spec, or one with a synthesized `P` when asked.
fn lyapunov(cfg: &ProblemConfig, suggest: bool, seed: u64, out: &Path) -> Result<LyapunovSpec, Box<dyn Error>> {
    if !suggest {
        return Ok(cfg.lyapunov_spec()?);
    }
    let l = cfg.lyapunov.as_ref().ok_or("lyapunov section (C, R, r) is required with --suggest-p")?;
    let sys = cfg.build_system()?;
    let template = LyapunovSpec::new(SpdMatrix::identity(sys.state_dim()), l.c, l.big_r, l.r)?;
    let cand = suggest_p(&sys, &template, SUGGEST_ROUNDS, seed)?;
    write(out, "p_candidate.json", &json(&cand))?;
    eprintln!("suggested P written to p_candidate.json (ideal-loop margin {:.3e})", cand.ideal_margin);
    Ok(LyapunovSpec::new(cand.p, l.c, l.big_r, l.r)?)
}

fn certificate(cfg: &ProblemConfig, spec: &LyapunovSpec, d_override: Option<f64>) -> Result<CertificateReport, Box<dyn Error>> {
    let sys = cfg.build_system()?;
    let gains = cfg.quantizer.build()?.gains()?;
    let opts = CertifyOptions {
        d_override: d_override.or(cfg.d_override),
    };
    Ok(run_certify(&sys, &gains, spec, cfg.ts, &opts)?)
}

pub fn certify(common: &Common, d_override: Option<f64>, suggest: bool) -> Res {
    let cfg = load(common)?;
    let seed = common.seed.unwrap_or(cfg.seed);
    let spec = lyapunov(&cfg, suggest, seed, &common.out)?;
    let rep = certificate(&cfg, &spec, d_override)?;
    let text = json(&rep);
    write(&common.out, "certificate.json", &text)?;
    print!("{text}");
    Ok(if rep.valid { Outcome::Success } else { Outcome::CertificateFailure })
}

#[derive(Serialize)]
struct SimSummary {
    #[serde(rename = "T_r")]
    t_r: Option<f64>,
    inner_exits: usize,
    outer_exits: usize,
    inflated_exits: usize,
    max_v: f64,
    attractive: Option<bool>,
}

#[derive(Serialize)]
struct EventsFile<'a> {
    spec_version: u32,
    events: Vec<TrajectoryEvent>,
    crossings: Option<&'a Crossings>,
    summary: SimSummary,
}

pub fn simulate(common: &Common, d_override: Option<f64>, proceed: bool) -> Res {
    let cfg = load(common)?;
    let seed = common.seed.unwrap_or(cfg.seed);
    let horizon = cfg.horizon()?;
    let x0 = cfg.x0()?;
    let (sig, _) = cfg.build_signal(seed)?;
    if !sig.check_assumption1(cfg.ts, horizon)? {
        eprintln!("warning: some sampling interval contains more than one switch");
        if !proceed {
            eprintln!("refusing to simulate; pass --proceed to continue anyway");
            return Ok(Outcome::ConfigError);
        }
    }
    let sys = cfg.build_system()?;
    let q = cfg.quantizer.build()?;
    let spec = match &cfg.lyapunov {
        Some(l) if l.p.is_some() => Some(cfg.lyapunov_spec()?),
        _ => None,
    };
    let mut st = SimSettings::new(cfg.ts, horizon);
    if let Some(dt) = cfg.record_dt {
        st = st.with_record_dt(dt);
    }
    if let Some(s) = &spec {
        st = st.with_lyapunov(s.p.clone());
    }
    let tr = run_simulate(&sys, q.as_ref(), &sig, &st, &x0)?;

    let mut crossings = None;
    if let Some(s) = &spec {
        let rep = certificate(&cfg, s, d_override)?;
        write(&common.out, "certificate.json", &json(&rep))?;
        let ell = EllipsoidPair::new(s.p.clone(), s.big_r, s.r, rep.a)?;
        crossings = Some(crossing_times(&tr, &ell));
    }
    let mut events = tr.events().to_vec();
    if let Some(c) = &crossings {
        events.extend(c.events());
        events.sort_by(|a, b| a.time().total_cmp(&b.time()));
    }
    let max_v = tr.samples().iter().map(|s| s.v).fold(f64::NEG_INFINITY, f64::max);
    let summary = SimSummary {
        t_r: crossings.as_ref().and_then(|c| c.entry),
        inner_exits: crossings.as_ref().map_or(0, |c| c.inner_exits.len()),
        outer_exits: crossings.as_ref().map_or(0, |c| c.outer_exits.len()),
        inflated_exits: crossings.as_ref().map_or(0, |c| c.inflated_exits.len()),
        max_v,
        attractive: crossings.as_ref().map(Crossings::attractive),
    };
    println!(
        "T_r = {}, inner-set excursions = {}, outer exits = {}, max V = {max_v}",
        summary.t_r.map_or("none".into(), |t| t.to_string()),
        summary.inner_exits,
        summary.outer_exits
    );
    write(&common.out, "trajectory.csv", &tr.to_csv())?;
    write(&common.out, "signal.json", &json(&sig))?;
    let file = EventsFile {
        spec_version: qsc_core::certify::SPEC_VERSION,
        events,
        crossings: crossings.as_ref(),
        summary,
    };
    write(&common.out, "events.json", &json(&file))?;
    Ok(Outcome::Success)
}

pub fn verify(common: &Common, samples: u64, time_samples: u32, threads: Option<usize>, suggest: bool) -> Res {
    let cfg = load(common)?;
    let seed = common.seed.unwrap_or(cfg.seed);
    let spec = lyapunov(&cfg, suggest, seed, &common.out)?;
    let sys = cfg.build_system()?;
    let q = cfg.quantizer.build()?;
    let opts = VerifierOptions {
        n_state_samples: samples,
        n_time_samples: time_samples,
        seed,
        threads,
    };
    let rep = verify_assumption3(&sys, q.as_ref(), &spec, cfg.ts, &opts)?;
    let text = json(&rep);
    write(&common.out, "verifier.json", &text)?;
    print!("{text}");
    Ok(match rep.verdict {
        Verdict::Pass => Outcome::Success,
        Verdict::Fail => Outcome::VerificationFailure,
    })
}

/// `n` for the bound columns: explicit, from the signal spec, or the
/// largest `n` with dwell time `≥ n·Ts`.
fn dwell_n(cfg: &ProblemConfig, sig: &SwitchingSignal, horizon: f64) -> u32 {
    cfg.signal_dwell_n()
        .or_else(|| sig.dwell_time(horizon).map(|d| ((d / cfg.ts) * (1.0 + 1e-9)).floor().max(1.0) as u32))
        .unwrap_or(1)
}

pub fn mismatch(common: &Common, n: Option<u32>, grid_dt: Option<f64>) -> Res {
    let cfg = load(common)?;
    let seed = common.seed.unwrap_or(cfg.seed);
    let (sig, adv) = cfg.build_signal(seed)?;
    let horizon = match (cfg.horizon, adv) {
        (Some(h), _) => h,
        (None, Some((t, _))) => t,
        (None, None) => return Err("horizon is required".into()),
    };
    let dt = grid_dt.unwrap_or(cfg.ts);
    if !(dt > 0.0) {
        return Err("--grid-dt must be > 0".into());
    }
    let n = n.unwrap_or_else(|| dwell_n(&cfg, &sig, horizon));
    let prof = MismatchProfile::new(&sig, cfg.ts)?;
    let t0 = adv.and_then(|(_, t0)| t0).or_else(|| prof.onsets().find(|&t| t < horizon));

    let steps = (horizon / dt * (1.0 + 1e-12)).floor() as u64;
    let mut ts: Vec<f64> = (1..=steps).map(|k| (k as f64 * dt).min(horizon)).collect();
    if let Some((t, _)) = adv {
        ts.push(t);
    }
    ts.extend(t0);
    ts.sort_by(f64::total_cmp);
    ts.dedup();

    let nf = f64::from(n);
    let mut csv = String::from("t,mu_0_t,t_over_n,ok,mu_t0_t,t0_bound,ok_t0,mu_over_t\n");
    let (mut all_ok, mut rows) = (true, 0);
    for &t in &ts {
        let mu = prof.measure(0.0, t);
        let bound = t / nf;
        let ok = mu < bound;
        all_ok &= ok;
        csv.push_str(&format!("{t},{mu},{bound},{ok}"));
        match t0 {
            Some(t0) if t > t0 => {
                let m0 = prof.measure(t0, t);
                let b0 = cfg.ts + (t - t0) / nf;
                all_ok &= m0 < b0;
                csv.push_str(&format!(",{m0},{b0},{}", m0 < b0));
            }
            _ => csv.push_str(",,,"),
        }
        csv.push_str(&format!(",{}\n", mu / t));
        rows += 1;
    }
    write(&common.out, "mismatch.csv", &csv)?;
    write(&common.out, "mismatch_intervals.csv", &prof.to_csv())?;
    println!(
        "n = {n}, T0 = {}, {rows} rows, mu(0,{horizon}) = {}, all ok: {all_ok}",
        t0.map_or("none".into(), |t| t.to_string()),
        prof.measure(0.0, horizon)
    );
    Ok(Outcome::Success)
}

pub fn reproduce_example(common: &Common, samples: u64, time_samples: u32, threads: Option<usize>, skip_properties: bool) -> Res {
    let mut cfg = example_config();
    if let Some(path) = &common.config {
        // Only the Lyapunov data may be swapped; the plant and scenario are fixed.
        let user = ProblemConfig::load(&path.to_string_lossy())?;
        cfg.lyapunov = Some(user.lyapunov.ok_or("--config must contain a lyapunov section")?);
    }
    let seed = common.seed.unwrap_or(2024);
    let spec = cfg.lyapunov_spec()?;
    let out = &common.out;
    write(out, "config.json", &(cfg.to_json() + "\n"))?;

    let mut checks: Vec<Check> = Vec::new();
    let (c, lqr) = reproduce::lqr_check();
    write(out, "lqr.json", &json(&lqr))?;
    checks.push(c);
    let (c, eig) = reproduce::mismatch_eigen_check();
    write(out, "eigenvalues.json", &json(&eig))?;
    checks.push(c);
    let (c, rep) = reproduce::certificate_check(&spec, example::REPORTED_D);
    let cert_ok = c.pass;
    checks.push(c);
    let (c, vrep) = reproduce::verifier_check(&spec, samples, time_samples, seed, threads);
    if let Some(v) = &vrep {
        write(out, "verifier.json", &json(v))?;
    }
    checks.push(c);
    match &rep {
        Some(rep) => {
            write(out, "certificate.json", &json(rep))?;
            if let Some((tr, cr)) = reproduce::scenario_run(rep) {
                write(out, "trajectory.csv", &tr.to_csv())?;
                let mut events = tr.events().to_vec();
                events.extend(cr.events());
                events.sort_by(|a, b| a.time().total_cmp(&b.time()));
                let file = EventsFile {
                    spec_version: qsc_core::certify::SPEC_VERSION,
                    events,
                    crossings: Some(&cr),
                    summary: SimSummary {
                        t_r: cr.entry,
                        inner_exits: cr.inner_exits.len(),
                        outer_exits: cr.outer_exits.len(),
                        inflated_exits: cr.inflated_exits.len(),
                        max_v: tr.samples().iter().map(|s| s.v).fold(f64::NEG_INFINITY, f64::max),
                        attractive: Some(cr.attractive()),
                    },
                };
                write(out, "events.json", &json(&file))?;
            }
            checks.push(reproduce::theorem2_check(rep, 50, seed));
        }
        None => checks.push(Check {
            name: "Attractivity end-to-end".into(),
            pass: false,
            detail: "no certificate".into(),
        }),
    }
    let mut sub = Vec::new();
    if !skip_properties {
        let parts = [
            properties::mu_oracle(200, seed),
            properties::mu_upper_bounds(500, seed),
            properties::mu_lower_bounds(),
            properties::phi_bound(500, seed),
            properties::lemma_inequalities(20, 500, seed),
            properties::gain_soundness(1_000_000, seed),
            properties::verifier_thread_determinism(20_000, seed),
        ];
        let failed: Vec<&str> = parts.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        checks.push(Check {
            name: "Property suites".into(),
            pass: failed.is_empty(),
            detail: if failed.is_empty() {
                format!("{} suites passed", parts.len())
            } else {
                format!("failed: {}", failed.join(", "))
            },
        });
        sub = parts.to_vec();
    }
    checks.push(reproduce::computed_d_check(&spec, 100, seed).0);

    let mut summary = String::new();
    for c in &checks {
        summary.push_str(&(c.line() + "\n"));
        if c.name == "Property suites" {
            summary.extend(sub.iter().map(|s| format!("    {}\n", s.line())));
        }
    }
    print!("{summary}");
    write(out, "summary.txt", &summary)?;
    write(out, "summary.json", &json(&[&checks, &sub]))?;
    Ok(if !cert_ok {
        Outcome::CertificateFailure
    } else if checks.iter().all(|c| c.pass) {
        Outcome::Success
    } else {
        Outcome::VerificationFailure
    })
}
