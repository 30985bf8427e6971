//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fail.

use std::process::ExitCode;

use qsc_core::example;
use qsc_core::reproduce::{self, properties as p, Check};

fn suite(name: &str, parts: Vec<Check>) -> Check {
    let pass = parts.iter().all(|c| c.pass);
    for c in &parts {
        println!("    {}", c.line());
    }
    let failed = parts.iter().filter(|c| !c.pass).count();
    Check {
        name: name.into(),
        pass,
        detail: format!("{} sub-checks, {failed} failed", parts.len()),
    }
}

fn main() -> ExitCode {
    let spec = example::lyapunov_spec().expect("benchmark spec is valid");
    let mut results = Vec::new();
    let mut report = |c: Check| {
        println!("{}", c.line());
        results.push(c.pass);
    };

    report(reproduce::lqr_check().0);
    report(reproduce::mismatch_eigen_check().0);

    let (cert, rep) = reproduce::certificate_check(&spec, example::REPORTED_D);
    report(cert);

    report(reproduce::verifier_check(&spec, 100_000, 5, 2024, Some(1)).0);

    match &rep {
        Some(rep) => report(reproduce::theorem2_check(rep, 50, 500)),
        None => report(Check {
            name: "Attractivity end-to-end".into(),
            pass: false,
            detail: "no certificate".into(),
        }),
    }

    let parts = vec![
        p::mu_oracle(200, 1),
        p::mu_upper_bounds(500, 2),
        p::mu_lower_bounds(),
        p::phi_bound(500, 3),
        p::lemma_inequalities(20, 500, 4),
        p::gain_soundness(1_000_000, 5),
        p::verifier_thread_determinism(20_000, 7),
    ];
    report(suite("Property suites", parts));

    report(reproduce::computed_d_check(&spec, 100, 6).0);

    let failed = results.iter().filter(|&&ok| !ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
