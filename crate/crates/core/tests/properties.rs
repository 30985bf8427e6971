//! Randomized property suites at full size.

use qsc_core::reproduce::{computed_d_check, properties as p, Check};

fn assert_pass(c: Check) {
    assert!(c.pass, "{}", c.line());
}

#[test]
fn mu_matches_riemann_oracle() {
    assert_pass(p::mu_oracle(200, 1));
}

#[test]
fn dwell_upper_bounds_are_strict() {
    assert_pass(p::mu_upper_bounds(500, 2));
}

#[test]
fn adversarial_signals_reach_lower_bounds() {
    assert_pass(p::mu_lower_bounds());
}

#[test]
fn transition_maps_obey_exponential_bound() {
    assert_pass(p::phi_bound(500, 3));
}

#[test]
fn lemma_and_theorem_inequalities_along_trajectories() {
    assert_pass(p::lemma_inequalities(20, 500, 4));
}

#[test]
fn alpha0_and_gamma0_are_sound() {
    assert_pass(p::gain_soundness(1_000_000, 5));
}

#[test]
fn computed_d_is_sound_and_in_range() {
    assert_pass(computed_d_check(&qsc_core::example::lyapunov_spec().unwrap(), 100, 6).0);
}

#[test]
fn verifier_json_is_thread_independent() {
    assert_pass(p::verifier_thread_determinism(20_000, 7));
}
