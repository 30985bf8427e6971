//! Memoryless quantizers and their sector gains.
//!
//! A quantizer maps each state to the representative of the partition cell
//! containing it. Cells whose closure contains the origin map to zero.
//!
//! Two Euclidean gains feed the certificate:
//!
//! * `c_mag`: `‖Q(x)‖ ≤ c_mag ‖x‖`
//! * `c_err`: `‖Q(x) − x‖ ≤ c_err ‖x‖`
//!
//! For per-coordinate quantizers, a per-coordinate bound `|Q_i(v)| ≤ c |v|`
//! transfers directly to the Euclidean norm.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ellipsoid::Ellipsoid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizerError {
    #[error("invalid quantizer parameter: {0}")]
    InvalidParameter(String),
    #[error("quantizer gains are unbounded or not finite (c_mag={c_mag}, c_err={c_err})")]
    Unsound { c_mag: f64, c_err: f64 },
    #[error("sampling region is empty after excluding the inner set")]
    EmptyRegion,
    #[error("n_samples must be at least 1")]
    NoSamples,
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
}

/// Sector gains of a quantizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerGains {
    pub c_mag: f64,
    pub c_err: f64,
}

impl QuantizerGains {
    pub fn new(c_mag: f64, c_err: f64) -> Result<Self, QuantizerError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(c_mag) && ok(c_err) {
            Ok(Self { c_mag, c_err })
        } else {
            Err(QuantizerError::Unsound { c_mag, c_err })
        }
    }
}

pub trait Quantizer: Send + Sync {
    fn quantize(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Sound global gains, or an error when none can be certified.
    fn gains(&self) -> Result<QuantizerGains, QuantizerError>;
}

/// Per-coordinate logarithmic quantizer with a closed deadzone `[−ξ₀, ξ₀]`.
///
/// On the positive axis the cells are `(ξ₀κⁿ, ξ₀κⁿ⁺¹]`, `n ≥ 0`, each mapped to
/// its midpoint `ξ₀(κⁿ + κⁿ⁺¹)/2`; the negative axis mirrors this.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogQuantizer {
    xi0: f64,
    kappa: f64,
}

impl LogQuantizer {
    pub fn new(xi0: f64, kappa: f64) -> Result<Self, QuantizerError> {
        if !(xi0.is_finite() && xi0 > 0.0) {
            return Err(QuantizerError::InvalidParameter(format!("xi0 must be > 0, got {xi0}")));
        }
        if !(kappa.is_finite() && kappa > 1.0) {
            return Err(QuantizerError::InvalidParameter(format!("kappa must be > 1, got {kappa}")));
        }
        Ok(Self { xi0, kappa })
    }

    pub fn xi0(&self) -> f64 {
        self.xi0
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn boundary(&self, n: i32) -> f64 {
        self.xi0 * self.kappa.powi(n)
    }

    /// Index `n` of the cell `(ξ₀κⁿ, ξ₀κⁿ⁺¹]` holding `a > ξ₀`.
    fn cell_index(&self, a: f64) -> i32 {
        let guess = ((a / self.xi0).ln() / self.kappa.ln()).floor();
        let mut n = guess.clamp(0.0, i32::MAX as f64 - 1.0) as i32;
        while n > 0 && self.boundary(n) >= a {
            n -= 1;
        }
        while self.boundary(n + 1) < a {
            n += 1;
        }
        n
    }

    pub fn quantize_scalar(&self, v: f64) -> f64 {
        let a = v.abs();
        if a <= self.xi0 {
            return 0.0;
        }
        let n = self.cell_index(a);
        let rep = 0.5 * (self.boundary(n) + self.boundary(n + 1));
        rep.copysign(v)
    }

    /// Number of distinct per-coordinate outputs on `[−w, w]`.
    pub fn cells_on_interval(&self, w: f64) -> usize {
        let mut count = 1;
        let mut n = 0;
        while self.boundary(n) < w {
            count += 2;
            n += 1;
        }
        count
    }
}

impl Quantizer for LogQuantizer {
    fn quantize(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| self.quantize_scalar(v))
    }

    fn gains(&self) -> Result<QuantizerGains, QuantizerError> {
        // Cell ratios Q/v range over [(1+κ)/(2κ), (1+κ)/2); the deadzone gives
        // ratio 0 and relative error exactly 1.
        let k = self.kappa;
        QuantizerGains::new((1.0 + k) / 2.0, f64::max(1.0, (k - 1.0) / 2.0))
    }
}

/// `Q(x) = x`. A degenerate quantizer for tests and ideal-feedback baselines.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityQuantizer;

impl Quantizer for IdentityQuantizer {
    fn quantize(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }

    fn gains(&self) -> Result<QuantizerGains, QuantizerError> {
        QuantizerGains::new(1.0, 0.0)
    }
}

/// `Q(x) = 0` everywhere (open loop).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ZeroQuantizer;

impl Quantizer for ZeroQuantizer {
    fn quantize(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(x.len())
    }

    fn gains(&self) -> Result<QuantizerGains, QuantizerError> {
        QuantizerGains::new(0.0, 1.0)
    }
}

/// Serializable quantizer description, tagged by `"type"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum QuantizerSpec {
    Logarithmic { xi0: f64, kappa: f64 },
    Identity,
    Zero,
}

impl QuantizerSpec {
    pub fn build(&self) -> Result<Box<dyn Quantizer>, QuantizerError> {
        Ok(match *self {
            QuantizerSpec::Logarithmic { xi0, kappa } => Box::new(LogQuantizer::new(xi0, kappa)?),
            QuantizerSpec::Identity => Box::new(IdentityQuantizer),
            QuantizerSpec::Zero => Box::new(ZeroQuantizer),
        })
    }
}

/// Observed worst-case ratios over a seeded sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainEstimate {
    pub c_mag_hat: f64,
    pub c_err_hat: f64,
    pub samples: usize,
}

const MAX_CONSECUTIVE_REJECTIONS: usize = 100_000;

/// Empirical lower bounds on the gains: max of `‖Q(x)‖/‖x‖` and
/// `‖Q(x) − x‖/‖x‖` over uniform samples of `region ∖ excluded`.
pub fn monte_carlo_gain_estimate(
    q: &dyn Quantizer,
    region: &Ellipsoid,
    excluded: &Ellipsoid,
    n_samples: usize,
    seed: u64,
) -> Result<GainEstimate, QuantizerError> {
    if n_samples == 0 {
        return Err(QuantizerError::NoSamples);
    }
    let sampler = region.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut mag, mut err) = (0.0f64, 0.0f64);
    let mut taken = 0;
    let mut rejected = 0;
    while taken < n_samples {
        let x = sampler.sample(&mut rng);
        let norm = x.norm();
        if excluded.contains(&x) || norm == 0.0 {
            rejected += 1;
            if rejected >= MAX_CONSECUTIVE_REJECTIONS {
                return Err(QuantizerError::EmptyRegion);
            }
            continue;
        }
        rejected = 0;
        let qx = q.quantize(&x);
        mag = mag.max(qx.norm() / norm);
        err = err.max((qx - &x).norm() / norm);
        taken += 1;
    }
    Ok(GainEstimate {
        c_mag_hat: mag,
        c_err_hat: err,
        samples: taken,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SpdMatrix;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn benchmark_quantizer() -> LogQuantizer {
        LogQuantizer::new(0.08, 1.2).unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn deadzone_maps_to_zero() {
        let q = benchmark_quantizer();
        assert_eq!(q.quantize(&v(&[0.05, -0.05])), v(&[0.0, 0.0]));
        assert_eq!(q.quantize(&v(&[0.08, -0.08])), v(&[0.0, 0.0]));
        assert_eq!(q.quantize(&v(&[0.0, 0.0])), v(&[0.0, 0.0]));
    }

    #[test]
    fn first_cells() {
        let q = benchmark_quantizer();
        let out = q.quantize(&v(&[0.1, -0.05]));
        assert!((out[0] - 0.08 * (1.2 + 1.44) / 2.0).abs() < 1e-15);
        assert!((out[0] - 0.1056).abs() < 1e-12);
        assert_eq!(out[1], 0.0);
        // Upper cell boundaries are closed: ξ₀κ maps into cell n = 0.
        assert!((q.quantize_scalar(0.08 * 1.2) - 0.088).abs() < 1e-15);
        assert!((q.quantize_scalar(-(0.08 * 1.2)) + 0.088).abs() < 1e-15);
    }

    #[test]
    fn analytic_gains() {
        let g = benchmark_quantizer().gains().unwrap();
        assert!((g.c_mag - 1.1).abs() < 1e-15);
        assert_eq!(g.c_err, 1.0);
        assert_eq!(IdentityQuantizer.gains().unwrap(), QuantizerGains { c_mag: 1.0, c_err: 0.0 });
        assert_eq!(
            LogQuantizer::new(0.1, 5.0).unwrap().gains().unwrap().c_err,
            2.0
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(LogQuantizer::new(0.0, 1.2).is_err());
        assert!(LogQuantizer::new(0.08, 1.0).is_err());
        assert!(QuantizerGains::new(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn quantizer_json_shape() {
        let s: QuantizerSpec = serde_json::from_str(r#"{"type":"logarithmic","xi0":0.08,"kappa":1.2}"#).unwrap();
        assert_eq!(s, QuantizerSpec::Logarithmic { xi0: 0.08, kappa: 1.2 });
        assert_eq!(serde_json::to_string(&QuantizerSpec::Zero).unwrap(), r#"{"type":"zero"}"#);
    }

    #[test]
    fn cell_count_matches_distinct_outputs() {
        let q = benchmark_quantizer();
        for w in [0.05, 0.5, 3.0, 70.0] {
            let mut seen = BTreeSet::new();
            let steps = 200_000;
            for i in 0..=steps {
                let x = -w + 2.0 * w * i as f64 / steps as f64;
                seen.insert(q.quantize_scalar(x).to_bits());
            }
            // Edge cell may be only partially covered, so enumerate its boundary too.
            assert_eq!(seen.len(), q.cells_on_interval(w), "w = {w}");
        }
    }

    #[test]
    fn monte_carlo_doubles() {
        let p = SpdMatrix::from_rows(&[vec![2.9171, 0.3489], vec![0.3489, 3.6256]]).unwrap();
        let outer = Ellipsoid::outer(&p, 68.6);
        let inner = Ellipsoid::inner(&p, 0.175);
        let id = monte_carlo_gain_estimate(&IdentityQuantizer, &outer, &inner, 500, 1).unwrap();
        assert_eq!((id.c_mag_hat, id.c_err_hat), (1.0, 0.0));
        let z = monte_carlo_gain_estimate(&ZeroQuantizer, &outer, &inner, 500, 1).unwrap();
        assert_eq!((z.c_mag_hat, z.c_err_hat), (0.0, 1.0));
    }

    #[test]
    fn monte_carlo_is_below_analytic_gains() {
        let p = SpdMatrix::from_rows(&[vec![2.9171, 0.3489], vec![0.3489, 3.6256]]).unwrap();
        let q = benchmark_quantizer();
        let g = q.gains().unwrap();
        let est = monte_carlo_gain_estimate(&q, &Ellipsoid::outer(&p, 68.6), &Ellipsoid::inner(&p, 0.175), 100_000, 7)
            .unwrap();
        assert!(est.c_mag_hat <= g.c_mag && est.c_err_hat <= g.c_err, "{est:?}");
    }

    #[test]
    fn empty_region_is_reported() {
        let p = SpdMatrix::identity(2);
        let e = Ellipsoid::new(p.clone(), 1.0);
        assert_eq!(
            monte_carlo_gain_estimate(&IdentityQuantizer, &e, &e, 10, 0),
            Err(QuantizerError::EmptyRegion)
        );
    }

    proptest! {
        #[test]
        fn odd_symmetry(x in -500.0f64..500.0) {
            let q = benchmark_quantizer();
            prop_assert_eq!(q.quantize_scalar(-x), -q.quantize_scalar(x));
        }

        #[test]
        fn zero_iff_in_deadzone(x in -1.0f64..1.0) {
            let q = benchmark_quantizer();
            prop_assert_eq!(q.quantize_scalar(x) == 0.0, x.abs() <= 0.08);
        }

        #[test]
        fn idempotent_on_representatives(x in -1e4f64..1e4) {
            let q = benchmark_quantizer();
            let once = q.quantize_scalar(x);
            prop_assert_eq!(q.quantize_scalar(once), once);
        }

        #[test]
        fn output_lies_in_its_cell(x in 0.0801f64..1e4) {
            let q = benchmark_quantizer();
            let n = q.cell_index(x);
            prop_assert!(q.boundary(n) < x && x <= q.boundary(n + 1));
        }
    }

    #[test]
    fn gain_soundness_on_million_samples() {
        let p = SpdMatrix::from_rows(&[vec![2.9171, 0.3489], vec![0.3489, 3.6256]]).unwrap();
        let q = benchmark_quantizer();
        let g = q.gains().unwrap();
        let sampler = Ellipsoid::outer(&p, 68.6).sampler().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1_000_000 {
            let x = sampler.sample(&mut rng);
            let qx = q.quantize(&x);
            let n = x.norm();
            assert!(qx.norm() <= g.c_mag * n);
            assert!((qx - &x).norm() <= g.c_err * n);
        }
    }
}
