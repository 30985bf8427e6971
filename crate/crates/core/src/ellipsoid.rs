//! Level sets `{x : xᵀPx ≤ level}` and uniform sampling inside them.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::numerics::{Matrix, NumericsError, SpdMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub p: SpdMatrix,
    pub level: f64,
}

impl Ellipsoid {
    pub fn new(p: SpdMatrix, level: f64) -> Self {
        Self { p, level }
    }

    /// Smallest level set of `V` containing the ball of radius `big_r`.
    pub fn outer(p: &SpdMatrix, big_r: f64) -> Self {
        Self::new(p.clone(), big_r * big_r * p.lambda_max())
    }

    /// Largest level set of `V` contained in the ball of radius `r`.
    pub fn inner(p: &SpdMatrix, r: f64) -> Self {
        Self::new(p.clone(), r * r * p.lambda_min())
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.p.quadratic_form(x) <= self.level
    }

    pub fn sampler(&self) -> Result<EllipsoidSampler, NumericsError> {
        EllipsoidSampler::new(self)
    }
}

/// Uniform sampler over a solid ellipsoid.
///
/// Maps a uniform point `u` of the unit ball through `x = √level · L⁻ᵀ u`,
/// where `P = L Lᵀ`, so that `xᵀPx = level · ‖u‖²`.
#[derive(Debug, Clone)]
pub struct EllipsoidSampler {
    transform: Matrix,
    dim: usize,
}

impl EllipsoidSampler {
    fn new(e: &Ellipsoid) -> Result<Self, NumericsError> {
        if !(e.level >= 0.0 && e.level.is_finite()) {
            return Err(NumericsError::NonFinite);
        }
        let chol = e
            .p
            .matrix()
            .clone()
            .cholesky()
            .ok_or(NumericsError::NotPositiveDefinite(e.p.lambda_min()))?;
        let l_inv_t = chol
            .l()
            .transpose()
            .try_inverse()
            .ok_or(NumericsError::Singular("Cholesky factor"))?;
        Ok(Self {
            transform: l_inv_t * e.level.sqrt(),
            dim: e.p.dim(),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let u = unit_ball_point(self.dim, rng);
        &self.transform * u
    }
}

fn unit_ball_point<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let g = DVector::<f64>::from_fn(dim, |_, _| rng.sample(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 {
            let radius = rng.random::<f64>().powf(1.0 / dim as f64);
            return g * (radius / norm);
        }
    }
}
