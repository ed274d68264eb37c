//! Rectified-flow numerics.
//!
//! Interpolation `z_t = (1 - t) z0 + t eps`, velocity target `z0 - eps`, and
//! an explicit Euler sampler that integrates from `t = 1` (noise) down to
//! `t = 0`. With the velocity convention `z0 - eps` each step adds
//! `dt * v`, so the exact constant field carries `eps` to `z0`.
//!
//! All functions are generic over the array dimension; latents are usually
//! `(c, f, h, w)`.

use ndarray::{Array, Array4, Dimension, Zip};
use thiserror::Error;

pub type LatentTensor = Array4<f64>;
pub type NoiseSample = Array4<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("t = {0} is outside [0, 1]")]
    TOutOfRange(f64),
    #[error("velocity field returned non-finite values at step {step}")]
    NonFiniteVelocity { step: usize },
    #[error("step count must be positive")]
    ZeroSteps,
}

fn same_shape<D: Dimension>(a: &Array<f64, D>, b: &Array<f64, D>) -> Result<(), FlowError> {
    if a.shape() != b.shape() {
        return Err(FlowError::ShapeMismatch {
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

pub fn interpolate<D: Dimension>(
    z0: &Array<f64, D>,
    eps: &Array<f64, D>,
    t: f64,
) -> Result<Array<f64, D>, FlowError> {
    same_shape(z0, eps)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(FlowError::TOutOfRange(t));
    }
    Ok(Zip::from(z0)
        .and(eps)
        .map_collect(|&a, &b| (1.0 - t) * a + t * b))
}

pub fn velocity_target<D: Dimension>(
    z0: &Array<f64, D>,
    eps: &Array<f64, D>,
) -> Result<Array<f64, D>, FlowError> {
    same_shape(z0, eps)?;
    Ok(z0 - eps)
}

/// Integrates `dz = v(z, t) dt` from `t = 1` to `t = 0` in `steps` uniform
/// Euler steps, where `v` predicts `z0 - eps`.
pub fn euler_sample<D, F>(
    mut velocity: F,
    z1: &Array<f64, D>,
    steps: usize,
) -> Result<Array<f64, D>, FlowError>
where
    D: Dimension,
    F: FnMut(&Array<f64, D>, f64) -> Array<f64, D>,
{
    if steps == 0 {
        return Err(FlowError::ZeroSteps);
    }
    let dt = 1.0 / steps as f64;
    let mut z = z1.clone();
    for step in 0..steps {
        let t = 1.0 - step as f64 * dt;
        let v = velocity(&z, t);
        same_shape(&z, &v)?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(FlowError::NonFiniteVelocity { step });
        }
        z.scaled_add(dt, &v);
    }
    Ok(z)
}
