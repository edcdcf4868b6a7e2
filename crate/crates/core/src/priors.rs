//! Priors on the latent manifold.
//!
//! * `κ = +1`: uniform distribution on the sphere, drawn as an isotropic
//!   standard normal in the ambient space followed by radial projection.
//! * `κ = -1`: wrapped (push-forward) standard normal. A tangent vector
//!   `(v, 0)` with `v ~ N(0, I_d)` at the origin `(0, ..., 0, 1)` is mapped
//!   to the hyperboloid with the exponential map.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{exp_map_unchecked, AmbientPoint, Curvature};
use crate::rng::{self, GaussianStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub curvature: Curvature,
    /// Manifold dimension `d`; samples have `d + 1` coordinates.
    pub dim: usize,
    pub seed: u64,
}

impl PriorSpec {
    pub fn new(curvature: Curvature, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("prior dimension must be at least 1".into()));
        }
        Ok(PriorSpec {
            curvature,
            dim,
            seed,
        })
    }
}

/// A stateful prior sampler; successive calls continue the same stream.
#[derive(Debug, Clone)]
pub struct PriorSampler {
    spec: PriorSpec,
    gauss: GaussianStream,
    origin: AmbientPoint,
}

impl PriorSampler {
    pub fn new(spec: PriorSpec) -> Result<Self> {
        let spec = PriorSpec::new(spec.curvature, spec.dim, spec.seed)?;
        Ok(PriorSampler {
            spec,
            gauss: GaussianStream::new(rng::seeded(spec.seed, 0)),
            origin: AmbientPoint::origin(spec.dim),
        })
    }

    pub fn spec(&self) -> &PriorSpec {
        &self.spec
    }

    pub fn sample(&mut self, n: usize) -> Array2<f64> {
        match self.spec.curvature {
            Curvature::Spherical => self.spherical(n),
            Curvature::Hyperbolic => self.wrapped_normal(n),
        }
    }

    fn spherical(&mut self, n: usize) -> Array2<f64> {
        let width = self.spec.dim + 1;
        let mut out = Array2::zeros((n, width));
        let mut draw = vec![0.0; width];
        for mut row in out.rows_mut() {
            let norm = loop {
                self.gauss.fill(&mut draw);
                let norm = draw.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    break norm;
                }
            };
            row.iter_mut().zip(&draw).for_each(|(o, x)| *o = x / norm);
        }
        out
    }

    fn wrapped_normal(&mut self, n: usize) -> Array2<f64> {
        let width = self.spec.dim + 1;
        let mut out = Array2::zeros((n, width));
        let mut tangent = vec![0.0; width];
        for mut row in out.rows_mut() {
            self.gauss.fill(&mut tangent[..self.spec.dim]);
            let z = exp_map_unchecked(&self.origin, &tangent, Curvature::Hyperbolic);
            row.iter_mut().zip(z).for_each(|(o, x)| *o = x);
        }
        out
    }
}

/// `n` draws from the uniform distribution on the unit sphere `S^d`.
pub fn sample_spherical_uniform(spec: PriorSpec, n: usize) -> Result<Array2<f64>> {
    if spec.curvature != Curvature::Spherical {
        return Err(Error::Config(
            "spherical uniform prior requires κ = +1".into(),
        ));
    }
    Ok(PriorSampler::new(spec)?.sample(n))
}

/// `n` draws from the wrapped standard normal on the hyperboloid `H^d`.
pub fn sample_hyperbolic_wrapped_normal(spec: PriorSpec, n: usize) -> Result<Array2<f64>> {
    if spec.curvature != Curvature::Hyperbolic {
        return Err(Error::Config("wrapped normal prior requires κ = -1".into()));
    }
    Ok(PriorSampler::new(spec)?.sample(n))
}

/// The regularisation prior for `spec.curvature`.
pub fn sample_prior(spec: PriorSpec, n: usize) -> Result<Array2<f64>> {
    Ok(PriorSampler::new(spec)?.sample(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{level_deviation, membership, MembershipWidth};

    #[test]
    fn spherical_rows_are_unit() {
        let spec = PriorSpec::new(Curvature::Spherical, 4, 11).unwrap();
        let b = sample_spherical_uniform(spec, 500).unwrap();
        for row in b.rows() {
            let n: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_batch() {
        for k in [Curvature::Spherical, Curvature::Hyperbolic] {
            let spec = PriorSpec::new(k, 3, 99).unwrap();
            assert_eq!(
                sample_prior(spec, 64).unwrap(),
                sample_prior(spec, 64).unwrap()
            );
            let other = PriorSpec { seed: 100, ..spec };
            assert_ne!(
                sample_prior(spec, 64).unwrap(),
                sample_prior(other, 64).unwrap()
            );
        }
    }

    #[test]
    fn spherical_mean_is_centred() {
        let n = 100_000;
        let spec = PriorSpec::new(Curvature::Spherical, 2, 5).unwrap();
        let b = sample_spherical_uniform(spec, n).unwrap();
        let bound = 4.0 / (n as f64).sqrt();
        for col in b.columns() {
            assert!(col.mean().unwrap().abs() < bound);
        }
    }

    #[test]
    fn hyperbolic_rows_on_upper_sheet() {
        let spec = PriorSpec::new(Curvature::Hyperbolic, 2, 1).unwrap();
        let b = sample_hyperbolic_wrapped_normal(spec, 2000).unwrap();
        for row in b.rows() {
            let r = row.to_vec();
            assert!(level_deviation(&r, Curvature::Hyperbolic).abs() < 1e-9 * r[2] * r[2]);
            assert!(r[2] >= 1.0);
        }
    }

    #[test]
    fn prior_dispatch_and_membership() {
        let w = MembershipWidth::default();
        for k in [Curvature::Spherical, Curvature::Hyperbolic] {
            let b = sample_prior(PriorSpec::new(k, 5, 2).unwrap(), 1000).unwrap();
            for row in b.rows() {
                assert!(membership(&row.to_vec(), k, w) >= 1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn wrong_curvature_is_rejected() {
        let s = PriorSpec::new(Curvature::Spherical, 2, 0).unwrap();
        let h = PriorSpec::new(Curvature::Hyperbolic, 2, 0).unwrap();
        assert!(sample_hyperbolic_wrapped_normal(s, 1).is_err());
        assert!(sample_spherical_uniform(h, 1).is_err());
        assert!(PriorSpec::new(Curvature::Spherical, 0, 0).is_err());
    }
}
