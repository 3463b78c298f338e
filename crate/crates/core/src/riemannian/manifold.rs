use super::{RiemannianError, Result};
use crate::matcore::{dot, norm2};

/// Euclidean space `ℝᵈ` or the unit sphere in `ℝᵈ` (ambient dimension `d`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Manifold {
    Euclidean(usize),
    Sphere(usize),
}

/// Points off the unit sphere by more than this are rejected.
pub const SPHERE_TOL: f64 = 1e-10;

impl Manifold {
    pub fn ambient_dim(&self) -> usize {
        match *self {
            Self::Euclidean(d) | Self::Sphere(d) => d,
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, Self::Sphere(_))
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        self.check_dim(x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(RiemannianError::NonFinite);
        }
        if self.is_sphere() {
            let norm = norm2(x);
            if (norm - 1.0).abs() > SPHERE_TOL {
                return Err(RiemannianError::NotOnManifold { norm });
            }
        }
        Ok(())
    }

    pub fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.ambient_dim() {
            return Err(RiemannianError::DimensionMismatch { expected: self.ambient_dim(), got: v.len() });
        }
        Ok(())
    }

    /// Nearest manifold point (normalization on the sphere).
    pub fn project_point(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Euclidean(_) => x.to_vec(),
            Self::Sphere(_) => {
                let n = norm2(x);
                x.iter().map(|v| v / n).collect()
            }
        }
    }

    /// Orthogonal projection onto the tangent space at `x`. On the sphere
    /// this is `v − ⟨x̂, v⟩x̂` with `x̂ = x/‖x‖`, which also makes sense off
    /// the sphere.
    pub fn project_tangent(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            Self::Euclidean(_) => v.to_vec(),
            Self::Sphere(_) => {
                let xx = dot(x, x);
                let c = dot(x, v) / xx;
                v.iter().zip(x).map(|(v, x)| v - c * x).collect()
            }
        }
    }

    /// Riemannian gradient from the ambient gradient.
    pub fn riemannian_gradient(&self, x: &[f64], ambient: &[f64]) -> Vec<f64> {
        self.project_tangent(x, ambient)
    }

    /// `exp_x(v)`; great circles on the sphere, renormalized.
    pub fn exp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            Self::Euclidean(_) => x.iter().zip(v).map(|(x, v)| x + v).collect(),
            Self::Sphere(_) => {
                let t = norm2(v);
                if t == 0.0 {
                    return x.to_vec();
                }
                let (s, c) = t.sin_cos();
                let y: Vec<f64> = x.iter().zip(v).map(|(x, v)| c * x + s * v / t).collect();
                self.project_point(&y)
            }
        }
    }

    /// `exp_x⁻¹(y)`; fails for antipodal points on the sphere.
    pub fn log(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Euclidean(_) => Ok(y.iter().zip(x).map(|(y, x)| y - x).collect()),
            Self::Sphere(_) => {
                let c = dot(x, y);
                let u: Vec<f64> = y.iter().zip(x).map(|(y, x)| y - c * x).collect();
                let s = norm2(&u);
                if s == 0.0 {
                    if c > 0.0 {
                        return Ok(vec![0.0; x.len()]);
                    }
                    return Err(RiemannianError::Antipodal);
                }
                let theta = s.atan2(c);
                Ok(u.iter().map(|u| theta * u / s).collect())
            }
        }
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Self::Euclidean(_) => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            Self::Sphere(_) => {
                let c = dot(x, y);
                let u: Vec<f64> = y.iter().zip(x).map(|(y, x)| y - c * x).collect();
                norm2(&u).atan2(c)
            }
        }
    }

    /// Parallel transport of `v ∈ T_x` to `T_y` along the minimizing geodesic.
    pub fn transport(&self, x: &[f64], y: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Euclidean(_) => Ok(v.to_vec()),
            Self::Sphere(_) => {
                let u = self.log(x, y)?;
                let theta = norm2(&u);
                if theta == 0.0 {
                    return Ok(v.to_vec());
                }
                let e: Vec<f64> = u.iter().map(|u| u / theta).collect();
                let ev = dot(&e, v);
                let (s, c) = theta.sin_cos();
                Ok((0..v.len()).map(|i| v[i] + (c - 1.0) * ev * e[i] - s * ev * x[i]).collect())
            }
        }
    }

    /// Largest admissible step length `‖v‖` for the exponential map.
    pub fn injectivity_radius(&self) -> f64 {
        match self {
            Self::Euclidean(_) => f64::INFINITY,
            Self::Sphere(_) => std::f64::consts::PI,
        }
    }
}
