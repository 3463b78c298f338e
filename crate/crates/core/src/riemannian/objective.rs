use std::sync::Arc;

use super::{Manifold, RiemannianError, Result, Scheme};
use crate::matcore::{dot, Mat};

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type HessFn = Arc<dyn Fn(&[f64]) -> Mat + Send + Sync>;

/// Relative tolerance of the construction-time gradient check.
pub const GRADIENT_CHECK_TOL: f64 = 1e-5;

/// Step of the central differences in the gradient check and the
/// Hessian-free modified objective.
pub const FD_STEP: f64 = 1e-5;

/// A smooth objective given through its ambient value, gradient and
/// (optionally) Hessian.
#[derive(Clone)]
pub struct ObjectiveFn {
    value: ValueFn,
    gradient: GradFn,
    hessian: Option<HessFn>,
}

impl std::fmt::Debug for ObjectiveFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObjectiveFn").field("has_hessian", &self.hessian.is_some()).finish()
    }
}

impl ObjectiveFn {
    /// Checks the gradient against central differences of `value` at each
    /// probe point.
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        hessian: Option<HessFn>,
        probes: &[Vec<f64>],
    ) -> Result<Self> {
        let f = Self { value: Arc::new(value), gradient: Arc::new(gradient), hessian };
        for (probe, x) in probes.iter().enumerate() {
            let g = f.gradient(x);
            if g.len() != x.len() {
                return Err(RiemannianError::DimensionMismatch { expected: x.len(), got: g.len() });
            }
            let fd = central_gradient(|p| f.value(p), x, FD_STEP);
            for i in 0..x.len() {
                if !((fd[i] - g[i]).abs() <= GRADIENT_CHECK_TOL * g[i].abs().max(1.0)) {
                    return Err(RiemannianError::GradientCheck {
                        probe,
                        component: i,
                        analytic: g[i],
                        numeric: fd[i],
                    });
                }
            }
        }
        Ok(f)
    }

    /// `xᵀHx/2` with `H` symmetric.
    pub fn quadratic(h: Mat) -> Self {
        let (h1, h2, h3) = (h.clone(), h.clone(), h);
        Self {
            value: Arc::new(move |x: &[f64]| 0.5 * dot(x, &h1.matvec(x))),
            gradient: Arc::new(move |x: &[f64]| h2.matvec(x)),
            hessian: Some(Arc::new(move |_: &[f64]| h3.clone())),
        }
    }

    /// `⟨c, x⟩ + xᵀQx/2`.
    pub fn linear_quadratic(c: Vec<f64>, q: Mat) -> Self {
        let (c1, c2) = (c.clone(), c);
        let (q1, q2, q3) = (q.clone(), q.clone(), q);
        Self {
            value: Arc::new(move |x: &[f64]| dot(&c1, x) + 0.5 * dot(x, &q1.matvec(x))),
            gradient: Arc::new(move |x: &[f64]| c2.iter().zip(q2.matvec(x)).map(|(c, g)| c + g).collect()),
            hessian: Some(Arc::new(move |_: &[f64]| q3.clone())),
        }
    }

    /// `Σ aᵢ xᵢ⁴/4`.
    pub fn quartic(a: Vec<f64>) -> Self {
        let (a1, a2, a3) = (a.clone(), a.clone(), a);
        Self {
            value: Arc::new(move |x: &[f64]| x.iter().zip(&a1).map(|(x, a)| 0.25 * a * x.powi(4)).sum()),
            gradient: Arc::new(move |x: &[f64]| x.iter().zip(&a2).map(|(x, a)| a * x.powi(3)).collect()),
            hessian: Some(Arc::new(move |x: &[f64]| {
                Mat::from_diag(&x.iter().zip(&a3).map(|(x, a)| 3.0 * a * x * x).collect::<Vec<_>>())
            })),
        }
    }

    /// Sum of two objectives.
    pub fn plus(&self, other: &ObjectiveFn) -> Self {
        let (a, b) = (self.clone(), other.clone());
        let (c, d) = (self.clone(), other.clone());
        let hessian: Option<HessFn> = match (&self.hessian, &other.hessian) {
            (Some(h1), Some(h2)) => {
                let (h1, h2) = (h1.clone(), h2.clone());
                Some(Arc::new(move |x: &[f64]| &h1(x) + &h2(x)))
            }
            _ => None,
        };
        Self {
            value: Arc::new(move |x: &[f64]| a.value(x) + b.value(x)),
            gradient: Arc::new(move |x: &[f64]| c.gradient(x).iter().zip(d.gradient(x)).map(|(p, q)| p + q).collect()),
            hessian,
        }
    }

    /// Same objective with the analytic Hessian dropped.
    pub fn without_hessian(&self) -> Self {
        Self { hessian: None, ..self.clone() }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }

    pub fn hessian(&self, x: &[f64]) -> Option<Mat> {
        self.hessian.as_ref().map(|h| h(x))
    }

    pub fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    /// `∇_g E(x)`.
    pub fn riemannian_gradient(&self, m: &Manifold, x: &[f64]) -> Vec<f64> {
        m.riemannian_gradient(x, &self.gradient(x))
    }

    /// `Hess_g E(x)[v]` for tangent `v`: `∇²E v` on ℝᵈ and
    /// `P(∇²E v) − ⟨x, ∇E⟩ v` on the sphere. Requires the Hessian.
    pub fn riemannian_hessian_vec(&self, m: &Manifold, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let hv = self.hessian(x)?.matvec(v);
        Some(match m {
            Manifold::Euclidean(_) => hv,
            Manifold::Sphere(_) => {
                let xg = dot(x, &self.gradient(x));
                m.project_tangent(x, &hv).iter().zip(v).map(|(p, v)| p - xg * v).collect()
            }
        })
    }
}

pub(crate) fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let xi = x[i];
            p[i] = xi + h;
            let fp = f(&p);
            p[i] = xi - h;
            let fm = f(&p);
            p[i] = xi;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `φ(x) = ‖P(x)∇E(x)‖²` with the off-sphere projection
/// `P(x) = I − xxᵀ/‖x‖²` (identity on ℝᵈ).
fn grad_norm_sq(m: &Manifold, f: &ObjectiveFn, x: &[f64]) -> f64 {
    let g = f.riemannian_gradient(m, x);
    dot(&g, &g)
}

/// Ambient gradient of `ψ(x) = ‖g − (x·g)x‖²` (sphere) or `‖g‖²` (ℝᵈ)
/// using the analytic Hessian. On the unit sphere `ψ` agrees with `φ`.
fn grad_norm_sq_gradient(m: &Manifold, f: &ObjectiveFn, x: &[f64], h: &Mat) -> Vec<f64> {
    let g = f.gradient(x);
    let hg = h.matvec(&g);
    match m {
        Manifold::Euclidean(_) => hg.iter().map(|v| 2.0 * v).collect(),
        Manifold::Sphere(_) => {
            let xg = dot(x, &g);
            let xx = dot(x, x);
            let hx = h.matvec(x);
            (0..x.len())
                .map(|i| {
                    let dxg = g[i] + hx[i];
                    2.0 * hg[i] - 4.0 * xg * dxg + 2.0 * xg * xx * dxg + 2.0 * xg * xg * x[i]
                })
                .collect()
        }
    }
}

fn grad_norm_sq_alt(m: &Manifold, f: &ObjectiveFn, x: &[f64]) -> f64 {
    match m {
        Manifold::Euclidean(_) => grad_norm_sq(m, f, x),
        Manifold::Sphere(_) => {
            let g = f.gradient(x);
            let xg = dot(x, &g);
            let u: Vec<f64> = g.iter().zip(x).map(|(g, x)| g - xg * x).collect();
            dot(&u, &u)
        }
    }
}

/// `E ± (η/4)‖∇_g E‖²` (`+` forward, `−` backward).
///
/// With a Hessian the gradient is analytic; otherwise it is taken by
/// central differences of the squared gradient norm with step
/// [`FD_STEP`].
pub fn modified_objective(m: &Manifold, f: &ObjectiveFn, eta: f64, scheme: Scheme) -> ObjectiveFn {
    if eta == 0.0 {
        return f.clone();
    }
    let c = scheme.sign() * 0.25 * eta;
    let (m1, m2) = (*m, *m);
    let (f1, f2) = (f.clone(), f.clone());
    let value = Arc::new(move |x: &[f64]| f1.value(x) + c * grad_norm_sq_alt(&m1, &f1, x));
    let gradient: GradFn = if f.has_hessian() {
        Arc::new(move |x: &[f64]| {
            let h = f2.hessian(x).expect("checked above");
            let gp = grad_norm_sq_gradient(&m2, &f2, x, &h);
            f2.gradient(x).iter().zip(gp).map(|(g, p)| g + c * p).collect()
        })
    } else {
        Arc::new(move |x: &[f64]| {
            let gp = central_gradient(|p| grad_norm_sq_alt(&m2, &f2, p), x, FD_STEP);
            f2.gradient(x).iter().zip(gp).map(|(g, p)| g + c * p).collect()
        })
    };
    ObjectiveFn { value, gradient, hessian: None }
}

/// Hessian of the modified objective at a critical point of a quadratic,
/// `H ± (η/2)H²`.
pub fn effective_hessian(h: &Mat, eta: f64, scheme: Scheme) -> Mat {
    let hh = h * h;
    h + &hh.scale(scheme.sign() * 0.5 * eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::rng::SeededRng;

    fn sphere_test_objective() -> ObjectiveFn {
        ObjectiveFn::linear_quadratic(vec![0.0, 0.0, 1.0], Mat::from_diag(&[0.6, 0.0, 0.0]))
    }

    #[test]
    fn gradient_check_rejects_wrong_gradients() {
        let probes = vec![vec![0.3, -0.2], vec![1.0, 2.0]];
        assert!(ObjectiveFn::new(|x| x[0] * x[0] + x[1], |x| vec![2.0 * x[0], 1.0], None, &probes).is_ok());
        assert!(matches!(
            ObjectiveFn::new(|x| x[0] * x[0] + x[1], |x| vec![x[0], 1.0], None, &probes),
            Err(RiemannianError::GradientCheck { probe: 0, component: 0, .. })
        ));
    }

    #[test]
    fn gradient_identity_with_hessian() {
        let mut rng = SeededRng::new(21);
        for (m, f) in [
            (Manifold::Euclidean(3), ObjectiveFn::quartic(vec![1.0, 0.5, 2.0]).plus(&sphere_test_objective())),
            (Manifold::Sphere(3), sphere_test_objective()),
        ] {
            for scheme in [Scheme::Forward, Scheme::Backward] {
                let eta = 0.1;
                let fe = modified_objective(&m, &f, eta, scheme);
                for _ in 0..20 {
                    let x = m.project_point(&rng.normals(3));
                    let g = f.riemannian_gradient(&m, &x);
                    let ge = fe.riemannian_gradient(&m, &x);
                    let hv = f.riemannian_hessian_vec(&m, &x, &g).unwrap();
                    for i in 0..3 {
                        let expected = scheme.sign() * 0.5 * eta * hv[i];
                        assert!((ge[i] - g[i] - expected).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn gradient_identity_without_hessian() {
        let m = Manifold::Sphere(3);
        let f = sphere_test_objective();
        let fe = modified_objective(&m, &f.without_hessian(), 0.2, Scheme::Backward);
        let mut rng = SeededRng::new(22);
        for _ in 0..20 {
            let x = m.project_point(&rng.normals(3));
            let g = f.riemannian_gradient(&m, &x);
            let ge = fe.riemannian_gradient(&m, &x);
            let hv = f.riemannian_hessian_vec(&m, &x, &g).unwrap();
            for i in 0..3 {
                assert!((ge[i] - g[i] + 0.1 * hv[i]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn modified_values_are_symmetric_about_the_objective() {
        let m = Manifold::Sphere(3);
        let f = sphere_test_objective();
        let fw = modified_objective(&m, &f, 0.3, Scheme::Forward);
        let bw = modified_objective(&m, &f, 0.3, Scheme::Backward);
        let x = m.project_point(&[0.2, -0.5, 0.7]);
        assert!((fw.value(&x) + bw.value(&x) - 2.0 * f.value(&x)).abs() < 1e-15);
        let same = modified_objective(&m, &f, 0.0, Scheme::Backward);
        assert_eq!(same.value(&x), f.value(&x));
    }

    #[test]
    fn effective_hessian_of_modified_quadratic() {
        let h = Mat::from_diag(&[1.0, 2.0]);
        let m = Manifold::Euclidean(2);
        let f = ObjectiveFn::quadratic(h.clone());
        for (scheme, expected) in [(Scheme::Backward, [0.95, 1.8]), (Scheme::Forward, [1.05, 2.2])] {
            let eff = effective_hessian(&h, 0.1, scheme);
            let fe = modified_objective(&m, &f, 0.1, scheme);
            for i in 0..2 {
                assert!((eff[(i, i)] - expected[i]).abs() < 1e-15);
                // column i of the Hessian of the modified objective
                let mut e = [0.0; 2];
                e[i] = 1.0;
                let col = fe.gradient(&e);
                assert!((col[i] - expected[i]).abs() < 1e-12);
                assert!(col[1 - i].abs() < 1e-12);
            }
        }
        // (I ± 2ηH)H at η = 0.1 is the Hessian at step 0.4.
        let b = effective_hessian(&h, 0.4, Scheme::Backward);
        assert!((b[(0, 0)] - 0.8).abs() < 1e-15 && (b[(1, 1)] - 1.2).abs() < 1e-15);
        let f = effective_hessian(&h, 0.4, Scheme::Forward);
        assert!((f[(0, 0)] - 1.2).abs() < 1e-15 && (f[(1, 1)] - 2.8).abs() < 1e-15);
    }
}
