//! Gradient descent on Euclidean space and the unit sphere, and the modified
//! objectives `E ± (η/4)‖∇_g E‖²` whose gradient flows the forward
//! (`+`) and backward (`−`) Euler iterates follow to second order.

use rayon::prelude::*;
use thiserror::Error;

use crate::matcore::norm2;

mod manifold;
mod objective;

pub use manifold::{Manifold, SPHERE_TOL};
pub use objective::{effective_hessian, modified_objective, ObjectiveFn, FD_STEP, GRADIENT_CHECK_TOL};

/// Stationarity residual at which the proximal iteration stops.
pub const BACKWARD_TOL: f64 = 1e-12;

/// Iteration budget of the proximal solver.
pub const BACKWARD_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiemannianError {
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point has norm {norm}, not on the unit sphere")]
    NotOnManifold { norm: f64 },

    #[error("non-finite coordinates")]
    NonFinite,

    #[error("log map undefined between antipodal points")]
    Antipodal,

    #[error("step length {length} exceeds the injectivity radius {radius}")]
    Injectivity { length: f64, radius: f64 },

    #[error("gradient check failed at probe {probe}, component {component}: analytic {analytic}, numeric {numeric}")]
    GradientCheck { probe: usize, component: usize, analytic: f64, numeric: f64 },

    #[error("proximal step did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("step size must be positive and finite, got {0}")]
    BadEta(f64),

    #[error("step sizes must be non-empty and strictly descending")]
    BadEtaList,

    #[error("t_end must be positive and n_steps at least 1")]
    BadTime,
}

pub type Result<T> = std::result::Result<T, RiemannianError>;

/// Which Euler discretization of the gradient flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Forward,
    Backward,
}

impl Scheme {
    /// `+1` for forward, `−1` for backward.
    pub fn sign(self) -> f64 {
        match self {
            Self::Forward => 1.0,
            Self::Backward => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Forward => "forward",
            Self::Backward => "backward",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "forward" => Ok(Self::Forward),
            "backward" => Ok(Self::Backward),
            other => Err(format!("unknown scheme '{other}' (expected forward or backward)")),
        }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(RiemannianError::BadEta(eta))
    }
}

/// `exp_x(−η ∇_g E(x))`.
pub fn forward_euler_step(m: &Manifold, f: &ObjectiveFn, x: &[f64], eta: f64) -> Result<Vec<f64>> {
    m.check_point(x)?;
    check_eta(eta)?;
    let v: Vec<f64> = f.riemannian_gradient(m, x).iter().map(|g| -eta * g).collect();
    let length = norm2(&v);
    if length >= m.injectivity_radius() {
        return Err(RiemannianError::Injectivity { length, radius: m.injectivity_radius() });
    }
    Ok(m.exp(x, &v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardStep {
    pub point: Vec<f64>,
    /// `‖exp_y⁻¹(x) − η ∇_g E(y)‖` at the returned point `y`.
    pub residual: f64,
    pub iterations: usize,
}

/// `‖exp_y⁻¹(x) − η ∇_g E(y)‖`.
pub fn stationarity_residual(m: &Manifold, f: &ObjectiveFn, x: &[f64], y: &[f64], eta: f64) -> Result<f64> {
    let l = m.log(y, x)?;
    let g = f.riemannian_gradient(m, y);
    Ok(l.iter().zip(&g).map(|(l, g)| (l - eta * g).powi(2)).sum::<f64>().sqrt())
}

/// Proximal step `argmin_y E(y) + d(x, y)²/(2η)`, found by iterating
/// `y ← exp_x(−η Γ_{y→x} ∇_g E(y))` with step halving whenever the
/// stationarity residual fails to decrease.
pub fn backward_euler_step(m: &Manifold, f: &ObjectiveFn, x: &[f64], eta: f64) -> Result<BackwardStep> {
    m.check_point(x)?;
    check_eta(eta)?;
    let mut y = x.to_vec();
    let mut r = stationarity_residual(m, f, x, &y, eta)?;
    let mut iterations = 0;
    while r > BACKWARD_TOL {
        if iterations == BACKWARD_MAX_ITER {
            return Err(RiemannianError::NoConvergence { iterations, residual: r });
        }
        iterations += 1;
        let g = f.riemannian_gradient(m, &y);
        let pulled = m.transport(&y, x, &g)?;
        let v: Vec<f64> = pulled.iter().map(|g| -eta * g).collect();
        let candidate = m.exp(x, &v);
        let dir = m.log(&y, &candidate)?;
        let mut alpha = 1.0;
        loop {
            let step: Vec<f64> = dir.iter().map(|d| alpha * d).collect();
            let trial = m.exp(&y, &step);
            let rt = stationarity_residual(m, f, x, &trial, eta)?;
            if rt < r || alpha < 1e-6 {
                y = trial;
                r = rt;
                break;
            }
            alpha *= 0.5;
        }
    }
    Ok(BackwardStep { point: y, residual: r, iterations })
}

/// Classical RK4 for `ẋ = −∇_g E(x)`, returning all `n_steps + 1` states.
/// On the sphere the stages run in ambient coordinates with the projected
/// gradient, and each step is retracted onto the sphere.
pub fn gradient_flow(m: &Manifold, f: &ObjectiveFn, x0: &[f64], t_end: f64, n_steps: usize) -> Result<Vec<Vec<f64>>> {
    m.check_point(x0)?;
    if !(t_end > 0.0 && t_end.is_finite()) || n_steps == 0 {
        return Err(RiemannianError::BadTime);
    }
    let h = t_end / n_steps as f64;
    let rhs = |x: &[f64]| -> Vec<f64> { f.riemannian_gradient(m, x).iter().map(|g| -g).collect() };
    let axpy = |x: &[f64], a: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + a * k).collect() };
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut x = x0.to_vec();
    out.push(x.clone());
    for _ in 0..n_steps {
        let k1 = rhs(&x);
        let k2 = rhs(&axpy(&x, 0.5 * h, &k1));
        let k3 = rhs(&axpy(&x, 0.5 * h, &k2));
        let k4 = rhs(&axpy(&x, h, &k3));
        let next: Vec<f64> =
            (0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
        x = m.project_point(&next);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(RiemannianError::NonFinite);
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Gradient flow on the modified objective of `scheme`.
pub fn modified_flow(
    m: &Manifold,
    f: &ObjectiveFn,
    x0: &[f64],
    eta: f64,
    scheme: Scheme,
    t_end: f64,
    n_steps: usize,
) -> Result<Vec<Vec<f64>>> {
    gradient_flow(m, &modified_objective(m, f, eta, scheme), x0, t_end, n_steps)
}

/// Discrete iterates of `scheme`, `k + 1` points including `x0`.
pub fn descent_iterates(m: &Manifold, f: &ObjectiveFn, x0: &[f64], eta: f64, scheme: Scheme, k: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(k + 1);
    let mut x = x0.to_vec();
    out.push(x.clone());
    for _ in 0..k {
        x = match scheme {
            Scheme::Forward => forward_euler_step(m, f, &x, eta)?,
            Scheme::Backward => backward_euler_step(m, f, &x, eta)?.point,
        };
        out.push(x.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderRow {
    pub eta: f64,
    pub err_plain: f64,
    pub err_modified: f64,
}

pub const ORDER_HEADER: &str = "eta,err_plain,err_modified";

impl OrderRow {
    pub fn to_csv_line(&self) -> String {
        format!("{:.5e},{:.5e},{:.5e}", self.eta, self.err_plain, self.err_modified)
    }
}

/// For each `η`: `⌈T/η⌉` descent steps, compared at every iterate with the
/// plain and the modified gradient flows (each integrated with `substeps`
/// RK4 steps per `η`). Errors are the sup of geodesic distances.
pub fn order_match_experiment(
    m: &Manifold,
    f: &ObjectiveFn,
    x0: &[f64],
    etas: &[f64],
    scheme: Scheme,
    t_end: f64,
    substeps: usize,
) -> Result<Vec<OrderRow>> {
    if etas.is_empty() || etas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(RiemannianError::BadEtaList);
    }
    if !(t_end > 0.0 && t_end.is_finite()) || substeps == 0 {
        return Err(RiemannianError::BadTime);
    }
    etas.par_iter()
        .map(|&eta| {
            check_eta(eta)?;
            let k = ((t_end / eta) - 1e-9).ceil().max(1.0) as usize;
            let gd = descent_iterates(m, f, x0, eta, scheme, k)?;
            let horizon = k as f64 * eta;
            let plain = gradient_flow(m, f, x0, horizon, k * substeps)?;
            let modified = modified_flow(m, f, x0, eta, scheme, horizon, k * substeps)?;
            let sup = |flow: &[Vec<f64>]| {
                (0..=k).map(|j| m.distance(&gd[j], &flow[j * substeps])).fold(0.0, f64::max)
            };
            Ok(OrderRow { eta, err_plain: sup(&plain), err_modified: sup(&modified) })
        })
        .collect()
}

/// `E(x) = ⟨x, e_z⟩ + a⟨x, e_x⟩²` on `S²`.
pub fn sphere_test_objective(a: f64) -> ObjectiveFn {
    use crate::matcore::Mat;
    ObjectiveFn::linear_quadratic(vec![0.0, 0.0, 1.0], Mat::from_diag(&[2.0 * a, 0.0, 0.0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::slope::fit_loglog;
    use crate::matcore::Mat;

    fn half_square() -> ObjectiveFn {
        ObjectiveFn::quadratic(Mat::identity(1))
    }

    #[test]
    fn forward_examples() {
        let m = Manifold::Euclidean(2);
        let f = ObjectiveFn::quadratic(Mat::identity(2));
        let y = forward_euler_step(&m, &f, &[1.0, 0.0], 0.1).unwrap();
        assert!((y[0] - 0.9).abs() < 1e-15 && y[1] == 0.0);

        let s = Manifold::Sphere(3);
        let lin = ObjectiveFn::linear_quadratic(vec![0.0, 0.0, 1.0], Mat::zeros(3));
        let eta = 0.2;
        let y = forward_euler_step(&s, &lin, &[1.0, 0.0, 0.0], eta).unwrap();
        assert!((y[0] - eta.cos()).abs() < 1e-14 && (y[2] + eta.sin()).abs() < 1e-14 && y[1] == 0.0);

        let at_min = forward_euler_step(&m, &f, &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(at_min, vec![0.0, 0.0]);
        assert!(matches!(
            forward_euler_step(&s, &lin, &[1.0, 0.0, 0.0], 4.0),
            Err(RiemannianError::Injectivity { .. })
        ));
    }

    #[test]
    fn backward_examples() {
        let m = Manifold::Euclidean(1);
        let step = backward_euler_step(&m, &half_square(), &[1.0], 0.1).unwrap();
        assert!((step.point[0] - 1.0 / 1.1).abs() < 1e-12);

        let zero = backward_euler_step(&m, &half_square(), &[0.0], 0.1).unwrap();
        assert_eq!(zero.point, vec![0.0]);
        assert_eq!(zero.iterations, 0);

        // root of y + 0.1 y³ = 1 by bisection
        let (mut a, mut b) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let c = 0.5 * (a + b);
            if c + 0.1 * c.powi(3) < 1.0 {
                a = c;
            } else {
                b = c;
            }
        }
        let q = backward_euler_step(&m, &ObjectiveFn::quartic(vec![1.0]), &[1.0], 0.1).unwrap();
        assert!((q.point[0] - a).abs() < 1e-12);
    }

    #[test]
    fn backward_stationarity_on_sphere() {
        let s = Manifold::Sphere(3);
        let f = sphere_test_objective(0.3);
        let x = s.project_point(&[0.4, -0.3, 0.8]);
        let step = backward_euler_step(&s, &f, &x, 0.125).unwrap();
        assert!(step.residual <= 1e-10);
        assert!(stationarity_residual(&s, &f, &x, &step.point, 0.125).unwrap() <= 1e-10);
    }

    #[test]
    fn modified_flow_linear_closed_form() {
        let m = Manifold::Euclidean(1);
        let eta = 0.1;
        let traj = modified_flow(&m, &half_square(), &[1.0], eta, Scheme::Forward, 1.0, 1000).unwrap();
        let exact = (-(1.0 + eta / 2.0)).exp();
        assert!((traj.last().unwrap()[0] - exact).abs() < 1e-10);
        let plain = modified_flow(&m, &half_square(), &[1.0], 0.0, Scheme::Forward, 1.0, 1000).unwrap();
        assert!((plain.last().unwrap()[0] - (-1f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn sphere_flow_stays_on_sphere() {
        let s = Manifold::Sphere(3);
        let lin = ObjectiveFn::linear_quadratic(vec![0.0, 0.0, 1.0], Mat::zeros(3));
        let x0 = s.project_point(&[1.0, 0.2, 0.3]);
        for p in gradient_flow(&s, &lin, &x0, 2.0, 400).unwrap() {
            assert!((norm2(&p) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn euclidean_orders() {
        let m = Manifold::Euclidean(1);
        let etas: Vec<f64> = (3..=7).map(|k| 2f64.powi(-k)).collect();
        let rows = order_match_experiment(&m, &half_square(), &[1.0], &etas, Scheme::Forward, 1.0, 16).unwrap();
        let plain = fit_loglog(&rows.iter().map(|r| (r.eta, r.err_plain)).collect::<Vec<_>>()).unwrap();
        let modified = fit_loglog(&rows.iter().map(|r| (r.eta, r.err_modified)).collect::<Vec<_>>()).unwrap();
        assert!((plain.slope - 1.0).abs() < 0.15, "{}", plain.slope);
        assert!((modified.slope - 2.0).abs() < 0.2, "{}", modified.slope);
        let one = order_match_experiment(&m, &half_square(), &[1.0], &[0.1], Scheme::Backward, 1.0, 8).unwrap();
        assert_eq!(one.len(), 1);
        assert!(order_match_experiment(&m, &half_square(), &[1.0], &[], Scheme::Forward, 1.0, 8).is_err());
        assert!(order_match_experiment(&m, &half_square(), &[1.0], &[0.1, 0.2], Scheme::Forward, 1.0, 8).is_err());
    }
}
