//! Linear Fokker–Planck dynamics on Gaussians (Bures–Wasserstein space).
//!
//! For the quadratic-well free energy with symmetric, negative definite drift
//! `A` the Wasserstein gradient flow keeps Gaussians Gaussian and reduces to
//! the Lyapunov system
//!
//! ```text
//! μ̇ = Aμ,   Σ̇ = AΣ + ΣA + (2/β) I
//! ```
//!
//! and a single JKO step has a closed form. The corrected (JKO-flow) system
//! adds
//!
//! ```text
//! μ̇ += (η/2) A²μ,   Σ̇ += (η/2)(A²Σ + ΣA²) − η β⁻² Σ⁻¹
//! ```
//!
//! which matches the JKO step to third order in `η` per step.

use rayon::prelude::*;
use thiserror::Error;

use crate::harness::rng::SeededRng;
use crate::matcore::{
    dot, norm2, qr_orthogonal, spd_eigen, spd_inv_sqrt, spd_inverse, spd_sqrt, sym_eigen,
    LinalgError, Mat, SymMatrix,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuresError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error("mean has length {mean} but covariance is {cov}x{cov}")]
    ShapeMismatch { mean: usize, cov: usize },

    #[error("drift must be negative definite; largest eigenvalue is {0:e}")]
    DriftNotStable(f64),

    #[error("inverse temperature must be positive and finite, got {0}")]
    BadBeta(f64),

    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),

    #[error("covariance lost positive definiteness at RK4 step {step}: {source}")]
    LostSpd { step: usize, source: LinalgError },

    #[error("JKO step produced a non-SPD covariance: {0}")]
    JkoNotSpd(LinalgError),

    #[error("n_steps must be at least 1")]
    NoSteps,

    #[error("eta list must be non-empty, positive and strictly descending")]
    BadEtaList,
}

pub type Result<T> = std::result::Result<T, BuresError>;

/// A Gaussian `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: Vec<f64>,
    pub cov: SymMatrix,
}

impl GaussianState {
    pub fn new(mean: Vec<f64>, cov: SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(BuresError::ShapeMismatch { mean: mean.len(), cov: cov.dim() });
        }
        spd_eigen(&cov)?;
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `dX = AX dt + sqrt(2/β) dB` with symmetric `A ≺ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFokkerPlanck {
    drift: SymMatrix,
    beta: f64,
}

impl LinearFokkerPlanck {
    pub fn new(drift: SymMatrix, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(BuresError::BadBeta(beta));
        }
        let top = *sym_eigen(&drift)?.values.last().unwrap();
        if top >= -1e-12 {
            return Err(BuresError::DriftNotStable(top));
        }
        Ok(Self { drift, beta })
    }

    pub fn drift(&self) -> &SymMatrix {
        &self.drift
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    fn check(&self, s: &GaussianState) -> Result<()> {
        if s.dim() != self.dim() {
            return Err(BuresError::ShapeMismatch { mean: s.dim(), cov: self.dim() });
        }
        Ok(())
    }
}

/// Time derivative of a Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianRate {
    pub dmean: Vec<f64>,
    pub dcov: SymMatrix,
}

/// Which vector field [`rk4_integrate`] follows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowKind {
    Vanilla,
    Corrected { eta: f64 },
}

/// Closed-form W2 distance between Gaussians:
/// `‖μa−μb‖² + tr(Σa + Σb − 2(Σa^½ Σb Σa^½)^½)`.
pub fn bures_w2(a: &GaussianState, b: &GaussianState) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(BuresError::ShapeMismatch { mean: a.dim(), cov: b.dim() });
    }
    let mean_sq: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    let ra = spd_sqrt(&a.cov)?;
    let cross = b.cov.congruence(&ra);
    // The cross term is PSD in exact arithmetic; clip round-off below zero.
    let cross_sqrt_trace: f64 = sym_eigen(&cross)?.values.iter().map(|l| l.max(0.0).sqrt()).sum();
    let w2_sq = mean_sq + a.cov.trace() + b.cov.trace() - 2.0 * cross_sqrt_trace;
    Ok(w2_sq.max(0.0).sqrt())
}

/// Lyapunov right-hand side `(Aμ, AΣ + ΣA + (2/β)I)`.
pub fn lyapunov_rhs(s: &GaussianState, sys: &LinearFokkerPlanck) -> Result<GaussianRate> {
    sys.check(s)?;
    let a = sys.drift.as_mat();
    let dmean = a.matvec(&s.mean);
    let a_sigma = a * s.cov.as_mat();
    let mut dcov = &a_sigma + &a_sigma.transpose();
    let diffusion = 2.0 / sys.beta;
    for i in 0..sys.dim() {
        dcov[(i, i)] += diffusion;
    }
    Ok(GaussianRate { dmean, dcov: dcov.symmetrize() })
}

/// The `η`-independent part of the correction, so that
/// `corrected_rhs = lyapunov_rhs + η · correction_direction`.
fn correction_direction(s: &GaussianState, sys: &LinearFokkerPlanck) -> Result<GaussianRate> {
    let a = sys.drift.as_mat();
    let a2 = a * a;
    let dmean: Vec<f64> = a2.matvec(&s.mean).into_iter().map(|v| 0.5 * v).collect();
    let a2_sigma = &a2 * s.cov.as_mat();
    let sym = (&a2_sigma + &a2_sigma.transpose()).scale(0.5);
    let inv = spd_inverse(&s.cov)?;
    let dcov = &sym - &inv.as_mat().scale(1.0 / (sys.beta * sys.beta));
    Ok(GaussianRate { dmean, dcov: dcov.symmetrize() })
}

/// JKO-flow right-hand side: the Lyapunov field plus
/// `((η/2)A²μ, (η/2)(A²Σ + ΣA²) − ηβ⁻²Σ⁻¹)`.
pub fn corrected_rhs(s: &GaussianState, sys: &LinearFokkerPlanck, eta: f64) -> Result<GaussianRate> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(BuresError::BadStep(eta));
    }
    let base = lyapunov_rhs(s, sys)?;
    if eta == 0.0 {
        return Ok(base);
    }
    let corr = correction_direction(s, sys)?;
    let dmean = base.dmean.iter().zip(&corr.dmean).map(|(b, c)| b + eta * c).collect();
    let dcov = base.dcov.add(&corr.dcov.scale(eta));
    Ok(GaussianRate { dmean, dcov })
}

/// Result of one closed-form JKO step, with the residual of the defining
/// fixed-point relation evaluated at the returned covariance.
#[derive(Debug, Clone)]
pub struct JkoStep {
    pub state: GaussianState,
    pub residual: f64,
}

/// One exact JKO step for the quadratic-well free energy.
///
/// The mean solves `(I − ηA) μ⁺ = μ`. For the covariance, with
/// `S = Σ^{-1/2}` and `B = S(I − ηA)S`, the relation
/// `(S Σ⁺⁻¹ S)^{1/2} = Z := (β/2η)(−I + (I + (4η/β)B)^{1/2})` is inverted as
/// `Σ⁺ = S Z⁻² S`. `Z` is formed on the spectrum of `B` as
/// `2λ / (1 + sqrt(1 + 4ηλ/β))`, which avoids the cancellation of the
/// direct formula for small `η`.
pub fn jko_analytic_step(s: &GaussianState, sys: &LinearFokkerPlanck, eta: f64) -> Result<JkoStep> {
    sys.check(s)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(BuresError::BadStep(eta));
    }
    let d = sys.dim();
    let beta = sys.beta;
    let shifted = SymMatrix::identity(d).sub(&sys.drift.scale(eta));
    let mean = spd_inverse(&shifted)?.matvec(&s.mean);

    let inv_sqrt = spd_inv_sqrt(&s.cov)?;
    let b = shifted.congruence(&inv_sqrt);
    let b_eig = spd_eigen(&b)?;
    let z_inv = b_eig.map(|l| (1.0 + (1.0 + 4.0 * eta * l / beta).sqrt()) / (2.0 * l));
    let z_inv_sq = (z_inv.as_mat() * z_inv.as_mat()).symmetrize();
    let cov = z_inv_sq.congruence(&inv_sqrt);
    spd_eigen(&cov).map_err(BuresError::JkoNotSpd)?;

    let residual = jko_residual(&s.cov, &cov, sys, eta)?;
    Ok(JkoStep { state: GaussianState { mean, cov }, residual })
}

/// Frobenius residual of the covariance fixed-point relation at a candidate
/// next covariance.
pub fn jko_residual(prev: &SymMatrix, next: &SymMatrix, sys: &LinearFokkerPlanck, eta: f64) -> Result<f64> {
    let d = prev.dim();
    let beta = sys.beta;
    let inv_sqrt = spd_inv_sqrt(prev)?;
    let lhs = spd_sqrt(&spd_inverse(next)?.congruence(&inv_sqrt))?;
    let shifted = SymMatrix::identity(d).sub(&sys.drift.scale(eta));
    let inner = SymMatrix::identity(d).add(&shifted.congruence(&inv_sqrt).scale(4.0 * eta / beta));
    let rhs = spd_sqrt(&inner)?.sub(&SymMatrix::identity(d)).scale(beta / (2.0 * eta));
    Ok(lhs.sub(&rhs).frobenius())
}

fn rate(s: &GaussianState, sys: &LinearFokkerPlanck, kind: FlowKind) -> Result<GaussianRate> {
    match kind {
        FlowKind::Vanilla => lyapunov_rhs(s, sys),
        FlowKind::Corrected { eta } => corrected_rhs(s, sys, eta),
    }
}

fn advance(s: &GaussianState, k: &GaussianRate, h: f64) -> GaussianState {
    GaussianState {
        mean: s.mean.iter().zip(&k.dmean).map(|(m, dm)| m + h * dm).collect(),
        cov: s.cov.add(&k.dcov.scale(h)),
    }
}

/// Classical RK4 on the coupled (mean, covariance) system.
pub fn rk4_integrate(
    s0: &GaussianState,
    sys: &LinearFokkerPlanck,
    kind: FlowKind,
    t_end: f64,
    n_steps: usize,
) -> Result<GaussianState> {
    sys.check(s0)?;
    if n_steps == 0 {
        return Err(BuresError::NoSteps);
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(BuresError::BadStep(t_end));
    }
    if t_end == 0.0 {
        return Ok(s0.clone());
    }
    let h = t_end / n_steps as f64;
    let lost = |step: usize| move |e: BuresError| match e {
        BuresError::Linalg(source) => BuresError::LostSpd { step, source },
        other => other,
    };
    let mut s = s0.clone();
    for step in 0..n_steps {
        let k1 = rate(&s, sys, kind).map_err(lost(step))?;
        let k2 = rate(&advance(&s, &k1, 0.5 * h), sys, kind).map_err(lost(step))?;
        let k3 = rate(&advance(&s, &k2, 0.5 * h), sys, kind).map_err(lost(step))?;
        let k4 = rate(&advance(&s, &k3, h), sys, kind).map_err(lost(step))?;
        let w = h / 6.0;
        let mean = (0..s.dim())
            .map(|i| s.mean[i] + w * (k1.dmean[i] + 2.0 * k2.dmean[i] + 2.0 * k3.dmean[i] + k4.dmean[i]))
            .collect();
        let incr = k1.dcov.add(&k2.dcov.scale(2.0)).add(&k3.dcov.scale(2.0)).add(&k4.dcov);
        let cov = s.cov.add(&incr.scale(w)).as_mat().symmetrize();
        spd_eigen(&cov).map_err(|source| BuresError::LostSpd { step, source })?;
        s = GaussianState { mean, cov };
    }
    Ok(s)
}

/// One row of the error-scaling table.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorScalingRow {
    pub eta: f64,
    pub w2_vanilla: f64,
    pub w2_modified: f64,
    pub mean_err_vanilla: f64,
    pub mean_err_modified: f64,
    pub cov_err_vanilla: f64,
    pub cov_err_modified: f64,
}

pub const ERROR_SCALING_HEADER: &str =
    "eta,w2_vanilla,w2_modified,mean_err_vanilla,mean_err_modified,cov_err_vanilla,cov_err_modified";

impl ErrorScalingRow {
    pub fn to_csv_line(&self) -> String {
        [
            self.eta,
            self.w2_vanilla,
            self.w2_modified,
            self.mean_err_vanilla,
            self.mean_err_modified,
            self.cov_err_vanilla,
            self.cov_err_modified,
        ]
        .iter()
        .map(|v| format!("{v:.5e}"))
        .collect::<Vec<_>>()
        .join(",")
    }
}

pub fn error_scaling_csv(rows: &[ErrorScalingRow]) -> String {
    let mut out = String::from(ERROR_SCALING_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

fn scaling_row(
    sys: &LinearFokkerPlanck,
    s0: &GaussianState,
    eta: f64,
    steps_per_eta: usize,
) -> Result<ErrorScalingRow> {
    let jko = jko_analytic_step(s0, sys, eta)?.state;
    let vanilla = rk4_integrate(s0, sys, FlowKind::Vanilla, eta, steps_per_eta)?;
    let modified = rk4_integrate(s0, sys, FlowKind::Corrected { eta }, eta, steps_per_eta)?;
    let mean_err = |s: &GaussianState| {
        norm2(&s.mean.iter().zip(&jko.mean).map(|(a, b)| a - b).collect::<Vec<_>>())
    };
    Ok(ErrorScalingRow {
        eta,
        w2_vanilla: bures_w2(&vanilla, &jko)?,
        w2_modified: bures_w2(&modified, &jko)?,
        mean_err_vanilla: mean_err(&vanilla),
        mean_err_modified: mean_err(&modified),
        cov_err_vanilla: vanilla.cov.sub(&jko.cov).frobenius(),
        cov_err_modified: modified.cov.sub(&jko.cov).frobenius(),
    })
}

/// For each `η`: integrate both flows to `t = η`, take one JKO step, and
/// report the distances between them. Rows come back in input order.
pub fn bw_error_scaling(
    sys: &LinearFokkerPlanck,
    s0: &GaussianState,
    etas: &[f64],
    steps_per_eta: usize,
) -> Result<Vec<ErrorScalingRow>> {
    if etas.is_empty() || etas.iter().any(|&e| !(e > 0.0 && e.is_finite())) || etas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(BuresError::BadEtaList);
    }
    if steps_per_eta == 0 {
        return Err(BuresError::NoSteps);
    }
    etas.par_iter().map(|&eta| scaling_row(sys, s0, eta, steps_per_eta)).collect()
}

/// Randomized instance following the reference protocol: `A = Q diag(spectrum) Qᵀ`
/// with `Q` from the QR factorization of a Gaussian matrix,
/// `P₀ = MMᵀ + εI`, `μ₀ ~ N(0, I)`.
#[derive(Debug, Clone)]
pub struct BwInstance {
    pub system: LinearFokkerPlanck,
    pub initial: GaussianState,
}

pub const DEFAULT_DRIFT_SPECTRUM: [f64; 3] = [-0.2, -0.6, -1.2];
pub const DEFAULT_COV_JITTER: f64 = 0.5;

impl BwInstance {
    pub fn random(rng: &mut SeededRng, spectrum: &[f64], jitter: f64, beta: f64) -> Result<Self> {
        let d = spectrum.len();
        let z = Mat::new(d, rng.normals(d * d))?;
        let q = qr_orthogonal(&z)?;
        let drift = (&(&q * &Mat::from_diag(spectrum)) * &q.transpose()).symmetrize();
        let m = Mat::new(d, rng.normals(d * d))?;
        let p0 = (&m * &m.transpose()).symmetrize().add(&SymMatrix::identity(d).scale(jitter));
        let mu0 = rng.normals(d);
        Ok(Self { system: LinearFokkerPlanck::new(drift, beta)?, initial: GaussianState::new(mu0, p0)? })
    }

    pub fn reference(seed: u64) -> Result<Self> {
        Self::random(&mut SeededRng::new(seed), &DEFAULT_DRIFT_SPECTRUM, DEFAULT_COV_JITTER, 1.0)
    }
}

/// `½A²P₀ + ½P₀A² − β⁻²P₀⁻¹`: the second-order gap between one JKO step and
/// the exact flow, per unit `η²`.
pub fn jko_second_order_covariance_gap(sys: &LinearFokkerPlanck, p0: &SymMatrix) -> Result<SymMatrix> {
    let a2 = sys.drift.as_mat() * sys.drift.as_mat();
    let t = &a2 * p0.as_mat();
    let sym = (&t + &t.transpose()).scale(0.5);
    let inv = spd_inverse(p0)?;
    Ok((&sym - &inv.as_mat().scale(1.0 / (sys.beta * sys.beta))).symmetrize())
}

/// `η²` coefficient of `(JKO step − exact flow at t = η)`, extracted from the
/// closed-form step by Richardson extrapolation on `η, η/2, η/4`.
///
/// The exact flow's Taylor terms through `η²` are known in closed form
/// (`Ṗ` and `P̈ = AṖ + ṖA`), so each sample is
/// `c(η) = (P_jko(η) − P₀ − ηṖ − ½η²P̈)/η²`, and two elimination rounds remove
/// the `O(η)` and `O(η²)` remainders.
pub fn richardson_covariance_gap(s0: &GaussianState, sys: &LinearFokkerPlanck, eta: f64) -> Result<SymMatrix> {
    let rate0 = lyapunov_rhs(s0, sys)?;
    let a = sys.drift.as_mat();
    let pdot = rate0.dcov.as_mat();
    let pddot = &(a * pdot) + &(pdot * a);
    let sample = |h: f64| -> Result<Mat> {
        let next = jko_analytic_step(s0, sys, h)?.state.cov;
        let taylor = &(&s0.cov.as_mat().clone() + &pdot.scale(h)) + &pddot.scale(0.5 * h * h);
        Ok((next.as_mat() - &taylor).scale(1.0 / (h * h)))
    };
    let c1 = sample(eta)?;
    let c2 = sample(eta / 2.0)?;
    let c3 = sample(eta / 4.0)?;
    let r1 = &c2.scale(2.0) - &c1;
    let r2 = &c3.scale(2.0) - &c2;
    Ok((&r2.scale(4.0) - &r1).scale(1.0 / 3.0).symmetrize())
}

/// Same extraction for the mean: the `η²` coefficient of
/// `(I − ηA)⁻¹μ − e^{ηA}μ`, which is `½A²μ`.
pub fn richardson_mean_gap(s0: &GaussianState, sys: &LinearFokkerPlanck, eta: f64) -> Result<Vec<f64>> {
    let a = sys.drift.as_mat();
    let a_mu = a.matvec(&s0.mean);
    let a2_mu = a.matvec(&a_mu);
    let d = s0.dim();
    let sample = |h: f64| -> Result<Vec<f64>> {
        let next = jko_analytic_step(s0, sys, h)?.state.mean;
        Ok((0..d).map(|i| (next[i] - s0.mean[i] - h * a_mu[i] - 0.5 * h * h * a2_mu[i]) / (h * h)).collect())
    };
    let c1 = sample(eta)?;
    let c2 = sample(eta / 2.0)?;
    let c3 = sample(eta / 4.0)?;
    Ok((0..d)
        .map(|i| {
            let r1 = 2.0 * c2[i] - c1[i];
            let r2 = 2.0 * c3[i] - c2[i];
            (4.0 * r2 - r1) / 3.0
        })
        .collect())
}

/// Relative Frobenius distance `‖a − b‖ / ‖b‖`.
pub fn rel_frobenius(a: &SymMatrix, b: &SymMatrix) -> f64 {
    a.sub(b).frobenius() / b.frobenius().max(f64::MIN_POSITIVE)
}

/// Euclidean distance between two vectors.
pub fn vec_dist(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    dot(&d, &d).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_system(a: f64, beta: f64) -> LinearFokkerPlanck {
        LinearFokkerPlanck::new(SymMatrix::from_diag(&[a]), beta).unwrap()
    }

    fn scalar_state(mu: f64, var: f64) -> GaussianState {
        GaussianState::new(vec![mu], SymMatrix::from_diag(&[var])).unwrap()
    }

    /// Bisection on a scalar monotone function; test-only oracle.
    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let flo = f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (flo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn w2_examples() {
        let id = SymMatrix::identity(2);
        let a = GaussianState::new(vec![0.0, 0.0], id.clone()).unwrap();
        assert_eq!(bures_w2(&a, &a).unwrap(), 0.0);

        let b = GaussianState::new(vec![3.0, 4.0], id.clone()).unwrap();
        assert!((bures_w2(&a, &b).unwrap() - 5.0).abs() < 1e-12);

        let c = GaussianState::new(vec![0.0, 0.0], id.scale(4.0)).unwrap();
        assert!((bures_w2(&a, &c).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn w2_symmetric_on_random_states() {
        for seed in 0..20 {
            let x = BwInstance::reference(seed).unwrap().initial;
            let y = BwInstance::reference(seed + 100).unwrap().initial;
            let d1 = bures_w2(&x, &y).unwrap();
            let d2 = bures_w2(&y, &x).unwrap();
            assert!((d1 - d2).abs() < 1e-10, "seed {seed}: {d1} vs {d2}");
            assert!(d1 > 0.0);
        }
    }

    #[test]
    fn lyapunov_examples() {
        let sys = LinearFokkerPlanck::new(SymMatrix::identity(2).scale(-1.0), 1.0).unwrap();
        let s = GaussianState::new(vec![0.3, -2.0], SymMatrix::identity(2)).unwrap();
        let r = lyapunov_rhs(&s, &sys).unwrap();
        assert_eq!(r.dmean, vec![-0.3, 2.0]);
        assert!(r.dcov.frobenius() < 1e-15);

        let s2 = GaussianState::new(vec![0.0, 0.0], SymMatrix::identity(2).scale(2.0)).unwrap();
        let r2 = lyapunov_rhs(&s2, &sys).unwrap();
        assert_eq!(r2.dmean, vec![0.0, 0.0]);
        assert!(rel_frobenius(&r2.dcov, &SymMatrix::identity(2).scale(-2.0)) < 1e-15);
    }

    #[test]
    fn corrected_examples() {
        let eta = 0.1;
        let sys = LinearFokkerPlanck::new(SymMatrix::identity(2).scale(-1.0), 1.0).unwrap();
        let mu0 = vec![1.5, -0.5];
        let s = GaussianState::new(mu0.clone(), SymMatrix::identity(2)).unwrap();
        let r = corrected_rhs(&s, &sys, eta).unwrap();
        for i in 0..2 {
            assert!((r.dmean[i] - (-mu0[i] + 0.5 * eta * mu0[i])).abs() < 1e-15);
        }
        // (η/2)(I + I) − η I = 0 at the stationary covariance
        assert!(r.dcov.frobenius() < 1e-15);

        let r0 = corrected_rhs(&s, &sys, 0.0).unwrap();
        assert_eq!(r0, lyapunov_rhs(&s, &sys).unwrap());

        // A = diag(−1,−2), Σ = diag(1, 0.5): correction (η/2)(A²Σ+ΣA²) − ηΣ⁻¹ = η·diag(0, 0)
        // plus the Lyapunov part diag(−2+2, −2+2).
        let sys2 = LinearFokkerPlanck::new(SymMatrix::from_diag(&[-1.0, -2.0]), 1.0).unwrap();
        let s2 = GaussianState::new(vec![0.0, 0.0], SymMatrix::from_diag(&[1.0, 0.5])).unwrap();
        let base = lyapunov_rhs(&s2, &sys2).unwrap();
        let corr = corrected_rhs(&s2, &sys2, eta).unwrap();
        let diff = corr.dcov.sub(&base.dcov).scale(1.0 / eta);
        assert!((diff.get(0, 0) - 0.0).abs() < 1e-14);
        assert!((diff.get(1, 1) - 0.0).abs() < 1e-14);

        // A = diag(−1,−2), Σ = diag(2, 1): η·diag(½·2·2 − ½, ½·2·4 − 1) = η·diag(1.5, 3)
        let s3 = GaussianState::new(vec![0.0, 0.0], SymMatrix::from_diag(&[2.0, 1.0])).unwrap();
        let diff = corrected_rhs(&s3, &sys2, eta).unwrap().dcov.sub(&lyapunov_rhs(&s3, &sys2).unwrap().dcov);
        assert!((diff.get(0, 0) - eta * 1.5).abs() < 1e-14);
        assert!((diff.get(1, 1) - eta * 3.0).abs() < 1e-14);
        assert!(diff.get(0, 1).abs() < 1e-15);
    }

    #[test]
    fn correction_is_linear_in_eta() {
        let inst = BwInstance::reference(4).unwrap();
        let base = lyapunov_rhs(&inst.initial, &inst.system).unwrap();
        let ratio = |eta: f64| {
            let c = corrected_rhs(&inst.initial, &inst.system, eta).unwrap();
            c.dcov.sub(&base.dcov).scale(1.0 / eta)
        };
        let r1 = ratio(1e-1);
        let r2 = ratio(1e-3);
        assert!(r1.sub(&r2).frobenius() <= 1e-12 * r1.frobenius());
    }

    #[test]
    fn jko_scalar_mean() {
        let sys = scalar_system(-1.0, 1.0);
        let step = jko_analytic_step(&scalar_state(1.0, 1.0), &sys, 0.1).unwrap();
        assert!((step.state.mean[0] - 1.0 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn jko_scalar_covariance_matches_root_finding() {
        // With σ² = 1 the relation reads z = (β/2η)(−1 + sqrt(1 + (4η/β)(1 + η)))
        // where z = 1/σ⁺ (i.e. σ⁺² = 1/z²). Solve z for the fixed point by bisection.
        let (eta, beta) = (0.1, 1.0);
        let sys = scalar_system(-1.0, beta);
        let step = jko_analytic_step(&scalar_state(0.0, 1.0), &sys, eta).unwrap();
        let z = bisect(
            |z| z - (beta / (2.0 * eta)) * (-1.0 + (1.0 + 4.0 * eta / beta * (1.0 + eta)).sqrt()),
            1e-6,
            10.0,
        );
        assert!((step.state.cov.get(0, 0) - 1.0 / (z * z)).abs() < 1e-12);
        assert!(step.residual < 1e-12);
    }

    #[test]
    fn jko_small_eta_is_identity() {
        let inst = BwInstance::reference(2).unwrap();
        let step = jko_analytic_step(&inst.initial, &inst.system, 1e-8).unwrap();
        assert!(vec_dist(&step.state.mean, &inst.initial.mean) <= 1e-6);
        assert!(step.state.cov.sub(&inst.initial.cov).frobenius() <= 1e-6);
    }

    #[test]
    fn jko_residual_is_small_on_random_instances() {
        for seed in 0..30 {
            let inst = BwInstance::reference(seed).unwrap();
            for &eta in &[1e-3, 0.05, 0.25, 1.0] {
                let step = jko_analytic_step(&inst.initial, &inst.system, eta).unwrap();
                assert!(step.residual <= 1e-8, "seed {seed} eta {eta}: {}", step.residual);
            }
        }
    }

    #[test]
    fn rk4_exact_ou_solution() {
        let sys = scalar_system(-1.0, 1.0);
        let s0 = scalar_state(1.0, 3.0);
        let s = rk4_integrate(&s0, &sys, FlowKind::Vanilla, 1.0, 200).unwrap();
        assert!((s.mean[0] - (-1f64).exp()).abs() <= 1e-10);
        let var = 1.0 + (3.0 - 1.0) * (-2f64).exp();
        assert!((s.cov.get(0, 0) - var).abs() <= 1e-10);

        let same = rk4_integrate(&s0, &sys, FlowKind::Vanilla, 0.0, 1).unwrap();
        assert_eq!(same, s0);
        assert!(matches!(rk4_integrate(&s0, &sys, FlowKind::Vanilla, 1.0, 0), Err(BuresError::NoSteps)));
    }

    #[test]
    fn rk4_reports_spd_loss_with_step() {
        // A huge negative correction on the covariance drives it through zero.
        let sys = scalar_system(-1.0, 0.05);
        let s0 = scalar_state(0.0, 0.01);
        let err = rk4_integrate(&s0, &sys, FlowKind::Corrected { eta: 50.0 }, 1.0, 4).unwrap_err();
        assert!(matches!(err, BuresError::LostSpd { .. }), "{err:?}");
    }

    #[test]
    fn one_step_consistency_orders() {
        let etas: Vec<f64> = (2..=7).map(|k| 2f64.powi(-k)).collect();
        let inst = BwInstance::reference(17).unwrap();
        let rows = bw_error_scaling(&inst.system, &inst.initial, &etas, 200).unwrap();
        let slope = |f: &dyn Fn(&ErrorScalingRow) -> f64| {
            let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.eta, f(r))).collect();
            crate::harness::slope::fit_loglog(&pts).unwrap().slope
        };
        assert!(slope(&|r| r.w2_vanilla) >= 1.8);
        assert!(slope(&|r| r.w2_modified) >= 2.7);
    }

    #[test]
    fn richardson_recovers_second_order_gap() {
        for seed in 0..5 {
            let inst = BwInstance::reference(seed).unwrap();
            let got = richardson_covariance_gap(&inst.initial, &inst.system, 1e-2).unwrap();
            let want = jko_second_order_covariance_gap(&inst.system, &inst.initial.cov).unwrap();
            assert!(rel_frobenius(&got, &want) <= 1e-4, "seed {seed}: {}", rel_frobenius(&got, &want));
        }
    }

    #[test]
    fn scaling_table_shape_and_csv() {
        let inst = BwInstance::reference(1).unwrap();
        let rows = bw_error_scaling(&inst.system, &inst.initial, &[0.1], 50).unwrap();
        assert_eq!(rows.len(), 1);
        let csv = error_scaling_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), ERROR_SCALING_HEADER);
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields.len(), 7);
        assert_eq!(fields[0], "1.00000e-1");
        assert!(bw_error_scaling(&inst.system, &inst.initial, &[0.1, 0.2], 50).is_err());
        assert!(bw_error_scaling(&inst.system, &inst.initial, &[], 50).is_err());
    }

    #[test]
    fn invalid_systems_rejected() {
        assert!(matches!(
            LinearFokkerPlanck::new(SymMatrix::from_diag(&[-1.0, 0.5]), 1.0),
            Err(BuresError::DriftNotStable(_))
        ));
        assert!(matches!(LinearFokkerPlanck::new(SymMatrix::identity(1).scale(-1.0), 0.0), Err(BuresError::BadBeta(_))));
        assert!(GaussianState::new(vec![0.0], SymMatrix::from_diag(&[0.0])).is_err());
        assert!(GaussianState::new(vec![0.0, 1.0], SymMatrix::identity(1)).is_err());
    }
}
