//! Deterministic particle discretization of the Langevin Wasserstein flow and
//! its JKO correction in 1D.
//!
//! Particles follow `ẋ = v^η(x)` with
//! `v^η = −E′ − β⁻¹s + (η/4)(2E′E″ − β⁻²∂(s²)) − (η/2β)(E‴ + β⁻¹∂²s)`,
//! where `s = ∂ₓ log ρ̂` is the score of a Gaussian kernel density estimate.
//!
//! The score and its derivatives are computed on an auxiliary grid of
//! spacing `δ/2` (with `δ` the finite-difference stencil width) from a
//! linearly binned KDE, then interpolated back to the particles with
//! Catmull–Rom splines. [`kde_score`] is the exact, unbinned estimator.

use rayon::prelude::*;
use thiserror::Error;

use crate::grid1d::{kl_to_target, GridDensity1D, GridError, UniformGrid};
use crate::harness::rng::SeededRng;

/// Smallest admissible ensemble.
pub const MIN_PARTICLES: usize = 16;

/// Kernel support, in bandwidths, used by the binned estimator and the KL
/// density estimate.
pub const KERNEL_CUTOFF: f64 = 6.0;

/// Default stencil width as a fraction of the bandwidth.
pub const DEFAULT_STENCIL_FRACTION: f64 = 0.25;

/// Default number of steps between bandwidth refreshes.
pub const DEFAULT_BANDWIDTH_REFRESH: usize = 50;

const SCORE_FLOOR: f64 = 1e-300;
const MAX_SCORE_NODES: usize = 1 << 20;
const PARALLEL_THRESHOLD: usize = 16_384;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParticleError {
    #[error("ensemble needs at least {MIN_PARTICLES} particles, got {0}")]
    TooFewParticles(usize),

    #[error("particle {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },

    #[error("bandwidth must be positive and finite, got {0}")]
    BadBandwidth(f64),

    #[error("invalid parameter {name} = {value}")]
    BadParameter { name: &'static str, value: f64 },

    #[error("at least 64 bins required, got {0}")]
    TooFewBins(usize),

    #[error("particle spread {spread} is too wide for bandwidth {bandwidth}")]
    SpreadTooWide { spread: f64, bandwidth: f64 },

    #[error(transparent)]
    Grid(#[from] GridError),
}

pub type Result<T> = std::result::Result<T, ParticleError>;

/// Equally weighted particle positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    positions: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<f64>) -> Result<Self> {
        if positions.len() < MIN_PARTICLES {
            return Err(ParticleError::TooFewParticles(positions.len()));
        }
        if let Some(index) = positions.iter().position(|x| !x.is_finite()) {
            return Err(ParticleError::NonFinite { index, value: positions[index] });
        }
        Ok(Self { positions })
    }

    /// `n` independent standard normal draws.
    pub fn standard_normal(n: usize, rng: &mut SeededRng) -> Result<Self> {
        Self::new(rng.normals(n))
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.positions.iter().sum::<f64>() / self.len() as f64
    }

    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        (self.positions.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (self.len() - 1) as f64).sqrt()
    }

    /// `1.06 σ̂ N^{-1/5}`; falls back to `1e-3` for a collapsed ensemble.
    pub fn silverman_bandwidth(&self) -> f64 {
        let b = 1.06 * self.std_dev() * (self.len() as f64).powf(-0.2);
        if b > 0.0 && b.is_finite() {
            b
        } else {
            1e-3
        }
    }
}

/// A potential with three analytic derivatives.
pub trait PotentialChain: Send + Sync {
    fn value(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
    fn d3(&self, x: f64) -> f64;
}

/// `Σ cₖ xᵏ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    /// Coefficients of the polynomial and of its first three derivatives.
    derivs: [Vec<f64>; 4],
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let diff = |c: &[f64]| -> Vec<f64> { c.iter().enumerate().skip(1).map(|(k, &a)| k as f64 * a).collect() };
        let d1 = diff(&coeffs);
        let d2 = diff(&d1);
        let d3 = diff(&d2);
        Self { derivs: [coeffs, d1, d2, d3] }
    }

    /// `x²/2 + x⁴/4`.
    pub fn quartic() -> Self {
        Self::new(vec![0.0, 0.0, 0.5, 0.0, 0.25])
    }

    /// `x²/2`.
    pub fn harmonic() -> Self {
        Self::new(vec![0.0, 0.0, 0.5])
    }

    fn eval_derivative(&self, order: usize, x: f64) -> f64 {
        self.derivs[order].iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}

impl PotentialChain for Polynomial {
    fn value(&self, x: f64) -> f64 {
        self.eval_derivative(0, x)
    }
    fn d1(&self, x: f64) -> f64 {
        self.eval_derivative(1, x)
    }
    fn d2(&self, x: f64) -> f64 {
        self.eval_derivative(2, x)
    }
    fn d3(&self, x: f64) -> f64 {
        self.eval_derivative(3, x)
    }
}

/// Exact Gaussian-kernel score `Σ K′_b(q − xᵢ) / Σ K_b(q − xᵢ)` at each query.
///
/// Kernel weights are shifted by the nearest particle's exponent, which
/// leaves the ratio unchanged and keeps the denominator at least 1.
pub fn kde_score(positions: &[f64], bandwidth: f64, query: &[f64]) -> Result<Vec<f64>> {
    check_bandwidth(bandwidth)?;
    let inv_b2 = 1.0 / (bandwidth * bandwidth);
    Ok(query
        .iter()
        .map(|&q| {
            let m = positions.iter().map(|x| (q - x) * (q - x)).fold(f64::INFINITY, f64::min);
            let (mut num, mut den) = (0.0, 0.0);
            for x in positions {
                let d = q - x;
                let k = (-0.5 * (d * d - m) * inv_b2).exp();
                num -= d * inv_b2 * k;
                den += k;
            }
            num / den.max(SCORE_FLOOR)
        })
        .collect())
}

fn check_bandwidth(b: f64) -> Result<()> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(ParticleError::BadBandwidth(b))
    }
}

/// Score-derived fields on an auxiliary grid.
#[derive(Debug, Clone)]
pub struct BinnedScore {
    origin: f64,
    dx: f64,
    /// `s`
    pub score: Vec<f64>,
    /// `∂(s²)` with stencil width `2dx`
    pub d_score_sq: Vec<f64>,
    /// `∂²s` with stencil width `2dx`
    pub dd_score: Vec<f64>,
}

impl BinnedScore {
    /// KDE score on a grid of spacing `stencil/2` covering the particles
    /// with `KERNEL_CUTOFF·b + 3·stencil` of padding.
    pub fn new(positions: &[f64], bandwidth: f64, stencil: f64, with_derivatives: bool) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        if !(stencil > 0.0 && stencil.is_finite()) {
            return Err(ParticleError::BadParameter { name: "stencil", value: stencil });
        }
        let dx = 0.5 * stencil;
        let (lo, hi) = positions.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let pad = KERNEL_CUTOFF * bandwidth + 3.0 * stencil;
        let origin = lo - pad;
        let n = ((hi + pad - origin) / dx).ceil() as usize + 1;
        if n > MAX_SCORE_NODES {
            return Err(ParticleError::SpreadTooWide { spread: hi - lo, bandwidth });
        }

        let mut counts = vec![0.0; n];
        for &x in positions {
            let s = (x - origin) / dx;
            let i = s.floor() as usize;
            let t = s - i as f64;
            counts[i] += 1.0 - t;
            counts[i + 1] += t;
        }

        let taps = (KERNEL_CUTOFF * bandwidth / dx).ceil() as usize;
        let inv_b2 = 1.0 / (bandwidth * bandwidth);
        let k0: Vec<f64> = (0..=taps).map(|k| (-0.5 * (k as f64 * dx).powi(2) * inv_b2).exp()).collect();
        let k1: Vec<f64> = (0..=taps).map(|k| -(k as f64 * dx) * inv_b2 * k0[k]).collect();

        let mut score = vec![0.0; n];
        for (j, s) in score.iter_mut().enumerate() {
            let (mut dens, mut ddens) = (counts[j] * k0[0], 0.0);
            for k in 1..=taps.min(j).max(taps.min(n - 1 - j)) {
                let left = if k <= j { counts[j - k] } else { 0.0 };
                let right = if j + k < n { counts[j + k] } else { 0.0 };
                dens += (left + right) * k0[k];
                // K′(x_j − x_{j∓k}) = K′(±k dx)
                ddens += (left - right) * k1[k];
            }
            *s = ddens / dens.max(SCORE_FLOOR);
        }

        let (mut d_score_sq, mut dd_score) = (Vec::new(), Vec::new());
        if with_derivatives {
            d_score_sq = vec![0.0; n];
            dd_score = vec![0.0; n];
            for j in 2..n - 2 {
                d_score_sq[j] = (score[j + 2].powi(2) - score[j - 2].powi(2)) / (2.0 * stencil);
                dd_score[j] = (score[j + 2] - 2.0 * score[j] + score[j - 2]) / (stencil * stencil);
            }
        }
        Ok(Self { origin, dx, score, d_score_sq, dd_score })
    }

    /// Catmull–Rom interpolation of `field` at `x`.
    pub fn interpolate(&self, field: &[f64], x: f64) -> f64 {
        self.stencil(x).apply(field)
    }

    /// Catmull–Rom weights at `x`, reusable across the fields.
    pub fn stencil(&self, x: f64) -> Stencil {
        let s = (x - self.origin) / self.dx;
        let start = (s.floor() as usize).clamp(1, self.score.len() - 3) - 1;
        let t = s - (start + 1) as f64;
        let (t2, t3) = (t * t, t * t * t);
        let w = [
            0.5 * (-t + 2.0 * t2 - t3),
            0.5 * (2.0 - 5.0 * t2 + 3.0 * t3),
            0.5 * (t + 4.0 * t2 - 3.0 * t3),
            0.5 * (-t2 + t3),
        ];
        Stencil { start, w }
    }
}

/// Four-point interpolation weights starting at node `start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    start: usize,
    w: [f64; 4],
}

impl Stencil {
    pub fn apply(&self, field: &[f64]) -> f64 {
        let f = &field[self.start..self.start + 4];
        self.w[0] * f[0] + self.w[1] * f[1] + self.w[2] * f[2] + self.w[3] * f[3]
    }
}

/// Parameters of one explicit particle step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    /// Inverse temperature; `f64::INFINITY` gives pure potential descent.
    pub beta: f64,
    pub eta: f64,
    pub h: f64,
    pub bandwidth: f64,
    pub stencil_fraction: f64,
}

impl StepParams {
    fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(ParticleError::BadParameter { name: "beta", value: self.beta });
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(ParticleError::BadParameter { name: "eta", value: self.eta });
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(ParticleError::BadParameter { name: "h", value: self.h });
        }
        if !(self.stencil_fraction > 0.0 && self.stencil_fraction.is_finite()) {
            return Err(ParticleError::BadParameter { name: "stencil_fraction", value: self.stencil_fraction });
        }
        check_bandwidth(self.bandwidth)
    }
}

/// One forward-Euler step `xᵢ ← xᵢ + h v^η(xᵢ)`.
pub fn particle_step(ens: &ParticleEnsemble, potential: &dyn PotentialChain, p: &StepParams) -> Result<ParticleEnsemble> {
    p.validate()?;
    let inv_beta = 1.0 / p.beta;
    let eta = p.eta;
    let score = if inv_beta > 0.0 {
        Some(BinnedScore::new(&ens.positions, p.bandwidth, p.stencil_fraction * p.bandwidth, eta > 0.0)?)
    } else {
        None
    };
    let velocity = |x: f64| {
        let (e1, mut v) = (potential.d1(x), 0.0);
        v -= e1;
        if eta > 0.0 {
            v += 0.5 * eta * e1 * potential.d2(x) - 0.5 * eta * inv_beta * potential.d3(x);
        }
        if let Some(sc) = &score {
            let st = sc.stencil(x);
            v -= inv_beta * st.apply(&sc.score);
            if eta > 0.0 {
                let ib2 = inv_beta * inv_beta;
                v -= 0.25 * eta * ib2 * st.apply(&sc.d_score_sq);
                v -= 0.5 * eta * ib2 * st.apply(&sc.dd_score);
            }
        }
        x + p.h * v
    };
    let next: Vec<f64> = if ens.len() >= PARALLEL_THRESHOLD {
        ens.positions.par_iter().map(|&x| velocity(x)).collect()
    } else {
        ens.positions.iter().map(|&x| velocity(x)).collect()
    };
    if let Some(index) = next.iter().position(|x| !x.is_finite()) {
        return Err(ParticleError::NonFinite { index, value: next[index] });
    }
    Ok(ParticleEnsemble { positions: next })
}

/// KL of the ensemble's KDE to `π ∝ exp(log_pi_unnormalized)`, both
/// normalized on `bins` nodes of `domain`.
pub fn ensemble_kl(
    ens: &ParticleEnsemble,
    log_pi_unnormalized: impl Fn(f64) -> f64,
    domain: (f64, f64),
    bins: usize,
    bandwidth: f64,
) -> Result<f64> {
    if bins < 64 {
        return Err(ParticleError::TooFewBins(bins));
    }
    check_bandwidth(bandwidth)?;
    let grid = UniformGrid::new(domain.0, domain.1, bins)?;
    let dx = grid.dx();
    let inv_b2 = 1.0 / (bandwidth * bandwidth);
    let reach = ((KERNEL_CUTOFF + 2.0) * bandwidth / dx).ceil() as isize;
    let mut dens = vec![0.0; bins];
    for &x in ens.positions() {
        let c = ((x - grid.x_min()) / dx).round() as isize;
        let lo = (c - reach).max(0);
        let hi = (c + reach).min(bins as isize - 1);
        for j in lo..=hi {
            let d = grid.x(j as usize) - x;
            dens[j as usize] += (-0.5 * d * d * inv_b2).exp();
        }
    }
    let rho = GridDensity1D::normalized(grid, dens)?;

    let raw = grid.sample(&log_pi_unnormalized);
    let shift = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: Vec<f64> = raw.iter().map(|r| (r - shift).exp()).collect();
    let log_z = grid.trapz(&z).ln() + shift;
    let log_pi: Vec<f64> = raw.iter().map(|r| r - log_z).collect();
    Ok(kl_to_target(&rho, &log_pi)?)
}

/// Settings for a full particle run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_particles: usize,
    pub steps: usize,
    pub h: f64,
    pub eta: f64,
    pub beta: f64,
    pub stencil_fraction: f64,
    pub bandwidth_refresh: usize,
    /// Record the KL every this many steps (and at the end); 0 records only
    /// the final value.
    pub record_every: usize,
    pub kl_domain: (f64, f64),
    pub kl_bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_particles: 4000,
            steps: 2000,
            h: 2e-3,
            eta: 0.0,
            beta: 1.0,
            stencil_fraction: DEFAULT_STENCIL_FRACTION,
            bandwidth_refresh: DEFAULT_BANDWIDTH_REFRESH,
            record_every: 0,
            kl_domain: (-5.0, 5.0),
            kl_bins: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRun {
    /// `(step, kl)` pairs.
    pub kl_trajectory: Vec<(usize, f64)>,
    pub final_ensemble: ParticleEnsemble,
}

impl ParticleRun {
    pub fn final_kl(&self) -> f64 {
        self.kl_trajectory.last().map_or(f64::NAN, |p| p.1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,kl\n");
        for (s, kl) in &self.kl_trajectory {
            out.push_str(&format!("{s},{kl:.5e}\n"));
        }
        out
    }
}

/// Runs the flow from `ens` against `π ∝ exp(−βE)`, refreshing the
/// Silverman bandwidth every `bandwidth_refresh` steps.
pub fn run_particle_flow(ens: ParticleEnsemble, potential: &dyn PotentialChain, cfg: &RunConfig) -> Result<ParticleRun> {
    if cfg.bandwidth_refresh == 0 {
        return Err(ParticleError::BadParameter { name: "bandwidth_refresh", value: 0.0 });
    }
    let beta = cfg.beta;
    let kl = |e: &ParticleEnsemble| {
        ensemble_kl(e, |x| -beta * potential.value(x), cfg.kl_domain, cfg.kl_bins, e.silverman_bandwidth())
    };
    let mut traj = Vec::new();
    let record = |step: usize| cfg.record_every > 0 && step % cfg.record_every == 0;
    if record(0) {
        traj.push((0, kl(&ens)?));
    }
    let mut params = StepParams {
        beta,
        eta: cfg.eta,
        h: cfg.h,
        bandwidth: ens.silverman_bandwidth(),
        stencil_fraction: cfg.stencil_fraction,
    };
    let mut cur = ens;
    for step in 1..=cfg.steps {
        if (step - 1) % cfg.bandwidth_refresh == 0 {
            params.bandwidth = cur.silverman_bandwidth();
        }
        cur = particle_step(&cur, potential, &params)?;
        if record(step) || step == cfg.steps {
            traj.push((step, kl(&cur)?));
        }
    }
    if cfg.steps == 0 && traj.is_empty() {
        traj.push((0, kl(&cur)?));
    }
    Ok(ParticleRun { kl_trajectory: traj, final_ensemble: cur })
}

/// One `(η, seed)` cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub eta: f64,
    pub seed_index: u64,
    pub final_kl: f64,
}

/// Aggregate over seeds at one `η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub eta: f64,
    pub mean_kl: f64,
    pub std_kl: f64,
    pub median_kl: f64,
    pub n_seeds: usize,
}

pub const SWEEP_HEADER: &str = "eta,mean_kl,std_kl,n_seeds";

impl SweepRow {
    pub fn to_csv_line(&self) -> String {
        format!("{:.5e},{:.5e},{:.5e},{}", self.eta, self.mean_kl, self.std_kl, self.n_seeds)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Sorted by `η` descending, then seed ascending.
    pub cells: Vec<SweepCell>,
    /// Sorted by `η` descending.
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn summary_csv(&self) -> String {
        let mut out = format!("{SWEEP_HEADER}\n");
        for r in &self.rows {
            out.push_str(&r.to_csv_line());
            out.push('\n');
        }
        out
    }

    pub fn cells_csv(&self) -> String {
        let mut out = String::from("eta,seed,final_kl\n");
        for c in &self.cells {
            out.push_str(&format!("{:.5e},{},{:.5e}\n", c.eta, c.seed_index, c.final_kl));
        }
        out
    }

    pub fn row(&self, eta: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.eta == eta)
    }
}

/// Runs every `(η, seed)` pair in parallel. Seed `k` draws its initial
/// standard-normal ensemble from `SeededRng::derive(base_seed, k)`, so all
/// `η` values share the same starting points.
pub fn eta_sweep(
    base_seed: u64,
    n_seeds: u64,
    etas: &[f64],
    potential: &dyn PotentialChain,
    cfg: &RunConfig,
) -> Result<SweepResult> {
    let jobs: Vec<(f64, u64)> = etas.iter().flat_map(|&e| (0..n_seeds).map(move |s| (e, s))).collect();
    let mut cells = jobs
        .par_iter()
        .map(|&(eta, seed_index)| {
            let mut rng = SeededRng::derive(base_seed, seed_index);
            let ens = ParticleEnsemble::standard_normal(cfg.n_particles, &mut rng)?;
            let run_cfg = RunConfig { eta, record_every: 0, ..cfg.clone() };
            let run = run_particle_flow(ens, potential, &run_cfg)?;
            Ok(SweepCell { eta, seed_index, final_kl: run.final_kl() })
        })
        .collect::<Result<Vec<_>>>()?;
    cells.sort_by(|a, b| b.eta.total_cmp(&a.eta).then(a.seed_index.cmp(&b.seed_index)));

    let mut unique: Vec<f64> = etas.to_vec();
    unique.sort_by(|a, b| b.total_cmp(a));
    unique.dedup();
    let rows = unique
        .iter()
        .map(|&eta| {
            let mut kls: Vec<f64> = cells.iter().filter(|c| c.eta == eta).map(|c| c.final_kl).collect();
            let n = kls.len();
            let mean = kls.iter().sum::<f64>() / n as f64;
            let var = if n > 1 { kls.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
            kls.sort_by(f64::total_cmp);
            let median = if n % 2 == 1 { kls[n / 2] } else { 0.5 * (kls[n / 2 - 1] + kls[n / 2]) };
            SweepRow { eta, mean_kl: mean, std_kl: var.sqrt(), median_kl: median, n_seeds: n }
        })
        .collect();
    Ok(SweepResult { cells, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_ensemble(n: usize, seed: u64) -> ParticleEnsemble {
        ParticleEnsemble::standard_normal(n, &mut SeededRng::new(seed)).unwrap()
    }

    #[test]
    fn ensemble_validation() {
        assert!(matches!(ParticleEnsemble::new(vec![0.0; 15]), Err(ParticleError::TooFewParticles(15))));
        let mut v = vec![0.0; 16];
        v[4] = f64::NAN;
        assert!(matches!(ParticleEnsemble::new(v), Err(ParticleError::NonFinite { index: 4, .. })));
    }

    #[test]
    fn polynomial_derivatives() {
        let q = Polynomial::quartic();
        let x = 1.3;
        assert!((q.value(x) - (0.5 * x * x + 0.25 * x.powi(4))).abs() < 1e-14);
        assert!((q.d1(x) - (x + x.powi(3))).abs() < 1e-14);
        assert!((q.d2(x) - (1.0 + 3.0 * x * x)).abs() < 1e-14);
        assert!((q.d3(x) - 6.0 * x).abs() < 1e-14);
    }

    #[test]
    fn kde_score_symmetry_cases() {
        assert_eq!(kde_score(&[0.0], 0.5, &[0.0]).unwrap(), vec![0.0]);
        assert!(kde_score(&[-0.7, 0.7], 0.3, &[0.0]).unwrap()[0].abs() < 1e-15);
        assert!(kde_score(&[0.0], 0.0, &[0.0]).is_err());
        // far from every particle the score is still the nearest kernel's
        let far = kde_score(&[0.0], 1.0, &[100.0]).unwrap()[0];
        assert!((far + 100.0).abs() < 1e-9);
    }

    #[test]
    fn kde_score_of_large_gaussian_sample() {
        let ens = normal_ensemble(100_000, 11);
        let b = 0.3;
        let s = kde_score(ens.positions(), b, &[1.0]).unwrap()[0];
        assert!((s + 1.0 / (1.0 + b * b)).abs() < 0.05, "{s}");
    }

    #[test]
    fn binned_score_tracks_exact_score() {
        let ens = normal_ensemble(4000, 3);
        let b = ens.silverman_bandwidth();
        let binned = BinnedScore::new(ens.positions(), b, 0.25 * b, false).unwrap();
        let queries: Vec<f64> = (0..41).map(|i| -2.0 + 0.1 * i as f64).collect();
        let exact = kde_score(ens.positions(), b, &queries).unwrap();
        for (q, e) in queries.iter().zip(&exact) {
            let approx = binned.interpolate(&binned.score, *q);
            assert!((approx - e).abs() < 2e-2 * (1.0 + e.abs()), "q={q} {approx} {e}");
        }
    }

    #[test]
    fn pure_gradient_descent_step() {
        let ens = ParticleEnsemble::new(vec![1.0; 16]).unwrap();
        let p = StepParams { beta: f64::INFINITY, eta: 0.0, h: 0.1, bandwidth: 0.1, stencil_fraction: 0.25 };
        let next = particle_step(&ens, &Polynomial::harmonic(), &p).unwrap();
        assert!(next.positions().iter().all(|&x| (x - 0.9).abs() < 1e-15));
    }

    #[test]
    fn kl_of_target_samples_is_small() {
        let ens = normal_ensemble(100_000, 5);
        let kl = ensemble_kl(&ens, |x| -0.5 * x * x, (-6.0, 6.0), 512, 0.1).unwrap();
        assert!((0.0..=0.02).contains(&kl), "{kl}");
        let point = ParticleEnsemble::new(vec![0.0; 64]).unwrap();
        let big = ensemble_kl(&point, |x| -0.5 * x * x, (-6.0, 6.0), 512, 0.1).unwrap();
        assert!(big.is_finite() && big > 1.0);
        assert!(matches!(ensemble_kl(&point, |x| x, (-1.0, 1.0), 63, 0.1), Err(ParticleError::TooFewBins(63))));
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = RunConfig { n_particles: 500, steps: 60, record_every: 20, eta: 1e-3, ..RunConfig::default() };
        let run = |seed| {
            let ens = ParticleEnsemble::standard_normal(cfg.n_particles, &mut SeededRng::new(seed)).unwrap();
            run_particle_flow(ens, &Polynomial::quartic(), &cfg).unwrap()
        };
        let (a, b) = (run(9), run(9));
        assert_eq!(a, b);
        assert_eq!(a.kl_trajectory.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 20, 40, 60]);
    }

    #[test]
    fn sweep_orders_rows() {
        let cfg = RunConfig { n_particles: 200, steps: 10, ..RunConfig::default() };
        let res = eta_sweep(1, 3, &[0.0, 1e-3], &Polynomial::quartic(), &cfg).unwrap();
        assert_eq!(res.rows.len(), 2);
        assert_eq!(res.rows[0].eta, 1e-3);
        assert_eq!(res.cells.iter().map(|c| c.seed_index).collect::<Vec<_>>(), vec![0, 1, 2, 0, 1, 2]);
        assert!(res.summary_csv().starts_with("eta,mean_kl,std_kl,n_seeds\n1.00000e-3,"));
    }
}
