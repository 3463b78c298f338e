//! Energy functionals on 1D grid densities and their JKO implicit bias.
//!
//! Every functional exposes its value `J(ρ)`, first variation `δJ/δρ`, the
//! Wasserstein gradient `∂ₓ δJ/δρ`, the squared metric slope
//! `|∂J|² = ∫ |∂ₓ δJ/δρ|² ρ`, and the implicit bias `(η/4)|∂J|²` that the
//! JKO step subtracts from `J`.
//!
//! Derivatives are second-order finite differences (see
//! [`grid1d::stencil`](crate::grid1d::stencil)). Nodes where `ρ` is at or
//! below [`DENSITY_FLOOR`] are left out of every quadrature involving
//! `log ρ`.

use std::sync::Arc;

use thiserror::Error;

use crate::grid1d::stencil::{derivative, second_derivative, third_derivative};
use crate::grid1d::{GridDensity1D, GridError, UniformGrid, DENSITY_FLOOR};

/// Largest grid on which the interaction energy's direct double sum runs.
pub const MAX_INTERACTION_NODES: usize = 8192;

/// Nodes at each end where the Langevin correction is set to zero.
pub const CORRECTION_BOUNDARY_NODES: usize = 2;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error(transparent)]
    Grid(#[from] GridError),

    #[error("interaction kernel is not even: K({x}) − K(−{x}) = {gap:e}")]
    KernelNotEven { x: f64, gap: f64 },

    #[error("field value at node {index} is not finite")]
    NonFiniteField { index: usize },

    #[error("inverse temperature must be positive, got {0}")]
    BadBeta(f64),

    #[error("step size must be nonnegative and finite, got {0}")]
    BadEta(f64),

    #[error("porous-medium exponent must exceed 1, got {0}")]
    BadExponent(f64),

    #[error("interaction energy is limited to {MAX_INTERACTION_NODES} nodes, grid has {0}")]
    GridTooLarge(usize),
}

pub type Result<T> = std::result::Result<T, EnergyError>;

#[derive(Clone)]
pub enum EnergyFunctional {
    /// `∫ E ρ` with `E` sampled on the grid.
    Potential { potential: Vec<f64> },
    /// `∫ ρ log ρ`.
    Entropy,
    /// `∫ ρ (log ρ − log π)`; `log π` sampled on the grid.
    Kl { log_target: Vec<f64> },
    /// `½ ∬ K(x − y) ρ(x) ρ(y)` with an even kernel.
    Interaction { kernel: ScalarFn },
    /// `∫ U(ρ)` with `U′` given analytically.
    Internal { energy: ScalarFn, derivative: ScalarFn },
    /// `∫ E ρ + β⁻¹ ∫ ρ log ρ`.
    FreeEnergy { potential: Vec<f64>, beta: f64 },
}

impl std::fmt::Debug for EnergyFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Potential { .. } => f.write_str("Potential"),
            Self::Entropy => f.write_str("Entropy"),
            Self::Kl { .. } => f.write_str("Kl"),
            Self::Interaction { .. } => f.write_str("Interaction"),
            Self::Internal { .. } => f.write_str("Internal"),
            Self::FreeEnergy { beta, .. } => write!(f, "FreeEnergy(beta={beta})"),
        }
    }
}

/// `δJ/δρ` at the nodes and its centered-difference derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstVariationField {
    pub values: Vec<f64>,
    pub gradient: Vec<f64>,
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(EnergyError::NonFiniteField { index }),
        None => Ok(()),
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && !beta.is_nan() {
        Ok(())
    } else {
        Err(EnergyError::BadBeta(beta))
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta >= 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(EnergyError::BadEta(eta))
    }
}

/// `log max(ρ, floor)` at every node.
fn log_density(rho: &GridDensity1D) -> Vec<f64> {
    rho.values().iter().map(|&r| r.max(DENSITY_FLOOR).ln()).collect()
}

/// `∫ f ρ` over nodes where `ρ` exceeds the floor.
fn weighted_quadrature(rho: &GridDensity1D, f: impl Fn(usize) -> f64) -> f64 {
    let grid = rho.grid();
    rho.values()
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > DENSITY_FLOOR)
        .map(|(i, &r)| grid.weight(i) * f(i) * r)
        .sum()
}

fn entropy_of(rho: &GridDensity1D) -> f64 {
    weighted_quadrature(rho, |i| rho.values()[i].ln())
}

impl EnergyFunctional {
    pub fn potential(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self::Potential { potential: values })
    }

    pub fn potential_on(grid: &UniformGrid, e: impl Fn(f64) -> f64) -> Result<Self> {
        Self::potential(grid.sample(e))
    }

    pub fn entropy() -> Self {
        Self::Entropy
    }

    pub fn kl(log_target: Vec<f64>) -> Result<Self> {
        check_finite(&log_target)?;
        Ok(Self::Kl { log_target })
    }

    /// KL to `π ∝ exp(−E)`, with `π` normalized on `grid`.
    pub fn kl_to_gibbs(grid: &UniformGrid, e: impl Fn(f64) -> f64) -> Result<Self> {
        Self::kl(normalized_log_gibbs(grid, e, 1.0)?)
    }

    /// Checks evenness on 2001 points of `[-10, 10]`.
    pub fn interaction(kernel: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        for k in 0..=1000 {
            let x = 0.01 * k as f64;
            let gap = kernel(x) - kernel(-x);
            if !(gap.abs() <= 1e-12) {
                return Err(EnergyError::KernelNotEven { x, gap });
            }
        }
        Ok(Self::Interaction { kernel: Arc::new(kernel) })
    }

    pub fn internal(
        energy: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::Internal { energy: Arc::new(energy), derivative: Arc::new(derivative) }
    }

    /// `U(ρ) = ρᵐ/(m − 1)`, `U′(ρ) = m ρᵐ⁻¹/(m − 1)`.
    pub fn porous_medium(m: f64) -> Result<Self> {
        if !(m > 1.0 && m.is_finite()) {
            return Err(EnergyError::BadExponent(m));
        }
        Ok(Self::internal(move |r| r.powf(m) / (m - 1.0), move |r| m / (m - 1.0) * r.powf(m - 1.0)))
    }

    pub fn free_energy(potential: Vec<f64>, beta: f64) -> Result<Self> {
        check_finite(&potential)?;
        check_beta(beta)?;
        Ok(Self::FreeEnergy { potential, beta })
    }

    fn field_len_check(&self, rho: &GridDensity1D) -> Result<()> {
        let field = match self {
            Self::Potential { potential } | Self::FreeEnergy { potential, .. } => potential,
            Self::Kl { log_target } => log_target,
            _ => return Ok(()),
        };
        rho.grid().check_len(field)?;
        Ok(())
    }

    /// `K(k·dx)` for `k = −(n−1)..=(n−1)`, indexed by `k + n − 1`.
    fn kernel_table(kernel: &ScalarFn, grid: &UniformGrid) -> Result<Vec<f64>> {
        let n = grid.n();
        if n > MAX_INTERACTION_NODES {
            return Err(EnergyError::GridTooLarge(n));
        }
        let dx = grid.dx();
        Ok((0..2 * n - 1).map(|k| kernel((k as f64 - (n - 1) as f64) * dx)).collect())
    }

    fn convolve(table: &[f64], rho: &GridDensity1D) -> Vec<f64> {
        let n = rho.n();
        let grid = rho.grid();
        let wr: Vec<f64> = (0..n).map(|j| grid.weight(j) * rho.values()[j]).collect();
        (0..n).map(|i| (0..n).map(|j| table[i + n - 1 - j] * wr[j]).sum()).collect()
    }

    pub fn evaluate(&self, rho: &GridDensity1D) -> Result<f64> {
        self.field_len_check(rho)?;
        let grid = rho.grid();
        Ok(match self {
            Self::Potential { potential } => rho.expect_field(potential),
            Self::Entropy => entropy_of(rho),
            Self::Kl { log_target } => weighted_quadrature(rho, |i| rho.values()[i].ln() - log_target[i]),
            Self::Interaction { kernel } => {
                let table = Self::kernel_table(kernel, grid)?;
                let conv = Self::convolve(&table, rho);
                0.5 * rho.expect_field(&conv)
            }
            Self::Internal { energy, .. } => {
                let u: Vec<f64> = rho.values().iter().map(|&r| energy(r)).collect();
                grid.trapz(&u)
            }
            Self::FreeEnergy { potential, beta } => rho.expect_field(potential) + entropy_of(rho) / beta,
        })
    }

    pub fn first_variation(&self, rho: &GridDensity1D) -> Result<FirstVariationField> {
        self.field_len_check(rho)?;
        let values: Vec<f64> = match self {
            Self::Potential { potential } => potential.clone(),
            Self::Entropy => log_density(rho).into_iter().map(|l| l + 1.0).collect(),
            Self::Kl { log_target } => {
                log_density(rho).into_iter().zip(log_target).map(|(l, lp)| l - lp + 1.0).collect()
            }
            Self::Interaction { kernel } => {
                let table = Self::kernel_table(kernel, rho.grid())?;
                Self::convolve(&table, rho)
            }
            Self::Internal { derivative, .. } => rho.values().iter().map(|&r| derivative(r)).collect(),
            Self::FreeEnergy { potential, beta } => {
                log_density(rho).into_iter().zip(potential).map(|(l, e)| e + l / beta).collect()
            }
        };
        let gradient = derivative(&values, rho.dx());
        Ok(FirstVariationField { values, gradient })
    }

    /// `∫ |∂ₓ δJ/δρ|² ρ`.
    pub fn metric_slope_sq(&self, rho: &GridDensity1D) -> Result<f64> {
        let fv = self.first_variation(rho)?;
        Ok(weighted_quadrature(rho, |i| fv.gradient[i] * fv.gradient[i]))
    }

    /// `(η/4)|∂J|²`, the amount the JKO step's modified energy lies below `J`.
    pub fn implicit_bias(&self, rho: &GridDensity1D, eta: f64) -> Result<f64> {
        check_eta(eta)?;
        Ok(0.25 * eta * self.metric_slope_sq(rho)?)
    }

    /// `J^η = J − (η/4)|∂J|²`.
    pub fn modified(&self, eta: f64) -> Result<ModifiedEnergy<'_>> {
        check_eta(eta)?;
        Ok(ModifiedEnergy { base: self, eta })
    }
}

/// Evaluator for `J^η = J − (η/4)|∂J|²`.
#[derive(Debug, Clone, Copy)]
pub struct ModifiedEnergy<'a> {
    base: &'a EnergyFunctional,
    eta: f64,
}

impl ModifiedEnergy<'_> {
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn evaluate(&self, rho: &GridDensity1D) -> Result<f64> {
        let j = self.base.evaluate(rho)?;
        if self.eta == 0.0 {
            return Ok(j);
        }
        Ok(j - self.base.implicit_bias(rho, self.eta)?)
    }
}

/// `log π` for `π ∝ exp(−β E)` normalized on `grid`.
pub fn normalized_log_gibbs(grid: &UniformGrid, e: impl Fn(f64) -> f64, beta: f64) -> Result<Vec<f64>> {
    check_beta(beta)?;
    let raw: Vec<f64> = grid.sample(|x| -beta * e(x));
    let shift = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = raw.iter().map(|r| (r - shift).exp()).collect();
    let log_z = grid.trapz(&unnorm).ln() + shift;
    let out: Vec<f64> = raw.into_iter().map(|r| r - log_z).collect();
    check_finite(&out)?;
    Ok(out)
}

/// `∫ |∂ₓ log ρ − ∂ₓ log π|² ρ`, the Fisher divergence.
pub fn fisher_divergence(rho: &GridDensity1D, log_target: &[f64]) -> Result<f64> {
    rho.grid().check_len(log_target)?;
    let gl = derivative(&log_density(rho), rho.dx());
    let gp = derivative(log_target, rho.dx());
    Ok(weighted_quadrature(rho, |i| (gl[i] - gp[i]).powi(2)))
}

/// `I[ρ] = ∫ |∂ₓ log ρ|² ρ`.
pub fn fisher_information(rho: &GridDensity1D) -> f64 {
    let gl = derivative(&log_density(rho), rho.dx());
    weighted_quadrature(rho, |i| gl[i] * gl[i])
}

/// The three pieces of the free-energy metric slope:
/// `|∂F|² = dirichlet + 2β⁻¹ cross + β⁻² fisher`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeTerms {
    /// `∫ |∂ₓE|² ρ`
    pub dirichlet: f64,
    /// `∫ ∂ₓE ∂ₓ log ρ ρ`
    pub cross: f64,
    /// `∫ |∂ₓ log ρ|² ρ`
    pub fisher: f64,
}

impl SlopeTerms {
    pub fn total(&self, beta: f64) -> f64 {
        self.dirichlet + 2.0 * self.cross / beta + self.fisher / (beta * beta)
    }
}

pub fn free_energy_slope_terms(rho: &GridDensity1D, potential: &[f64]) -> Result<SlopeTerms> {
    rho.grid().check_len(potential)?;
    let ge = derivative(potential, rho.dx());
    let gl = derivative(&log_density(rho), rho.dx());
    Ok(SlopeTerms {
        dirichlet: weighted_quadrature(rho, |i| ge[i] * ge[i]),
        cross: weighted_quadrature(rho, |i| ge[i] * gl[i]),
        fisher: weighted_quadrature(rho, |i| gl[i] * gl[i]),
    })
}

/// `(η m²/(2m − 1)²) ∫ |∂ₓ ρ^{(2m−1)/2}|²`, the porous-medium implicit bias
/// in Dirichlet form.
pub fn porous_dirichlet_form(rho: &GridDensity1D, m: f64, eta: f64) -> Result<f64> {
    if !(m > 1.0 && m.is_finite()) {
        return Err(EnergyError::BadExponent(m));
    }
    check_eta(eta)?;
    let p = 0.5 * (2.0 * m - 1.0);
    let pow: Vec<f64> = rho.values().iter().map(|r| r.powf(p)).collect();
    let g = derivative(&pow, rho.dx());
    let sq: Vec<f64> = g.iter().map(|v| v * v).collect();
    Ok(eta * m * m / ((2.0 * m - 1.0).powi(2)) * rho.grid().trapz(&sq))
}

fn require_positive_interior(rho: &GridDensity1D) -> Result<()> {
    let v = rho.values();
    for (index, &value) in v.iter().enumerate().take(v.len() - 1).skip(1) {
        if value <= DENSITY_FLOOR {
            return Err(GridError::FloorViolation { index, value }.into());
        }
    }
    Ok(())
}

/// `δI/δρ = −2 ∂ₓₓ log ρ − |∂ₓ log ρ|²`.
pub fn fisher_first_variation(rho: &GridDensity1D) -> Result<Vec<f64>> {
    require_positive_interior(rho)?;
    let l = log_density(rho);
    let d1 = derivative(&l, rho.dx());
    let d2 = second_derivative(&l, rho.dx());
    Ok(d1.iter().zip(&d2).map(|(a, b)| -2.0 * b - a * a).collect())
}

/// The same first variation in the form `−4 ∂ₓₓ√ρ / √ρ`.
pub fn fisher_first_variation_sqrt_form(rho: &GridDensity1D) -> Result<Vec<f64>> {
    require_positive_interior(rho)?;
    let s: Vec<f64> = rho.values().iter().map(|r| r.sqrt()).collect();
    let d2 = second_derivative(&s, rho.dx());
    Ok(d2.iter().zip(&s).map(|(d, s)| if *s > 0.0 { -4.0 * d / s } else { 0.0 }).collect())
}

/// Velocity of the JKO-corrected Langevin flow,
/// `−(∂E + β⁻¹∂log ρ) + (η/4)(∂|∂E|² − β⁻²∂|∂log ρ|²) − (η/2β)∂³(E + β⁻¹ log ρ)`.
///
/// `beta = ∞` drops every term involving `ρ`. The correction vanishes on the
/// two outermost nodes at each end.
pub fn corrected_velocity_langevin(rho: &GridDensity1D, potential: &[f64], beta: f64, eta: f64) -> Result<Vec<f64>> {
    rho.grid().check_len(potential)?;
    check_beta(beta)?;
    check_eta(eta)?;
    let n = rho.n();
    let dx = rho.dx();
    let inv_beta = 1.0 / beta;
    let ge = derivative(potential, dx);
    let (gl, l) = if inv_beta > 0.0 {
        require_positive_interior(rho)?;
        let l = log_density(rho);
        (derivative(&l, dx), l)
    } else {
        (vec![0.0; n], vec![0.0; n])
    };
    let mut v: Vec<f64> = ge.iter().zip(&gl).map(|(e, g)| -(e + inv_beta * g)).collect();
    if eta > 0.0 {
        let ge_sq: Vec<f64> = ge.iter().map(|g| g * g).collect();
        let gl_sq: Vec<f64> = gl.iter().map(|g| g * g).collect();
        let d_ge_sq = derivative(&ge_sq, dx);
        let d_gl_sq = derivative(&gl_sq, dx);
        let free: Vec<f64> = potential.iter().zip(&l).map(|(e, l)| e + inv_beta * l).collect();
        let d3 = third_derivative(&free, dx);
        let b = CORRECTION_BOUNDARY_NODES;
        for i in b..n.saturating_sub(b) {
            v[i] += 0.25 * eta * (d_ge_sq[i] - inv_beta * inv_beta * d_gl_sq[i]) - 0.5 * eta * inv_beta * d3[i];
        }
    }
    Ok(v)
}

/// First variation of the modified free energy `F − (η/4)|∂F|²`:
/// `E + β⁻¹ log ρ − (η/4)(|∂E|² − 2β⁻¹∂²E + β⁻² δI/δρ)`.
///
/// Its negative compact difference gives the face velocity of the JKO flow.
pub fn jko_flow_first_variation(rho: &GridDensity1D, potential: &[f64], beta: f64, eta: f64) -> Result<Vec<f64>> {
    rho.grid().check_len(potential)?;
    check_beta(beta)?;
    check_eta(eta)?;
    require_positive_interior(rho)?;
    let dx = rho.dx();
    let inv_beta = 1.0 / beta;
    let l = log_density(rho);
    let mut xi: Vec<f64> = potential.iter().zip(&l).map(|(e, l)| e + inv_beta * l).collect();
    if eta > 0.0 {
        let ge = derivative(potential, dx);
        let he = second_derivative(potential, dx);
        let fi = fisher_first_variation(rho)?;
        for i in 0..xi.len() {
            xi[i] -= 0.25 * eta * (ge[i] * ge[i] - 2.0 * inv_beta * he[i] + inv_beta * inv_beta * fi[i]);
        }
    }
    Ok(xi)
}
