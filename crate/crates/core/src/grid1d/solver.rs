//! Donor-cell finite-volume solver for `∂ₜρ = −∂ₓ(ρ v)` with no-flux
//! boundaries.
//!
//! Node `i` owns the control volume of its trapezoidal weight, so the
//! update conserves the trapezoidal mass exactly up to round-off.

use std::fmt::Write as _;

use super::{GridDensity1D, GridError, Result, DENSITY_FLOOR};

/// Largest admissible Courant number `max|v|·dt/dx`.
pub const MAX_COURANT: f64 = 0.5;

/// Supplies velocities on the `n − 1` cell faces for the current density.
pub trait VelocityProvider {
    fn face_velocities(&mut self, rho: &GridDensity1D) -> Result<Vec<f64>>;
}

/// Wraps a closure returning nodal velocities; faces take the average of
/// their two nodes.
pub struct NodalVelocity<F>(pub F);

impl<F> VelocityProvider for NodalVelocity<F>
where
    F: FnMut(&GridDensity1D) -> Result<Vec<f64>>,
{
    fn face_velocities(&mut self, rho: &GridDensity1D) -> Result<Vec<f64>> {
        let v = (self.0)(rho)?;
        rho.grid().check_len(&v)?;
        Ok(v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
    }
}

/// Wraps a closure returning the first variation `δJ/δρ` at the nodes; the
/// face velocity is its compact negative difference quotient.
pub struct FirstVariationVelocity<F>(pub F);

impl<F> VelocityProvider for FirstVariationVelocity<F>
where
    F: FnMut(&GridDensity1D) -> Result<Vec<f64>>,
{
    fn face_velocities(&mut self, rho: &GridDensity1D) -> Result<Vec<f64>> {
        let xi = (self.0)(rho)?;
        rho.grid().check_len(&xi)?;
        let dx = rho.dx();
        Ok(xi.windows(2).map(|w| -(w[1] - w[0]) / dx).collect())
    }
}

#[derive(Debug, Clone)]
pub struct SolveStats {
    pub last: GridDensity1D,
    pub steps: usize,
    pub dt: f64,
    /// Total mass removed by clipping negative values, before renormalizing.
    pub clipped_mass: f64,
    pub max_courant: f64,
}

impl SolveStats {
    /// Sidecar `key=value` metadata.
    pub fn metadata(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "steps={}", self.steps);
        let _ = writeln!(s, "dt={:.17e}", self.dt);
        let _ = writeln!(s, "clipped_mass={:.17e}", self.clipped_mass);
        let _ = writeln!(s, "max_courant={:.17e}", self.max_courant);
        let _ = writeln!(s, "cfl_margin={:.17e}", MAX_COURANT - self.max_courant);
        s
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<GridDensity1D>,
    pub stats: SolveStats,
}

/// Runs the solver, storing every `record_every`-th state (and the last).
pub fn wgf_solve(
    rho0: &GridDensity1D,
    provider: &mut dyn VelocityProvider,
    t_end: f64,
    n_steps: usize,
    record_every: usize,
) -> Result<Trajectory> {
    let every = record_every.max(1);
    let mut times = Vec::new();
    let mut snapshots = Vec::new();
    let stats = wgf_solve_observed(rho0, provider, t_end, n_steps, |k, t, rho| {
        if k % every == 0 || k == n_steps {
            times.push(t);
            snapshots.push(rho.clone());
        }
    })?;
    Ok(Trajectory { times, snapshots, stats })
}

/// Runs the solver, handing each state (the initial one included) to
/// `observer(step, time, density)`.
pub fn wgf_solve_observed(
    rho0: &GridDensity1D,
    provider: &mut dyn VelocityProvider,
    t_end: f64,
    n_steps: usize,
    mut observer: impl FnMut(usize, f64, &GridDensity1D),
) -> Result<SolveStats> {
    if !(t_end > 0.0 && t_end.is_finite()) || n_steps == 0 {
        return Err(GridError::BadTime);
    }
    let grid = *rho0.grid();
    let n = grid.n();
    let dx = grid.dx();
    let dt = t_end / n_steps as f64;
    let inv_w: Vec<f64> = (0..n).map(|i| 1.0 / grid.weight(i)).collect();

    let mut rho = rho0.clone();
    let mut flux = vec![0.0; n - 1];
    let mut clipped_mass = 0.0;
    let mut max_courant: f64 = 0.0;
    observer(0, 0.0, &rho);

    for step in 1..=n_steps {
        let v = provider.face_velocities(&rho)?;
        if v.len() != n - 1 {
            return Err(GridError::LengthMismatch { expected: n - 1, got: v.len() });
        }
        let vmax = v.iter().fold(0.0f64, |m, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY });
        if !vmax.is_finite() {
            return Err(GridError::NonFiniteVelocity { step });
        }
        let courant = vmax * dt / dx;
        if courant > MAX_COURANT {
            let suggested_steps = ((n_steps as f64) * courant / MAX_COURANT).ceil() as usize + 1;
            return Err(GridError::Cfl { step, courant, max: MAX_COURANT, suggested_steps });
        }
        max_courant = max_courant.max(courant);

        let vals = rho.values();
        for j in 0..n - 1 {
            let donor = if v[j] > 0.0 { vals[j] } else { vals[j + 1] };
            flux[j] = v[j] * donor;
        }
        let mut next = Vec::with_capacity(n);
        let mut clipped = 0.0;
        for i in 0..n {
            let left = if i == 0 { 0.0 } else { flux[i - 1] };
            let right = if i + 1 == n { 0.0 } else { flux[i] };
            let mut value = vals[i] - dt * inv_w[i] * (right - left);
            if value < 0.0 {
                clipped -= value * grid.weight(i);
                value = 0.0;
            }
            next.push(value);
        }
        if clipped > 0.0 {
            clipped_mass += clipped;
            let mass = grid.trapz(&next);
            next.iter_mut().for_each(|x| *x /= mass);
        }
        rho = GridDensity1D::from_parts_unchecked(grid, next);
        observer(step, step as f64 * dt, &rho);
    }
    Ok(SolveStats { last: rho, steps: n_steps, dt, clipped_mass, max_courant })
}

/// `∫ ρ (log ρ − log π)`; nodes with `ρ` at or below the floor contribute 0.
pub fn kl_to_target(rho: &GridDensity1D, log_pi: &[f64]) -> Result<f64> {
    rho.grid().check_len(log_pi)?;
    let integrand: Vec<f64> = rho
        .values()
        .iter()
        .zip(log_pi)
        .map(|(&r, &lp)| if r > DENSITY_FLOOR { r * (r.ln() - lp) } else { 0.0 })
        .collect();
    Ok(rho.grid().trapz(&integrand))
}
