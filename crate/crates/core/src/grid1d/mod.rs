//! Densities on uniform 1D grids and the transport machinery built on them.
//!
//! Grids are node-based: `n` nodes at `x_min + i·dx` with
//! `dx = (x_max − x_min)/(n − 1)`, and integrals use the trapezoidal rule.

use std::fmt::Write as _;

use thiserror::Error;

pub mod solver;
pub mod stencil;
pub mod transport;

pub use solver::{
    kl_to_target, wgf_solve, wgf_solve_observed, FirstVariationVelocity, NodalVelocity, SolveStats, Trajectory,
    VelocityProvider, MAX_COURANT,
};
pub use transport::{
    detect_jump, is_monotone, pushforward, quartic_fold_location, quartic_maps, JumpHit, MonotoneCheck, Pushforward,
    TransportMap1D,
};

/// Minimum number of grid nodes.
pub const MIN_NODES: usize = 9;

/// Required accuracy of the trapezoidal mass of a density.
pub const MASS_TOL: f64 = 1e-8;

/// Values at or below this are treated as zero wherever a logarithm is taken.
pub const DENSITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("invalid grid [{x_min}, {x_max}] with {n} nodes (need x_max > x_min and n >= {MIN_NODES})")]
    BadGrid { x_min: f64, x_max: f64, n: usize },

    #[error("density value {value} at node {index} is negative or non-finite")]
    BadValue { index: usize, value: f64 },

    #[error("density has trapezoidal mass {mass}, expected 1 within {MASS_TOL:e}")]
    NotNormalized { mass: f64 },

    #[error("density has no mass to normalize")]
    ZeroMass,

    #[error("field has {got} values but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("density is at or below the floor at interior node {index} (value {value:e})")]
    FloorViolation { index: usize, value: f64 },

    #[error("CFL violation at step {step}: Courant number {courant:.3} > {max}; try n_steps >= {suggested_steps}")]
    Cfl { step: usize, courant: f64, max: f64, suggested_steps: usize },

    #[error("velocity provider returned a non-finite value at step {step}")]
    NonFiniteVelocity { step: usize },

    #[error("t_end must be positive and n_steps at least 1")]
    BadTime,

    #[error("at least {min} samples required, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error("map derivative {analytic} disagrees with centered difference {numeric} at x = {x}")]
    InconsistentDerivative { x: f64, analytic: f64, numeric: f64 },

    #[error("pushforward landed no mass on the output grid")]
    EmptyImage,

    #[error("CSV line {line}: {message}")]
    Csv { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, GridError>;

/// A uniform node grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl UniformGrid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) || n < MIN_NODES {
            return Err(GridError::BadGrid { x_min, x_max, n });
        }
        Ok(Self { x_min, x_max, n })
    }

    #[inline]
    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    #[inline]
    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n).map(|i| f(self.x(i))).collect()
    }

    /// Trapezoidal weight of node `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5 * self.dx()
        } else {
            self.dx()
        }
    }

    pub fn trapz(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n);
        let inner: f64 = values[1..self.n - 1].iter().sum();
        self.dx() * (inner + 0.5 * (values[0] + values[self.n - 1]))
    }

    pub fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.n {
            return Err(GridError::LengthMismatch { expected: self.n, got: values.len() });
        }
        Ok(())
    }
}

/// A nonnegative density with unit trapezoidal mass on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity1D {
    grid: UniformGrid,
    values: Vec<f64>,
}

impl GridDensity1D {
    /// Validates nonnegativity and unit mass (within [`MASS_TOL`]).
    pub fn new(x_min: f64, x_max: f64, values: Vec<f64>) -> Result<Self> {
        let grid = UniformGrid::new(x_min, x_max, values.len())?;
        Self::on_grid(grid, values)
    }

    pub fn on_grid(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(&values)?;
        check_values(&values)?;
        let mass = grid.trapz(&values);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(GridError::NotNormalized { mass });
        }
        Ok(Self { grid, values })
    }

    /// Rescales nonnegative values to unit mass.
    pub fn normalized(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(&values)?;
        check_values(&values)?;
        let mass = grid.trapz(&values);
        if mass <= 0.0 || !mass.is_finite() {
            return Err(GridError::ZeroMass);
        }
        Ok(Self { grid, values: values.into_iter().map(|v| v / mass).collect() })
    }

    /// Samples `f` (an unnormalized density) on the grid and normalizes.
    pub fn from_fn(x_min: f64, x_max: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let grid = UniformGrid::new(x_min, x_max, n)?;
        Self::normalized(grid, grid.sample(f))
    }

    /// Gaussian `N(mean, std²)` restricted to the grid.
    pub fn gaussian(x_min: f64, x_max: f64, n: usize, mean: f64, std: f64) -> Result<Self> {
        Self::from_fn(x_min, x_max, n, |x| (-0.5 * ((x - mean) / std).powi(2)).exp())
    }

    /// Builds a density from values already known to be valid (solver output).
    pub(crate) fn from_parts_unchecked(grid: UniformGrid, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn dx(&self) -> f64 {
        self.grid.dx()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.grid.x(i)
    }

    pub fn nodes(&self) -> Vec<f64> {
        self.grid.nodes()
    }

    pub fn mass(&self) -> f64 {
        self.grid.trapz(&self.values)
    }

    /// `∫ f(x) ρ(x) dx` for a field sampled on the same grid.
    pub fn expect_field(&self, field: &[f64]) -> f64 {
        let prod: Vec<f64> = field.iter().zip(&self.values).map(|(f, r)| f * r).collect();
        self.grid.trapz(&prod)
    }

    pub fn mean(&self) -> f64 {
        self.expect_field(&self.nodes())
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let sq: Vec<f64> = self.nodes().iter().map(|x| (x - m) * (x - m)).collect();
        self.expect_field(&sq)
    }

    /// Linear interpolation; zero outside the grid.
    pub fn interp(&self, x: f64) -> f64 {
        let g = &self.grid;
        if !(x >= g.x_min && x <= g.x_max) {
            return 0.0;
        }
        let s = (x - g.x_min) / g.dx();
        let i = (s.floor() as usize).min(g.n - 2);
        let t = s - i as f64;
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    /// `∫ |ρ − other|` where `other` is evaluated at this grid's nodes.
    pub fn l1_distance_to(&self, other: &GridDensity1D) -> f64 {
        let diff: Vec<f64> =
            (0..self.n()).map(|i| (self.values[i] - other.interp(self.x(i))).abs()).collect();
        self.grid.trapz(&diff)
    }

    /// `x,value` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{:.17e},{:.17e}", self.x(i), v);
        }
        out
    }

    /// Parses the [`to_csv`](Self::to_csv) format. Nodes must be uniformly
    /// spaced; the header line is optional.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if xs.is_empty() && vs.is_empty() && line.eq_ignore_ascii_case("x,value") {
                continue;
            }
            let csv_err = |message: String| GridError::Csv { line: lineno + 1, message };
            let mut fields = line.split(',');
            let (Some(xf), Some(vf), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(csv_err("expected exactly two comma-separated fields".into()));
            };
            let x: f64 = xf.trim().parse().map_err(|e| csv_err(format!("bad x: {e}")))?;
            let v: f64 = vf.trim().parse().map_err(|e| csv_err(format!("bad value: {e}")))?;
            if !x.is_finite() {
                return Err(csv_err("x is not finite".into()));
            }
            xs.push(x);
            vs.push(v);
        }
        if xs.len() < MIN_NODES {
            return Err(GridError::BadGrid {
                x_min: xs.first().copied().unwrap_or(f64::NAN),
                x_max: xs.last().copied().unwrap_or(f64::NAN),
                n: xs.len(),
            });
        }
        let grid = UniformGrid::new(xs[0], xs[xs.len() - 1], xs.len())?;
        let tol = 1e-6 * grid.dx();
        for (i, &x) in xs.iter().enumerate() {
            if (x - grid.x(i)).abs() > tol {
                return Err(GridError::Csv { line: i + 1, message: format!("node {x} is not on a uniform grid") });
            }
        }
        Self::on_grid(grid, vs)
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    for (index, &value) in values.iter().enumerate() {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(GridError::BadValue { index, value });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments() {
        let rho = GridDensity1D::gaussian(-8.0, 8.0, 2048, 0.5, 1.5).unwrap();
        assert!((rho.mass() - 1.0).abs() < 1e-14);
        assert!((rho.mean() - 0.5).abs() < 1e-5);
        assert!((rho.variance() - 2.25).abs() < 1e-4);
    }

    #[test]
    fn rejects_invalid_densities() {
        assert!(matches!(GridDensity1D::new(0.0, 1.0, vec![1.0; 5]), Err(GridError::BadGrid { .. })));
        assert!(matches!(GridDensity1D::new(1.0, 0.0, vec![1.0; 9]), Err(GridError::BadGrid { .. })));
        let mut v = vec![1.0; 9];
        v[3] = -0.1;
        assert!(matches!(GridDensity1D::new(0.0, 1.0, v), Err(GridError::BadValue { index: 3, .. })));
        assert!(matches!(GridDensity1D::new(0.0, 1.0, vec![2.0; 9]), Err(GridError::NotNormalized { .. })));
        assert!(matches!(
            GridDensity1D::normalized(UniformGrid::new(0.0, 1.0, 9).unwrap(), vec![0.0; 9]),
            Err(GridError::ZeroMass)
        ));
        // uniform density on [0,1] is exactly normalized
        assert!(GridDensity1D::new(0.0, 1.0, vec![1.0; 9]).is_ok());
    }

    #[test]
    fn interpolation_hits_nodes() {
        let rho = GridDensity1D::gaussian(-4.0, 4.0, 101, 0.0, 1.0).unwrap();
        for i in [0, 17, 50, 100] {
            assert!((rho.interp(rho.x(i)) - rho.values()[i]).abs() <= 1e-12 * rho.values()[i]);
        }
        assert_eq!(rho.interp(-4.5), 0.0);
        assert_eq!(rho.interp(f64::NAN), 0.0);
    }

    #[test]
    fn csv_roundtrip_and_errors() {
        let rho = GridDensity1D::gaussian(-3.0, 3.0, 33, 0.2, 0.8).unwrap();
        let back = GridDensity1D::from_csv(&rho.to_csv()).unwrap();
        assert_eq!(back.n(), rho.n());
        for (a, b) in back.values().iter().zip(rho.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(GridDensity1D::from_csv("x,value\n0,1\n"), Err(GridError::BadGrid { .. })));
        assert!(matches!(GridDensity1D::from_csv("0,1,2\n"), Err(GridError::Csv { line: 1, .. })));
        let skewed: String = (0..9).map(|i| format!("{},{}\n", (i as f64).powi(2), 0.1)).collect();
        assert!(matches!(GridDensity1D::from_csv(&skewed), Err(GridError::Csv { .. })));
    }
}
