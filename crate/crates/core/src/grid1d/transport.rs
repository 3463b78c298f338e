//! One-step transport maps, their pushforwards and the quartic regularity
//! example.
//!
//! For the standard Gaussian start and the quartic potential the explicit
//! step is `T_h(x) = x − h x³`, which folds at `±(3h)^{-1/2}`. The corrected
//! map `T_h^η(x) = x − h(x³ − 1.5η x⁵)` is monotone exactly when `η ≥ 0.3h`.

use std::sync::Arc;

use super::{GridDensity1D, GridError, Result, UniformGrid};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Cap on the Jacobian factor `1/|T′|` in the pushforward.
pub const JACOBIAN_CAP: f64 = 1e12;

/// Bisection tolerance for preimages.
pub const PREIMAGE_TOL: f64 = 1e-12;

/// Scan points per output node when locating preimages.
pub const SCAN_REFINEMENT: usize = 16;

/// Monotonicity verdict threshold on `min T′`.
pub const MONOTONE_TOL: f64 = -1e-12;

/// Default jump-detector settings.
pub const JUMP_RATIO: f64 = 5.0;
pub const JUMP_WINDOW: f64 = 0.2;

#[derive(Clone)]
pub struct TransportMap1D {
    map: ScalarFn,
    derivative: ScalarFn,
}

impl std::fmt::Debug for TransportMap1D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransportMap1D").finish_non_exhaustive()
    }
}

impl TransportMap1D {
    /// Checks `derivative` against centered differences of `map` on `[-2, 2]`.
    pub fn new(
        map: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let m = Self { map: Arc::new(map), derivative: Arc::new(derivative) };
        let step = 1e-5;
        for k in 0..=40 {
            let x = -2.0 + 0.1 * k as f64;
            let fd = (m.apply(x + step) - m.apply(x - step)) / (2.0 * step);
            let d = m.derivative(x);
            if !((fd - d).abs() <= 1e-6 * d.abs().max(1.0)) {
                return Err(GridError::InconsistentDerivative { x, analytic: d, numeric: fd });
            }
        }
        Ok(m)
    }

    pub fn identity() -> Self {
        Self { map: Arc::new(|x| x), derivative: Arc::new(|_| 1.0) }
    }

    pub fn affine(scale: f64, shift: f64) -> Self {
        Self { map: Arc::new(move |x| scale * x + shift), derivative: Arc::new(move |_| scale) }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (self.map)(x)
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }
}

/// `T_h` for `eta = 0`, `T_h^η` otherwise.
pub fn quartic_maps(h: f64, eta: f64) -> TransportMap1D {
    let c = 1.5 * eta;
    TransportMap1D {
        map: Arc::new(move |x: f64| {
            let x2 = x * x;
            x - h * x * x2 * (1.0 - c * x2)
        }),
        derivative: Arc::new(move |x: f64| {
            let x2 = x * x;
            1.0 - h * x2 * (3.0 - 5.0 * c * x2)
        }),
    }
}

/// Location `y = T(x)` where the quartic pushforward is predicted to jump
/// (for `eta < 0.3h`) or peak (otherwise), taking the fold with `x > 0`
/// closest to the origin.
pub fn quartic_fold_location(h: f64, eta: f64) -> f64 {
    let map = quartic_maps(h, eta);
    // T′(x) = 1 − 3h u + 7.5hη u² with u = x².
    let u = if eta == 0.0 {
        1.0 / (3.0 * h)
    } else {
        let a = 7.5 * h * eta;
        let b = -3.0 * h;
        let disc = b * b - 4.0 * a;
        if disc >= 0.0 {
            (-b - disc.sqrt()) / (2.0 * a)
        } else {
            // minimum of T′
            -b / (2.0 * a)
        }
    };
    map.apply(u.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneCheck {
    pub monotone: bool,
    pub min_derivative: f64,
    pub argmin: f64,
}

/// Minimizes `T′` over `[lo, hi]`: dense sampling followed by golden-section
/// refinement around the best sample.
pub fn is_monotone(map: &TransportMap1D, lo: f64, hi: f64, samples: usize) -> Result<MonotoneCheck> {
    if samples < 1000 {
        return Err(GridError::TooFewSamples { min: 1000, got: samples });
    }
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(GridError::BadGrid { x_min: lo, x_max: hi, n: samples });
    }
    let step = (hi - lo) / (samples - 1) as f64;
    let (mut best_i, mut best) = (0, f64::INFINITY);
    for i in 0..samples {
        let d = map.derivative(lo + i as f64 * step);
        if d < best {
            best = d;
            best_i = i;
        }
    }
    let a = lo + best_i.saturating_sub(1) as f64 * step;
    let b = (lo + (best_i + 1) as f64 * step).min(hi);
    let (argmin, refined) = golden_min(|x| map.derivative(x), a, b);
    let (argmin, min_derivative) =
        if refined < best { (argmin, refined) } else { (lo + best_i as f64 * step, best) };
    Ok(MonotoneCheck { monotone: min_derivative > MONOTONE_TOL, min_derivative, argmin })
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[derive(Debug, Clone)]
pub struct Pushforward {
    pub density: GridDensity1D,
    /// Trapezoidal mass before renormalization.
    pub raw_mass: f64,
}

/// A maximal stretch of scan points on which the map is monotone.
struct Run {
    start: usize,
    end: usize, // inclusive
    increasing: bool,
}

/// Density of `T#ρ₀` on `out`: preimages of every output node are found on
/// each monotone run of a fine scan of `ρ₀`'s domain, refined by bisection,
/// and contribute `ρ₀(x)/|T′(x)|`.
pub fn pushforward(rho0: &GridDensity1D, map: &TransportMap1D, out: UniformGrid) -> Result<Pushforward> {
    let g = rho0.grid();
    let m = (SCAN_REFINEMENT * out.n()).max(SCAN_REFINEMENT * g.n());
    let step = (g.x_max() - g.x_min()) / (m - 1) as f64;
    let xs: Vec<f64> = (0..m).map(|i| if i + 1 == m { g.x_max() } else { g.x_min() + i as f64 * step }).collect();
    let ts: Vec<f64> = xs.iter().map(|&x| map.apply(x)).collect();

    let mut runs = Vec::new();
    let mut start = 0;
    while start + 1 < m {
        let increasing = ts[start + 1] >= ts[start];
        let mut end = start + 1;
        while end + 1 < m && (ts[end + 1] >= ts[end]) == increasing {
            end += 1;
        }
        runs.push(Run { start, end, increasing });
        start = end;
    }

    let mut values = vec![0.0; out.n()];
    for (j, v) in values.iter_mut().enumerate() {
        let y = out.x(j);
        let mut total = 0.0;
        for run in &runs {
            let (lo_val, hi_val) = if run.increasing {
                (ts[run.start], ts[run.end])
            } else {
                (ts[run.end], ts[run.start])
            };
            if !(y >= lo_val && y <= hi_val) {
                continue;
            }
            // Bracket: last index k in the run with T(x_k) on the near side of y.
            let mut lo = run.start;
            let mut hi = run.end;
            let below = |t: f64| if run.increasing { t <= y } else { t >= y };
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if below(ts[mid]) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            // Skip the shared endpoint between consecutive runs so that a
            // preimage there is not counted twice.
            if lo == run.start && run.start != 0 && ts[lo] == y {
                continue;
            }
            let x = bisect_preimage(map, y, xs[lo], xs[hi], run.increasing);
            let jac = map.derivative(x).abs();
            let factor = if jac > 0.0 { (1.0 / jac).min(JACOBIAN_CAP) } else { JACOBIAN_CAP };
            total += rho0.interp(x) * factor;
        }
        *v = total;
    }
    let raw_mass = out.trapz(&values);
    if !(raw_mass > 0.0 && raw_mass.is_finite()) {
        return Err(GridError::EmptyImage);
    }
    let density = GridDensity1D::normalized(out, values)?;
    Ok(Pushforward { density, raw_mass })
}

fn bisect_preimage(map: &TransportMap1D, y: f64, mut a: f64, mut b: f64, increasing: bool) -> f64 {
    for _ in 0..200 {
        if b - a <= PREIMAGE_TOL {
            break;
        }
        let mid = 0.5 * (a + b);
        let t = map.apply(mid);
        if (t <= y) == increasing {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpHit {
    pub location: f64,
    pub ratio: f64,
}

/// Largest adjacent-node ratio within `center ± window`, reported as a hit
/// when it exceeds `ratio`.
pub fn detect_jump(rho: &GridDensity1D, center: f64, window: f64, ratio: f64) -> Option<JumpHit> {
    let vals = rho.values();
    let mut best: Option<JumpHit> = None;
    for i in 0..rho.n() - 1 {
        let (xa, xb) = (rho.x(i), rho.x(i + 1));
        if xa < center - window || xb > center + window {
            continue;
        }
        let (a, b) = (vals[i], vals[i + 1]);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if hi <= 0.0 {
            continue;
        }
        let r = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if best.map_or(true, |h| r > h.ratio) {
            best = Some(JumpHit { location: 0.5 * (xa + xb), ratio: r });
        }
    }
    best.filter(|h| h.ratio > ratio)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_critical_points() {
        let t = quartic_maps(1.0, 0.0);
        let xs = 1.0 / 3f64.sqrt();
        assert!(t.derivative(xs).abs() < 1e-14);
        assert!(t.derivative(-xs).abs() < 1e-14);
        assert!((quartic_fold_location(1.0, 0.0) - (xs - xs.powi(3))).abs() < 1e-14);
    }

    #[test]
    fn quartic_derivatives_are_consistent() {
        for &(h, eta) in &[(1.0, 0.0), (1.0, 0.3), (0.1, 0.05), (0.5, 1.0)] {
            let q = quartic_maps(h, eta);
            assert!(TransportMap1D::new(move |x| q.apply(x), {
                let q = quartic_maps(h, eta);
                move |x| q.derivative(x)
            })
            .is_ok());
        }
        assert!(matches!(
            TransportMap1D::new(|x| x * x, |_| 1.0),
            Err(GridError::InconsistentDerivative { .. })
        ));
    }

    #[test]
    fn monotonicity_threshold() {
        let check = |h: f64, eta: f64| is_monotone(&quartic_maps(h, eta), -10.0, 10.0, 20_001).unwrap();
        assert!(!check(1.0, 0.0).monotone);
        assert!(check(1.0, 0.31).monotone);
        assert!(check(0.1, 0.05).monotone);
        let at = check(1.0, 0.3);
        assert!(at.min_derivative.abs() < 1e-12, "{}", at.min_derivative);
        assert!(!check(1.0, 0.3 - 1e-9).monotone);
        assert!(check(1.0, 0.3 + 1e-9).monotone);
        // min T′ = 1 − 0.3h/η
        let c = check(1.0, 0.5);
        assert!((c.min_derivative - 0.4).abs() < 1e-12);
        let id = is_monotone(&TransportMap1D::identity(), -1.0, 1.0, 1000).unwrap();
        assert!(id.monotone && id.min_derivative == 1.0);
        assert!(is_monotone(&TransportMap1D::identity(), -1.0, 1.0, 999).is_err());
    }

    #[test]
    fn identity_pushforward_resamples() {
        let rho = GridDensity1D::gaussian(-8.0, 8.0, 2048, 0.0, 1.0).unwrap();
        let pf = pushforward(&rho, &TransportMap1D::identity(), *rho.grid()).unwrap();
        assert!(rho.l1_distance_to(&pf.density) <= 1e-6);
        assert!((pf.raw_mass - 1.0).abs() < 1e-6);
    }

    #[test]
    fn linear_pushforward_scales_gaussian() {
        let rho = GridDensity1D::gaussian(-8.0, 8.0, 4096, 0.0, 1.0).unwrap();
        let out = UniformGrid::new(-12.0, 12.0, 4096).unwrap();
        let pf = pushforward(&rho, &TransportMap1D::affine(2.0, 0.0), out).unwrap();
        let exact = GridDensity1D::gaussian(-12.0, 12.0, 4096, 0.0, 2.0).unwrap();
        assert!(pf.density.l1_distance_to(&exact) <= 1e-4);
        assert!((pf.raw_mass - 1.0).abs() < 1e-3);
    }

    #[test]
    fn quartic_fold_produces_jump() {
        let rho = GridDensity1D::gaussian(-8.0, 8.0, 2048, 0.0, 1.0).unwrap();
        let out = UniformGrid::new(-4.0, 4.0, 4096).unwrap();
        let pf = pushforward(&rho, &quartic_maps(1.0, 0.0), out).unwrap();
        let y = quartic_fold_location(1.0, 0.0);
        assert!(detect_jump(&pf.density, y, JUMP_WINDOW, JUMP_RATIO).is_some());
        let smooth = pushforward(&rho, &quartic_maps(1.0, 0.5), out).unwrap();
        let y = quartic_fold_location(1.0, 0.5);
        assert!(detect_jump(&smooth.density, y, JUMP_WINDOW, JUMP_RATIO).is_none());
    }
}
