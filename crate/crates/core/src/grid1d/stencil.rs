//! Second-order finite-difference stencils on uniform grids.
//!
//! Interior nodes use centered differences; boundary nodes use one-sided
//! second-order formulas. All functions expect at least 5 values.

pub fn derivative(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (f[i + 1] - f[i - 1]) / (2.0 * dx);
    }
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dx);
    d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dx);
    d
}

pub fn second_derivative(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let h2 = dx * dx;
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / h2;
    }
    d[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
    d[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
    d
}

/// Third derivative; the five-point centered stencil in the interior, the
/// derivative of [`second_derivative`] on the two outermost nodes.
pub fn third_derivative(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let h3 = 2.0 * dx * dx * dx;
    let fallback = derivative(&second_derivative(f, dx), dx);
    let mut d = fallback;
    for i in 2..n - 2 {
        d[i] = (f[i + 2] - 2.0 * f[i + 1] + 2.0 * f[i - 1] - f[i - 2]) / h3;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_low_degree_polynomials() {
        let dx = 0.1;
        let xs: Vec<f64> = (0..21).map(|i| -1.0 + i as f64 * dx).collect();
        let quad: Vec<f64> = xs.iter().map(|x| 3.0 * x * x - x + 2.0).collect();
        let d1 = derivative(&quad, dx);
        let d2 = second_derivative(&quad, dx);
        for (i, x) in xs.iter().enumerate() {
            assert!((d1[i] - (6.0 * x - 1.0)).abs() < 1e-11);
            assert!((d2[i] - 6.0).abs() < 1e-9);
        }
        let cubic: Vec<f64> = xs.iter().map(|x| x * x * x).collect();
        let d3 = third_derivative(&cubic, dx);
        for v in &d3[2..19] {
            assert!((v - 6.0).abs() < 1e-8);
        }
    }

    #[test]
    fn second_order_convergence() {
        let err = |n: usize| {
            let dx = 2.0 / (n - 1) as f64;
            let xs: Vec<f64> = (0..n).map(|i| -1.0 + i as f64 * dx).collect();
            let f: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
            let d = derivative(&f, dx);
            xs.iter().zip(&d).map(|(x, v)| (v - x.cos()).abs()).fold(0.0, f64::max)
        };
        let ratio = err(101) / err(201);
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
    }
}
