use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 20;

/// Quadrature on the reference triangle `{x, y >= 0, x + y <= 1}`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Quadrature on the unit interval `[0, 1]`.
#[derive(Clone, Debug)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// `n`-point Gauss–Legendre rule mapped to `[0, 1]`, exact to degree `2n-1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Node i is the i-th largest root in [-1, 1]; store ascending on [0, 1].
        points[n - 1 - i] = 0.5 * (1.0 + x);
        points[i] = 0.5 * (1.0 - x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (points, weights)
}

pub fn edge_quadrature(q: usize) -> Result<EdgeRule> {
    if q > 2 * MAX_DEGREE {
        return Err(Error::InvalidParameter(format!("edge quadrature degree {q} unsupported")));
    }
    let (points, weights) = gauss_legendre(q / 2 + 1);
    Ok(EdgeRule { points, weights, degree: q })
}

/// Collapsed (Duffy) tensor Gauss–Legendre rule exact for polynomials of
/// total degree `q` on the reference triangle.
pub fn triangle_quadrature(q: usize) -> Result<QuadratureRule> {
    if q > MAX_DEGREE {
        return Err(Error::InvalidParameter(format!("triangle quadrature degree {q} outside 0..={MAX_DEGREE}")));
    }
    // x = s, y = t(1 - s), dx dy = (1 - s) ds dt.
    let (s_pts, s_wts) = gauss_legendre((q + 2).div_ceil(2));
    let (t_pts, t_wts) = gauss_legendre((q + 1).div_ceil(2).max(1));
    let mut points = Vec::with_capacity(s_pts.len() * t_pts.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for (&s, &ws) in s_pts.iter().zip(&s_wts) {
        for (&t, &wt) in t_pts.iter().zip(&t_wts) {
            points.push([s, t * (1.0 - s)]);
            weights.push(ws * wt * (1.0 - s));
        }
    }
    Ok(QuadratureRule { points, weights, degree: q })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Closed form for the monomial integral over the reference triangle.
    fn monomial_integral(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn exact_on_monomials() {
        for q in 0..=MAX_DEGREE {
            let rule = triangle_quadrature(q).unwrap();
            for a in 0..=q as u32 {
                for b in 0..=(q as u32 - a) {
                    let num: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = monomial_integral(a, b);
                    assert!((num - exact).abs() <= 1e-14 * exact.max(1e-3), "q={q} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn named_values() {
        let area: f64 = triangle_quadrature(0).unwrap().weights.iter().sum();
        assert!((area - 0.5).abs() < 1e-15);
        let r = triangle_quadrature(2).unwrap();
        let ix2: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0] * p[0]).sum();
        assert!((ix2 - 1.0 / 12.0).abs() < 1e-15);
        let r = triangle_quadrature(5).unwrap();
        let i: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(2) * p[1].powi(3)).sum();
        assert!((i - 1.0 / 420.0).abs() < 1e-16);
    }

    #[test]
    fn out_of_range() {
        assert!(triangle_quadrature(MAX_DEGREE + 1).is_err());
    }

    #[test]
    fn points_inside_reference_triangle() {
        let r = triangle_quadrature(12).unwrap();
        assert!(r.points.iter().all(|p| p[0] > 0.0 && p[1] > 0.0 && p[0] + p[1] < 1.0));
    }

    #[test]
    fn edge_rule_exact() {
        for q in 0..=20 {
            let r = edge_quadrature(q).unwrap();
            for k in 0..=q as i32 {
                let num: f64 = r.points.iter().zip(&r.weights).map(|(s, w)| w * s.powi(k)).sum();
                assert!((num - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "q={q} k={k}");
            }
        }
    }
}
