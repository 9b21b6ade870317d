use nalgebra::DMatrix;

use super::quadrature::triangle_quadrature;

/// `dim P^q` on a triangle.
pub const fn dim_p(q: usize) -> usize {
    (q + 1) * (q + 2) / 2
}

/// Orthonormal basis of `P^q` on the reference triangle.
///
/// Built from monomials centred at the barycentre, ordered by total degree,
/// and orthonormalized by a (twice repeated) Cholesky Gram factorization.
/// Because the transform is lower triangular the basis is hierarchical: the
/// first `dim_p(k)` functions span `P^k` for every `k <= q`.
#[derive(Clone, Debug)]
pub struct ScalarBasis {
    degree: usize,
    exponents: Vec<(usize, usize)>,
    /// `coeffs[(i, j)]` is the weight of monomial `j` in basis function `i`.
    coeffs: DMatrix<f64>,
}

const CENTRE: f64 = 1.0 / 3.0;

impl ScalarBasis {
    pub fn new(degree: usize) -> Self {
        let exponents: Vec<(usize, usize)> = (0..=degree).flat_map(|d| (0..=d).map(move |b| (d - b, b))).collect();
        let n = exponents.len();
        let mut basis = ScalarBasis { degree, exponents, coeffs: DMatrix::identity(n, n) };
        let rule = triangle_quadrature(2 * degree).expect("basis degree within quadrature range");
        for _ in 0..2 {
            let mut mass = DMatrix::zeros(n, n);
            let mut vals = vec![0.0; n];
            for (p, &w) in rule.points.iter().zip(&rule.weights) {
                basis.values_into(*p, &mut vals);
                for i in 0..n {
                    for j in 0..=i {
                        mass[(i, j)] += w * vals[i] * vals[j];
                    }
                }
            }
            mass.fill_upper_triangle_with_lower_triangle();
            let chol = mass.cholesky().expect("monomial mass matrix is SPD");
            let l_inv =
                chol.l().solve_lower_triangular(&DMatrix::identity(n, n)).expect("Cholesky factor is invertible");
            basis.coeffs = l_inv * &basis.coeffs;
        }
        basis
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    fn powers(&self, t: f64) -> Vec<f64> {
        let mut pw = Vec::with_capacity(self.degree + 1);
        let mut acc = 1.0;
        for _ in 0..=self.degree {
            pw.push(acc);
            acc *= t;
        }
        pw
    }

    fn monomials(&self, xi: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
        let (dx, dy) = (xi[0] - CENTRE, xi[1] - CENTRE);
        let (px, py) = (self.powers(dx), self.powers(dy));
        let mut vals = Vec::with_capacity(self.dim());
        let mut grads = Vec::with_capacity(self.dim());
        for &(a, b) in &self.exponents {
            vals.push(px[a] * py[b]);
            let gx = if a > 0 { a as f64 * px[a - 1] * py[b] } else { 0.0 };
            let gy = if b > 0 { b as f64 * px[a] * py[b - 1] } else { 0.0 };
            grads.push([gx, gy]);
        }
        (vals, grads)
    }

    fn values_into(&self, xi: [f64; 2], out: &mut [f64]) {
        let (m, _) = self.monomials(xi);
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..=i).map(|j| self.coeffs[(i, j)] * m[j]).sum();
        }
    }

    /// Values of all basis functions at a reference point.
    pub fn values(&self, xi: [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.values_into(xi, &mut out);
        out
    }

    /// Values and reference gradients at a reference point.
    pub fn values_and_gradients(&self, xi: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
        let (m, dm) = self.monomials(xi);
        let n = self.dim();
        let mut vals = vec![0.0; n];
        let mut grads = vec![[0.0; 2]; n];
        for i in 0..n {
            for j in 0..=i {
                let c = self.coeffs[(i, j)];
                vals[i] += c * m[j];
                grads[i][0] += c * dm[j][0];
                grads[i][1] += c * dm[j][1];
            }
        }
        (vals, grads)
    }

    /// Tabulates values and reference gradients at many points.
    pub fn tabulate(&self, points: &[[f64; 2]]) -> BasisTable {
        let n = self.dim();
        let mut values = DMatrix::zeros(points.len(), n);
        let mut d_xi = DMatrix::zeros(points.len(), n);
        let mut d_eta = DMatrix::zeros(points.len(), n);
        for (q, p) in points.iter().enumerate() {
            let (v, g) = self.values_and_gradients(*p);
            for i in 0..n {
                values[(q, i)] = v[i];
                d_xi[(q, i)] = g[i][0];
                d_eta[(q, i)] = g[i][1];
            }
        }
        BasisTable { values, d_xi, d_eta }
    }
}

/// Point-by-function tables: row = evaluation point, column = basis function.
#[derive(Clone, Debug)]
pub struct BasisTable {
    pub values: DMatrix<f64>,
    pub d_xi: DMatrix<f64>,
    pub d_eta: DMatrix<f64>,
}

pub fn eval_scalar_basis(q: usize, points: &[[f64; 2]]) -> BasisTable {
    ScalarBasis::new(q).tabulate(points)
}

fn legendre(n: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return 1.0;
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// `L²(0,1)`-orthonormal Legendre polynomials on the unit edge; `ℓ_0 = 1`.
#[derive(Clone, Copy, Debug)]
pub struct EdgeBasis {
    pub degree: usize,
}

impl EdgeBasis {
    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn value(&self, k: usize, s: f64) -> f64 {
        ((2 * k + 1) as f64).sqrt() * legendre(k, 2.0 * s - 1.0)
    }

    pub fn values(&self, s: f64) -> Vec<f64> {
        (0..self.dim()).map(|k| self.value(k, s)).collect()
    }
}

/// Edge bubble `s(1-s) ℓ_k(s)`, vanishing at both endpoints.
pub fn edge_bubble(k: usize, s: f64) -> f64 {
    s * (1.0 - s) * EdgeBasis { degree: k }.value(k, s)
}
