use nalgebra::{DMatrix, DVector};

use super::basis::ScalarBasis;
use super::quadrature::QuadratureRule;
use crate::error::{Error, Result};

/// Affine map `x = origin + J ξ` from the reference triangle onto a physical
/// triangle with counter-clockwise corners.
#[derive(Clone, Copy, Debug)]
pub struct ElementMap {
    pub origin: [f64; 2],
    /// Columns are `v1 - v0` and `v2 - v0`.
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
    /// `J^{-T}`, mapping reference gradients to physical gradients.
    pub inv_t: [[f64; 2]; 2],
}

impl ElementMap {
    pub fn new(corners: [[f64; 2]; 3]) -> Result<Self> {
        let [v0, v1, v2] = corners;
        let j = [[v1[0] - v0[0], v2[0] - v0[0]], [v1[1] - v0[1], v2[1] - v0[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if !(det > 0.0) {
            return Err(Error::InvalidParameter(format!("element map has determinant {det}")));
        }
        let inv_t = [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]];
        Ok(ElementMap { origin: v0, jacobian: j, det, inv_t })
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det
    }

    pub fn map(&self, xi: [f64; 2]) -> [f64; 2] {
        let j = &self.jacobian;
        [self.origin[0] + j[0][0] * xi[0] + j[0][1] * xi[1], self.origin[1] + j[1][0] * xi[0] + j[1][1] * xi[1]]
    }

    pub fn inverse(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        // J^{-1} = (J^{-T})^T
        let k = &self.inv_t;
        [k[0][0] * d[0] + k[1][0] * d[1], k[0][1] * d[0] + k[1][1] * d[1]]
    }

    pub fn physical_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let k = &self.inv_t;
        [k[0][0] * g[0] + k[0][1] * g[1], k[1][0] * g[0] + k[1][1] * g[1]]
    }
}

/// `L²(T)` projection of `f` onto the first `dim_p(q)` functions of `basis`,
/// using the supplied reference quadrature.
pub fn project_l2(
    basis: &ScalarBasis,
    q: usize,
    rule: &QuadratureRule,
    map: &ElementMap,
    f: impl Fn([f64; 2]) -> f64,
) -> Result<DVector<f64>> {
    let n = super::basis::dim_p(q);
    assert!(n <= basis.dim(), "projection degree exceeds basis degree");
    let mut mass = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for (p, &w) in rule.points.iter().zip(&rule.weights) {
        let vals = basis.values(*p);
        let wf = w * map.det;
        let fx = f(map.map(*p));
        for i in 0..n {
            rhs[i] += wf * fx * vals[i];
            for j in 0..n {
                mass[(i, j)] += wf * vals[i] * vals[j];
            }
        }
    }
    let chol = mass.cholesky().ok_or(Error::NotPositiveDefinite { what: "local mass matrix", element: 0 })?;
    Ok(chol.solve(&rhs))
}

/// Evaluates `Σ c_i φ_i` at a reference point.
pub fn eval_expansion(basis: &ScalarBasis, coeffs: &[f64], xi: [f64; 2]) -> f64 {
    let vals = basis.values(xi);
    coeffs.iter().zip(&vals).map(|(c, v)| c * v).sum()
}
