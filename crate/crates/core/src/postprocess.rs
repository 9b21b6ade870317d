//! Elementwise postprocessing of `(u_h, σ_h)` into `ũ_h ∈ P^{p+1}(T)`:
//!
//! ```text
//! (∇ũ_h, ∇v)_T = (σ_h, ∇v)_T   for all v ∈ P^{p+1}(T)
//! (ũ_h, 1)_T   = (u_h, 1)_T
//! ```
//!
//! i.e. a discrete Neumann problem whose constant mode is fixed by the mean
//! of `u_h`. The mean condition enters as a Lagrange multiplier row.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dpg::{Solution, TrialSpaceKind};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::spaces::{dim_p, triangle_quadrature, BasisTable, ElementMap, QuadratureRule, ScalarBasis};

/// Reference data for postprocessing at order `p`.
#[derive(Clone, Debug)]
pub struct Postprocessor {
    pub order: usize,
    pub basis: ScalarBasis,
    rule: QuadratureRule,
    table: BasisTable,
}

impl Postprocessor {
    pub fn new(order: usize) -> Self {
        let basis = ScalarBasis::new(order + 1);
        let rule = triangle_quadrature(2 * (order + 1)).expect("postprocessing degree within range");
        let table = basis.tabulate(&rule.points);
        Postprocessor { order, basis, rule, table }
    }

    /// `u` may be of degree `p` or `p+1`; `σ` components are of degree `p`.
    /// Returns the coefficients of `ũ_h` in the degree-`p+1` basis.
    pub fn element(&self, map: &ElementMap, u: &[f64], sx: &[f64], sy: &[f64], element: usize) -> Result<DVector<f64>> {
        let n = self.basis.dim();
        let ns = dim_p(self.order);
        assert!(u.len() <= n && sx.len() == ns && sy.len() == ns);
        let k = map.inv_t;
        let mut sys = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut rhs = DVector::<f64>::zeros(n + 1);
        let phi = &self.table.values;
        for (q, &w) in self.rule.weights.iter().enumerate() {
            let w = w * map.det;
            let grads: Vec<[f64; 2]> = (0..n)
                .map(|i| {
                    let (gx, gy) = (self.table.d_xi[(q, i)], self.table.d_eta[(q, i)]);
                    [k[0][0] * gx + k[0][1] * gy, k[1][0] * gx + k[1][1] * gy]
                })
                .collect();
            let sig =
                [(0..ns).map(|j| sx[j] * phi[(q, j)]).sum::<f64>(), (0..ns).map(|j| sy[j] * phi[(q, j)]).sum::<f64>()];
            let uh: f64 = u.iter().enumerate().map(|(j, c)| c * phi[(q, j)]).sum();
            for i in 0..n {
                let gi = grads[i];
                rhs[i] += w * (sig[0] * gi[0] + sig[1] * gi[1]);
                for j in 0..=i {
                    sys[(i, j)] += w * (gi[0] * grads[j][0] + gi[1] * grads[j][1]);
                }
                sys[(n, i)] += w * phi[(q, i)];
            }
            rhs[n] += w * uh;
        }
        for i in 0..n {
            for j in 0..i {
                sys[(j, i)] = sys[(i, j)];
            }
            sys[(i, n)] = sys[(n, i)];
        }
        let lu = sys.clone().lu();
        let mut sol = lu.solve(&rhs).ok_or(Error::Postprocess { element })?;
        // One refinement step brings the result to working accuracy.
        if let Some(corr) = lu.solve(&(&rhs - &sys * &sol)) {
            sol += corr;
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::Postprocess { element });
        }
        Ok(sol.rows(0, n).into_owned())
    }
}

/// `ũ_h` on every element, in the orthonormal degree-`p+1` basis.
#[derive(Clone, Debug)]
pub struct PostprocessedField {
    pub degree: usize,
    pub coeffs: Vec<DVector<f64>>,
}

pub fn postprocess_element(
    post: &Postprocessor,
    corners: [[f64; 2]; 3],
    u: &[f64],
    sx: &[f64],
    sy: &[f64],
) -> Result<DVector<f64>> {
    let map = ElementMap::new(corners)?;
    post.element(&map, u, sx, sy, 0)
}

pub fn postprocess_all(mesh: &Mesh, solution: &Solution) -> Result<PostprocessedField> {
    if let TrialSpaceKind::Augmented(_) = solution.trial {
        log::warn!("postprocessing an augmented-space solution; u_h already has degree p+1");
    }
    let post = Postprocessor::new(solution.trial.order());
    let coeffs = (0..mesh.num_elements())
        .into_par_iter()
        .map(|t| {
            let map = ElementMap::new(mesh.corners(t))?;
            let (sx, sy) = solution.sigma_coeffs(t);
            post.element(&map, solution.u_coeffs(t), sx, sy, t)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PostprocessedField { degree: post.order + 1, coeffs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{eval_expansion, project_l2};

    const REF: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    const TRI: [[f64; 2]; 3] = [[0.2, 0.1], [1.3, 0.4], [0.5, 1.2]];

    fn project(deg: usize, corners: [[f64; 2]; 3], f: impl Fn([f64; 2]) -> f64) -> DVector<f64> {
        let basis = ScalarBasis::new(deg);
        let map = ElementMap::new(corners).unwrap();
        project_l2(&basis, deg, &triangle_quadrature(2 * deg + 4).unwrap(), &map, f).unwrap()
    }

    #[test]
    fn unit_flux_on_reference() {
        let post = Postprocessor::new(0);
        let sx = project(0, REF, |_| 1.0);
        let out = postprocess_element(&post, REF, &[0.0], sx.as_slice(), &[0.0]).unwrap();
        for xi in [[0.1, 0.1], [0.5, 0.2], [0.0, 0.9]] {
            let v = eval_expansion(&post.basis, out.as_slice(), xi);
            assert!((v - (xi[0] - 1.0 / 3.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn constants_are_kept() {
        let post = Postprocessor::new(1);
        let u = project(1, TRI, |_| 2.5);
        let out = postprocess_element(&post, TRI, u.as_slice(), &[0.0; 3], &[0.0; 3]).unwrap();
        let map = ElementMap::new(TRI).unwrap();
        let v = eval_expansion(&post.basis, out.as_slice(), map.inverse([0.6, 0.5]));
        assert!((v - 2.5).abs() < 1e-13);
    }

    #[test]
    fn reproduces_exact_gradients() {
        for p in 0..=3 {
            let post = Postprocessor::new(p);
            let q = |x: [f64; 2]| 0.3 + x[0] * x[1] - (x[0] - 0.5).powi(p as i32 + 1) + x[1].powi(p as i32 + 1);
            let qx = |x: [f64; 2]| x[1] - (p as f64 + 1.0) * (x[0] - 0.5).powi(p as i32);
            let qy = |x: [f64; 2]| x[0] + (p as f64 + 1.0) * x[1].powi(p as i32);
            if p == 0 {
                continue; // x y is not in P^1
            }
            let sx = project(p, TRI, qx);
            let sy = project(p, TRI, qy);
            // A P^p field with the same mean as q.
            let u = project(p, TRI, q);
            let out = postprocess_element(&post, TRI, u.as_slice(), sx.as_slice(), sy.as_slice()).unwrap();
            let map = ElementMap::new(TRI).unwrap();
            for xi in [[0.1, 0.2], [0.6, 0.3], [0.05, 0.9]] {
                let v = eval_expansion(&post.basis, out.as_slice(), xi);
                assert!((v - q(map.map(xi))).abs() < 1e-12, "p={p}");
            }
        }
    }
}
