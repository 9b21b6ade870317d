use nalgebra::{DMatrix, DVector};

use super::Discretization;
use crate::error::{Error, Result};
use crate::spaces::{edge_bubble, EdgeBasis, ElementMap};

/// Element contribution to the mixed DPG system.
///
/// The element test basis is `[v_i | τ_m]`: the scalar basis `φ_i` on the
/// element and the Piola images `τ_m = J τ̂_m / det J` of the reference
/// vector basis, each rescaled so that the Gram matrix has unit diagonal.
/// The Piola map keeps divergence-free fields divergence-free, so the
/// `O(h²)` mass-only modes stay separated from the rest and the scaled Gram
/// is well conditioned on very small elements.
#[derive(Clone, Debug)]
pub struct LocalSystem {
    /// Test Gram matrix of the broken `H¹ × H(div)` inner product.
    pub gram: DMatrix<f64>,
    /// `b(trial_j, test_i)`; rows follow `[v | τ]`, columns follow
    /// `[u | σ_x | σ_y | û | σ̂]`.
    pub b: DMatrix<f64>,
    pub load: DVector<f64>,
    /// Scale factor of each test function relative to the unscaled basis.
    pub scale: DVector<f64>,
}

/// Physical tables and quadrature weights (`w_q |det J|`) on one element.
struct ElementTables {
    gx: DMatrix<f64>,
    gy: DMatrix<f64>,
    tx: DMatrix<f64>,
    ty: DMatrix<f64>,
    div: DMatrix<f64>,
    weights: DVector<f64>,
}

/// Piola image `(J τ̂ / det)` of reference component tables.
fn piola(map: &ElementMap, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (j, d) = (map.jacobian, map.det);
    ((x * j[0][0] + y * j[0][1]) / d, (x * j[1][0] + y * j[1][1]) / d)
}

fn element_tables(disc: &Discretization, map: &ElementMap) -> ElementTables {
    let k = map.inv_t;
    let gx = &disc.d_xi * k[0][0] + &disc.d_eta * k[0][1];
    let gy = &disc.d_xi * k[1][0] + &disc.d_eta * k[1][1];
    let (tx, ty) = piola(map, &disc.tau_x, &disc.tau_y);
    let div = &disc.tau_div / map.det;
    let weights = DVector::from_iterator(disc.rule.len(), disc.rule.weights.iter().map(|w| w * map.det));
    ElementTables { gx, gy, tx, ty, div, weights }
}

/// `Aᵀ diag(w) B`
fn weighted_product(a: &DMatrix<f64>, w: &DVector<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut wb = b.clone();
    for (mut row, wi) in wb.row_iter_mut().zip(w.iter()) {
        row *= *wi;
    }
    a.transpose() * wb
}

/// Unscaled Gram matrix.
pub fn local_gram(disc: &Discretization, map: &ElementMap) -> DMatrix<f64> {
    let t = element_tables(disc, map);
    let n = disc.n_test_scalar();
    let phi = &disc.values;
    let w = &t.weights;
    let scalar = weighted_product(phi, w, phi) + weighted_product(&t.gx, w, &t.gx) + weighted_product(&t.gy, w, &t.gy);
    let vector =
        weighted_product(&t.tx, w, &t.tx) + weighted_product(&t.ty, w, &t.ty) + weighted_product(&t.div, w, &t.div);

    let mut g = DMatrix::zeros(3 * n, 3 * n);
    g.view_mut((0, 0), (n, n)).copy_from(&scalar);
    g.view_mut((n, n), (2 * n, 2 * n)).copy_from(&vector);
    g
}

/// Unscaled `b` matrix. `flipped[k]` is true when local edge `k` runs
/// against the global (low → high vertex index) orientation.
pub fn local_b(disc: &Discretization, map: &ElementMap, corners: [[f64; 2]; 3], flipped: [bool; 3]) -> DMatrix<f64> {
    let t = element_tables(disc, map);
    let w = &t.weights;
    let p = disc.order();
    let n = disc.n_test_scalar();
    let (nu, ns) = (disc.n_u(), disc.n_sigma());
    let (c_u, c_sx, c_sy) = (0, nu, nu + ns);
    let c_hat = disc.n_interior();
    let c_flux = c_hat + disc.n_trace_local();
    let phi = &disc.values;

    let mut b = DMatrix::zeros(disc.n_test(), disc.n_trial_local());
    let phi_u = phi.columns(0, nu).into_owned();
    let phi_s = phi.columns(0, ns).into_owned();

    // (u, div τ + c v)
    let reaction = disc.problem.reaction();
    if reaction != 0.0 {
        b.view_mut((0, c_u), (n, nu)).copy_from(&(weighted_product(phi, w, &phi_u) * reaction));
    }
    b.view_mut((n, c_u), (2 * n, nu)).copy_from(&weighted_product(&t.div, w, &phi_u));

    // (σ, τ + ∇v)
    b.view_mut((0, c_sx), (n, ns)).copy_from(&weighted_product(&t.gx, w, &phi_s));
    b.view_mut((0, c_sy), (n, ns)).copy_from(&weighted_product(&t.gy, w, &phi_s));
    b.view_mut((n, c_sx), (2 * n, ns)).copy_from(&weighted_product(&t.tx, w, &phi_s));
    b.view_mut((n, c_sy), (2 * n, ns)).copy_from(&weighted_product(&t.ty, w, &phi_s));

    // -<û, τ·n>_∂T - <σ̂, v>_∂T
    let flux_basis = EdgeBasis { degree: p };
    for k in 0..3 {
        let (a, c) = (corners[(k + 1) % 3], corners[(k + 2) % 3]);
        let d = [c[0] - a[0], c[1] - a[1]];
        let len = d[0].hypot(d[1]);
        // Outward normal times edge length for counter-clockwise elements.
        let nl = [d[1], -d[0]];
        let sign = if flipped[k] { -1.0 } else { 1.0 };
        let vals = &disc.edge_values[k];
        let (ex, ey) = piola(map, &disc.edge_tau[k].0, &disc.edge_tau[k].1);
        let tau_n = ex * nl[0] + ey * nl[1];
        for (q, (&tq, &wq)) in disc.edge_rule.points.iter().zip(&disc.edge_rule.weights).enumerate() {
            let s = if flipped[k] { 1.0 - tq } else { tq };
            // Trace functions active on this edge: two vertex hats, p bubbles.
            let mut trace: Vec<(usize, f64)> = Vec::with_capacity(p + 2);
            trace.push((c_hat + (k + 1) % 3, 1.0 - tq));
            trace.push((c_hat + (k + 2) % 3, tq));
            for j in 0..p {
                trace.push((c_hat + 3 + k * p + j, edge_bubble(j, s)));
            }
            for m in 0..2 * n {
                let tn = wq * tau_n[(q, m)];
                for &(col, h) in &trace {
                    b[(n + m, col)] -= tn * h;
                }
            }
            for i in 0..n {
                let vi = wq * len * sign * vals[(q, i)];
                for j in 0..=p {
                    b[(i, c_flux + k * (p + 1) + j)] -= vi * flux_basis.value(j, s);
                }
            }
        }
    }
    b
}

/// Unscaled load vector `(f, v)`.
pub fn local_load(disc: &Discretization, map: &ElementMap, f: &dyn Fn([f64; 2]) -> f64) -> DVector<f64> {
    let n = disc.n_test_scalar();
    let mut load = DVector::zeros(disc.n_test());
    for (q, (pt, w)) in disc.rule.points.iter().zip(&disc.rule.weights).enumerate() {
        let fx = f(map.map(*pt)) * w * map.det;
        if fx == 0.0 {
            continue;
        }
        for i in 0..n {
            load[i] += fx * disc.values[(q, i)];
        }
    }
    load
}

impl LocalSystem {
    pub fn assemble(
        disc: &Discretization,
        corners: [[f64; 2]; 3],
        flipped: [bool; 3],
        f: &dyn Fn([f64; 2]) -> f64,
    ) -> Result<LocalSystem> {
        let map = ElementMap::new(corners)?;
        let mut gram = local_gram(disc, &map);
        let mut b = local_b(disc, &map, corners, flipped);
        let mut load = local_load(disc, &map, f);
        let scale = DVector::from_iterator(gram.nrows(), gram.diagonal().iter().map(|d| 1.0 / d.sqrt()));
        for (i, &si) in scale.iter().enumerate() {
            gram.row_mut(i).scale_mut(si);
            gram.column_mut(i).scale_mut(si);
            b.row_mut(i).scale_mut(si);
            load[i] *= si;
        }
        Ok(LocalSystem { gram, b, load, scale })
    }
}

/// Values of a test function given by element-basis coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestValue {
    pub v: f64,
    pub grad_v: [f64; 2],
    pub tau: [f64; 2],
    pub div_tau: f64,
}

/// Evaluates `Σ c_i (v_i, τ_i)` at reference point `xi` of the element with
/// corners `corners`, for coefficients relative to [`LocalSystem`]'s basis.
pub fn eval_test_function(
    disc: &Discretization,
    corners: [[f64; 2]; 3],
    scale: &DVector<f64>,
    coeffs: &DVector<f64>,
    xi: [f64; 2],
) -> Result<TestValue> {
    let map = ElementMap::new(corners)?;
    let n = disc.n_test_scalar();
    let (phi, grads) = disc.basis.values_and_gradients(xi);
    let mut out = TestValue { v: 0.0, grad_v: [0.0; 2], tau: [0.0; 2], div_tau: 0.0 };
    for i in 0..n {
        let c = coeffs[i] * scale[i];
        let g = map.physical_gradient(grads[i]);
        out.v += c * phi[i];
        out.grad_v[0] += c * g[0];
        out.grad_v[1] += c * g[1];
    }
    let top = disc.tau_coeffs.rows(0, n);
    let bottom = disc.tau_coeffs.rows(n, n);
    let j = map.jacobian;
    for m in 0..2 * n {
        let c = coeffs[n + m] * scale[n + m];
        let mut t = [0.0; 2];
        let mut div = 0.0;
        for i in 0..n {
            t[0] += top[(i, m)] * phi[i];
            t[1] += bottom[(i, m)] * phi[i];
            div += top[(i, m)] * grads[i][0] + bottom[(i, m)] * grads[i][1];
        }
        out.tau[0] += c * (j[0][0] * t[0] + j[0][1] * t[1]) / map.det;
        out.tau[1] += c * (j[1][0] * t[0] + j[1][1] * t[1]) / map.det;
        out.div_tau += c * div / map.det;
    }
    Ok(out)
}

/// Eliminates the residual representer: returns `S = Bᵀ G⁻¹ B` and
/// `r = Bᵀ G⁻¹ F`. The columns of `G⁻¹ B` are the discrete optimal test
/// functions of the local trial basis.
pub fn condense(local: &LocalSystem, element: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let chol = local.gram.clone().cholesky().ok_or(Error::NotPositiveDefinite { what: "test Gram matrix", element })?;
    let l = chol.l();
    let w = l.solve_lower_triangular(&local.b).expect("Cholesky factor is invertible");
    let z = l.solve_lower_triangular(&local.load).expect("Cholesky factor is invertible");
    let wt = w.transpose();
    let mut s = &wt * &w;
    // Exact symmetry; the product is only symmetric up to rounding otherwise.
    for i in 0..s.nrows() {
        for j in 0..i {
            let avg = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = avg;
            s[(j, i)] = avg;
        }
    }
    Ok((s, wt * z))
}
