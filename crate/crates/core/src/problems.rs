//! Manufactured benchmark problems and L² error evaluation.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::dpg::{ProblemKind, Solution};
use crate::error::Result;
use crate::mesh::{lshape_mesh, unit_square_mesh, Mesh};
use crate::postprocess::PostprocessedField;
use crate::spaces::{gauss_legendre, triangle_quadrature, ElementMap, ScalarBasis};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// `(0,1)²`
    UnitSquare,
    /// `(-1,1)² \ [0,1]×[-1,0]`, re-entrant corner at the origin.
    LShape,
}

/// A problem with known exact solution.
#[derive(Clone, Copy, Debug)]
pub struct ManufacturedProblem {
    pub name: &'static str,
    pub domain: Domain,
    pub kind: ProblemKind,
    pub exact: fn([f64; 2]) -> f64,
    /// `∇u`. Non-finite where `u` is singular.
    pub gradient: fn([f64; 2]) -> [f64; 2],
    pub source: fn([f64; 2]) -> f64,
    /// Whether the Dirichlet data vanish.
    pub homogeneous: bool,
    /// Point where `∇u` is singular; elements touching it get a graded
    /// collapsed quadrature for the errors.
    pub singular_point: Option<[f64; 2]>,
}

impl ManufacturedProblem {
    /// `u = x(1-x)y(1-y)` with `-Δu + u = f` on the unit square.
    pub fn square_smooth() -> Self {
        ManufacturedProblem {
            name: "square_smooth",
            domain: Domain::UnitSquare,
            kind: ProblemKind::ReactionDiffusion,
            exact: square_u,
            gradient: square_grad,
            source: square_f,
            homogeneous: true,
            singular_point: None,
        }
    }

    /// `u = r^{2/3} cos(2φ/3)` with `-Δu = 0` on the L-shape.
    pub fn lshape_singular() -> Self {
        ManufacturedProblem {
            name: "lshape_singular",
            domain: Domain::LShape,
            kind: ProblemKind::Poisson,
            exact: lshape_u,
            gradient: lshape_grad,
            source: |_| 0.0,
            homogeneous: false,
            singular_point: Some([0.0, 0.0]),
        }
    }

    /// Coarsest mesh studies start from.
    pub fn initial_mesh(&self) -> Mesh {
        match self.domain {
            Domain::UnitSquare => unit_square_mesh(2).expect("static mesh is valid"),
            Domain::LShape => lshape_mesh(),
        }
    }

    /// Dirichlet data, `None` when they vanish.
    pub fn dirichlet(&self) -> Option<fn([f64; 2]) -> f64> {
        (!self.homogeneous).then_some(self.exact)
    }
}

fn square_u(x: [f64; 2]) -> f64 {
    x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])
}

fn square_grad(x: [f64; 2]) -> [f64; 2] {
    [(1.0 - 2.0 * x[0]) * x[1] * (1.0 - x[1]), x[0] * (1.0 - x[0]) * (1.0 - 2.0 * x[1])]
}

fn square_f(x: [f64; 2]) -> f64 {
    2.0 * x[0] * (1.0 - x[0]) + 2.0 * x[1] * (1.0 - x[1]) + square_u(x)
}

/// Polar angle in `[0, 2π)`.
fn polar(x: [f64; 2]) -> (f64, f64) {
    let r = x[0].hypot(x[1]);
    let mut phi = x[1].atan2(x[0]);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    (r, phi)
}

fn lshape_u(x: [f64; 2]) -> f64 {
    let (r, phi) = polar(x);
    if r == 0.0 {
        return 0.0;
    }
    r.powf(2.0 / 3.0) * (2.0 * phi / 3.0).cos()
}

fn lshape_grad(x: [f64; 2]) -> [f64; 2] {
    let (r, phi) = polar(x);
    if r == 0.0 {
        return [f64::NAN; 2];
    }
    let ur = 2.0 / 3.0 * r.powf(-1.0 / 3.0) * (2.0 * phi / 3.0).cos();
    let uphi = -2.0 / 3.0 * r.powf(-1.0 / 3.0) * (2.0 * phi / 3.0).sin();
    let (c, s) = (phi.cos(), phi.sin());
    [c * ur - s * uphi, s * ur + c * uphi]
}

/// L² errors of one discrete solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorReport {
    pub err_u: f64,
    pub err_sigma: f64,
    /// `None` when no postprocessed field was supplied.
    pub err_u_post: Option<f64>,
}

/// Quadrature exactness used for errors: `2(p+3) + 4 + bump`.
pub fn error_quadrature_degree(order: usize, bump: usize) -> usize {
    2 * (order + 3) + 4 + bump
}

/// Reference points and weights (reference measure) of a rule for integrands
/// singular at reference vertex `k`. The triangle is collapsed onto the unit
/// square with `x = A + s (B - A + t (C - B))` and graded by `s = σ³`, which
/// turns `r^{k/3}` behaviour at `A` into polynomials in `σ`.
fn graded_vertex_rule(k: usize, n: usize) -> Vec<([f64; 2], f64)> {
    const REF: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let (a, b, c) = (REF[k], REF[(k + 1) % 3], REF[(k + 2) % 3]);
    let (gx, gw) = gauss_legendre(n);
    let mut out = Vec::with_capacity(n * n);
    for (&sig, &ws) in gx.iter().zip(&gw) {
        let s = sig * sig * sig;
        // ds = 3σ² dσ and the collapse contributes s; the reference area is 1/2.
        let jac = 3.0 * sig * sig * s;
        for (&t, &wt) in gx.iter().zip(&gw) {
            let x = [a[0] + s * (b[0] - a[0] + t * (c[0] - b[0])), a[1] + s * (b[1] - a[1] + t * (c[1] - b[1]))];
            out.push((x, ws * wt * jac));
        }
    }
    out
}

pub fn error_report(
    mesh: &Mesh,
    solution: &Solution,
    post: Option<&PostprocessedField>,
    problem: &ManufacturedProblem,
    quad_bump: usize,
) -> Result<ErrorReport> {
    let p = solution.trial.order();
    let quad_degree = error_quadrature_degree(p, quad_bump);
    let rule = triangle_quadrature(quad_degree)?;
    let degree = solution.trial.field_degree().max(p + 1);
    let basis = ScalarBasis::new(degree);
    // One column per quadrature point.
    let table = basis.tabulate(&rule.points).values.transpose();
    // The graded rule sees polynomials of three times the degree in σ.
    let graded: Vec<Vec<([f64; 2], f64)>> =
        (0..3).map(|k| graded_vertex_rule(k, (3 * quad_degree + 6) / 2 + 1)).collect();
    let (nu, ns) = (solution.n_u(), solution.n_sigma());
    let npost = post.map(|f| f.coeffs.first().map_or(0, |c| c.len())).unwrap_or(0);
    let parts = (0..mesh.num_elements())
        .into_par_iter()
        .map(|t| {
            let map = ElementMap::new(mesh.corners(t))?;
            let u = solution.u_coeffs(t);
            let (sx, sy) = solution.sigma_coeffs(t);
            let mut acc = [0.0; 3];
            let mut add = |xi: [f64; 2], w: f64, phi: &[f64]| {
                let w = w * map.det;
                let x = map.map(xi);
                let uh: f64 = (0..nu).map(|j| u[j] * phi[j]).sum();
                let sh = [(0..ns).map(|j| sx[j] * phi[j]).sum::<f64>(), (0..ns).map(|j| sy[j] * phi[j]).sum::<f64>()];
                let ue = (problem.exact)(x);
                let ge = (problem.gradient)(x);
                acc[0] += w * (uh - ue).powi(2);
                acc[1] += w * ((sh[0] - ge[0]).powi(2) + (sh[1] - ge[1]).powi(2));
                if let Some(field) = post {
                    let c = &field.coeffs[t];
                    let up: f64 = (0..npost).map(|j| c[j] * phi[j]).sum();
                    acc[2] += w * (up - ue).powi(2);
                }
            };
            let corners = mesh.corners(t);
            let singular_vertex = problem.singular_point.and_then(|s| corners.iter().position(|c| *c == s));
            match singular_vertex {
                Some(k) => {
                    for &(xi, w) in &graded[k] {
                        add(xi, w, &basis.values(xi));
                    }
                }
                None => {
                    for (q, (&xi, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                        add(xi, w, table.column(q).as_slice());
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sums = [0.0; 3];
    for a in parts {
        for i in 0..3 {
            sums[i] += a[i];
        }
    }
    Ok(ErrorReport { err_u: sums[0].sqrt(), err_sigma: sums[1].sqrt(), err_u_post: post.map(|_| sums[2].sqrt()) })
}
