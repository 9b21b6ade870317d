use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use super::local::LocalSystem;
use super::{Discretization, DofMap, DpgOptions, ProblemKind, TrialSpaceKind};
use crate::error::{Error, Result};
use crate::linalg::{self, SymmetricCsr};
use crate::mesh::Mesh;
use crate::spaces::{edge_bubble, edge_quadrature};

pub type ScalarField<'a> = &'a (dyn Fn([f64; 2]) -> f64 + Sync);

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolverDiagnostics {
    pub linear: linalg::SolverDiagnostics,
    /// `max_j |(Bᵀε)_j|` over free trial unknowns.
    pub orthogonality_defect: f64,
    /// Max-norm of the condensed load (Dirichlet lifting included).
    pub load_scale: f64,
}

impl SolverDiagnostics {
    /// Galerkin orthogonality relative to the load, `0` for a zero load.
    pub fn relative_orthogonality(&self) -> f64 {
        if self.load_scale > 0.0 {
            self.orthogonality_defect / self.load_scale
        } else {
            self.orthogonality_defect
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub trial: TrialSpaceKind,
    pub problem: ProblemKind,
    pub dofs: DofMap,
    /// Per element `[u | σ_x | σ_y]` coefficients in the orthonormal basis.
    pub interior: Vec<DVector<f64>>,
    /// All skeleton unknowns, Dirichlet values included.
    pub skeleton: Vec<f64>,
    /// Residual representer `ε_T` in test-basis coefficients.
    pub residual: Vec<DVector<f64>>,
    /// `η(T)² = ε_Tᵀ G_T ε_T`
    pub local_eta_sq: Vec<f64>,
    pub diagnostics: SolverDiagnostics,
}

impl Solution {
    pub fn n_u(&self) -> usize {
        crate::spaces::dim_p(self.trial.field_degree())
    }

    pub fn n_sigma(&self) -> usize {
        crate::spaces::dim_p(self.trial.order())
    }

    pub fn u_coeffs(&self, t: usize) -> &[f64] {
        &self.interior[t].as_slice()[..self.n_u()]
    }

    pub fn sigma_coeffs(&self, t: usize) -> (&[f64], &[f64]) {
        let (nu, ns) = (self.n_u(), self.n_sigma());
        let s = self.interior[t].as_slice();
        (&s[nu..nu + ns], &s[nu + ns..nu + 2 * ns])
    }

    /// `D_h`
    pub fn total_dofs(&self) -> usize {
        self.dofs.total_dofs()
    }
}

/// Returns `η` and the local contributions `η(T)`.
pub fn estimator(solution: &Solution) -> (f64, Vec<f64>) {
    let total: f64 = solution.local_eta_sq.iter().sum();
    (total.sqrt(), solution.local_eta_sq.iter().map(|e| e.sqrt()).collect())
}

fn map_elements<T, F>(n: usize, parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

fn element_flips(mesh: &Mesh, t: usize) -> [bool; 3] {
    std::array::from_fn(|k| mesh.edge_sign(t, k) < 0.0)
}

/// Element data in Gram-whitened form: with `G = L Lᵀ`, `W = L⁻¹ B` and
/// `z = L⁻¹ F`, the local contribution is the least-squares problem
/// `min ‖z - W x‖`. The interior unknowns are eliminated by projecting onto
/// the orthogonal complement of the interior columns of `W`, which keeps the
/// condensed matrix positive semidefinite by construction and accurate in
/// its near-null directions even on very small elements.
struct WhitenedElement {
    gram_chol: Cholesky<f64, Dyn>,
    w: DMatrix<f64>,
    z: DVector<f64>,
    /// Column scaling of the interior block of `W`.
    int_scale: DVector<f64>,
    /// Thin QR factors of the scaled interior block.
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn whiten_element(disc: &Discretization, mesh: &Mesh, t: usize, f: ScalarField) -> Result<WhitenedElement> {
    let local = LocalSystem::assemble(disc, mesh.corners(t), element_flips(mesh, t), f)?;
    let gram_chol =
        local.gram.clone().cholesky().ok_or(Error::NotPositiveDefinite { what: "test Gram matrix", element: t })?;
    let l = gram_chol.l();
    let w = l.solve_lower_triangular(&local.b).expect("Cholesky factor is invertible");
    let z = l.solve_lower_triangular(&local.load).expect("Cholesky factor is invertible");
    let n_int = disc.n_interior();
    let mut wi = w.columns(0, n_int).into_owned();
    let mut int_scale = DVector::zeros(n_int);
    for (j, mut col) in wi.column_iter_mut().enumerate() {
        let norm = col.norm();
        if !(norm > 0.0) {
            return Err(Error::NotPositiveDefinite { what: "interior block of the condensed matrix", element: t });
        }
        col /= norm;
        int_scale[j] = 1.0 / norm;
    }
    let qr = wi.qr();
    let r = qr.r();
    // A tiny diagonal in R means dependent interior columns.
    if r.diagonal().iter().any(|d| !(d.abs() > 1e-12)) {
        return Err(Error::NotPositiveDefinite { what: "interior block of the condensed matrix", element: t });
    }
    Ok(WhitenedElement { gram_chol, w, z, int_scale, q: qr.q(), r })
}

impl WhitenedElement {
    /// `v - Q Qᵀ v`, column by column.
    fn project(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        v - &self.q * (self.q.tr_mul(v))
    }

    /// Least-squares interior unknowns for the residual target `y`.
    fn interior(&self, y: &DVector<f64>) -> DVector<f64> {
        let c = self.r.solve_upper_triangular(&self.q.tr_mul(y)).expect("R has a nonzero diagonal");
        c.component_mul(&self.int_scale)
    }
}

/// Dirichlet values on all skeleton unknowns (zero on free ones): nodal
/// interpolation at boundary vertices plus the `L²(e)` projection of the
/// remainder onto the edge bubbles.
fn dirichlet_values(mesh: &Mesh, dofs: &DofMap, g: Option<ScalarField>) -> Result<Vec<f64>> {
    let mut values = vec![0.0; dofs.n_skeleton()];
    let Some(g) = g else {
        return Ok(values);
    };
    for (v, on_boundary) in mesh.boundary_vertices().into_iter().enumerate() {
        if on_boundary {
            values[dofs.vertex_dof(v)] = g(mesh.vertices[v]);
        }
    }
    let p = dofs.order;
    if p == 0 {
        return Ok(values);
    }
    let rule = edge_quadrature(2 * (p + 3) + 4)?;
    for (e, edge) in mesh.edges.iter().enumerate().filter(|(_, e)| e.boundary) {
        let [a, b] = edge.vertices;
        let (xa, xb) = (mesh.vertices[a], mesh.vertices[b]);
        let (ga, gb) = (values[a], values[b]);
        let mut mass = DMatrix::zeros(p, p);
        let mut rhs = DVector::zeros(p);
        for (&s, &w) in rule.points.iter().zip(&rule.weights) {
            let x = [xa[0] + s * (xb[0] - xa[0]), xa[1] + s * (xb[1] - xa[1])];
            let remainder = g(x) - (1.0 - s) * ga - s * gb;
            let bub: Vec<f64> = (0..p).map(|j| edge_bubble(j, s)).collect();
            for i in 0..p {
                rhs[i] += w * remainder * bub[i];
                for j in 0..p {
                    mass[(i, j)] += w * bub[i] * bub[j];
                }
            }
        }
        let coeffs = mass
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { what: "edge bubble mass matrix", element: e })?
            .solve(&rhs);
        for j in 0..p {
            values[dofs.bubble_dof(e, j)] = coeffs[j];
        }
    }
    Ok(values)
}

struct Condensed {
    skeleton_dofs: Vec<usize>,
    s_hat: DMatrix<f64>,
    r_hat: DVector<f64>,
    /// `Wᵀ (z - W x_D)`: the condensed load with the Dirichlet lifting.
    lifted_load: DVector<f64>,
}

/// Solves the mixed DPG system on `mesh`. `dirichlet = None` means
/// homogeneous boundary data.
pub fn assemble_solve(
    mesh: &Mesh,
    trial: TrialSpaceKind,
    problem: ProblemKind,
    f: ScalarField,
    dirichlet: Option<ScalarField>,
    opts: &DpgOptions,
) -> Result<Solution> {
    let disc = Discretization::new(trial, problem, opts)?;
    let dofs = DofMap::new(mesh, &disc);
    let g = dirichlet_values(mesh, &dofs, dirichlet)?;
    let n_int = disc.n_interior();
    let n_skel_local = disc.n_skeleton_local();

    let condensed = map_elements(mesh.num_elements(), opts.parallel, |t| {
        let we = whiten_element(&disc, mesh, t, f)?;
        let ws = we.w.columns(n_int, n_skel_local).into_owned();
        let pws = we.project(&ws);
        let pz = we.project(&DMatrix::from_column_slice(we.z.len(), 1, we.z.as_slice())).column(0).into_owned();
        let s_hat = pws.tr_mul(&pws);
        let r_hat = pws.tr_mul(&pz);

        let skeleton_dofs = dofs.element_skeleton_dofs(mesh, t);
        let x_d = DVector::from_iterator(n_skel_local, skeleton_dofs.iter().map(|&d| g[d]));
        let lifted_load = we.w.tr_mul(&(&we.z - &ws * x_d));
        Ok(Condensed { skeleton_dofs, s_hat, r_hat, lifted_load })
    })?;

    let n_free = dofs.n_free_skeleton();
    let mut triplets = Vec::with_capacity(condensed.len() * n_skel_local * (n_skel_local + 1) / 2);
    let mut rhs = vec![0.0; n_free];
    let mut load_free = vec![0.0; n_free];
    let mut load_scale: f64 = 0.0;
    for c in &condensed {
        for (i, &di) in c.skeleton_dofs.iter().enumerate() {
            let Some(fi) = dofs.free(di) else { continue };
            rhs[fi] += c.r_hat[i];
            load_free[fi] += c.lifted_load[n_int + i];
            for (j, &dj) in c.skeleton_dofs.iter().enumerate() {
                match dofs.free(dj) {
                    Some(fj) if fj <= fi => triplets.push((fi, fj, c.s_hat[(i, j)])),
                    Some(_) => {}
                    None => rhs[fi] -= c.s_hat[(i, j)] * g[dj],
                }
            }
        }
        for i in 0..n_int {
            load_scale = load_scale.max(c.lifted_load[i].abs());
        }
    }
    load_scale = load_free.iter().fold(load_scale, |m, v| m.max(v.abs()));
    drop(condensed);

    let matrix = SymmetricCsr::from_triplets(n_free, triplets);
    let (x_free, linear) = linalg::solve_spd(&matrix, &rhs, &opts.solver)?;
    let mut skeleton = g;
    for (d, value) in skeleton.iter_mut().enumerate() {
        if let Some(i) = dofs.free(d) {
            *value = x_free[i];
        }
    }

    struct Recovered {
        interior: DVector<f64>,
        residual: DVector<f64>,
        eta_sq: f64,
        bt_eps: DVector<f64>,
    }
    let recovered = map_elements(mesh.num_elements(), opts.parallel, |t| {
        let we = whiten_element(&disc, mesh, t, f)?;
        let skeleton_dofs = dofs.element_skeleton_dofs(mesh, t);
        let x_s = DVector::from_iterator(n_skel_local, skeleton_dofs.iter().map(|&d| skeleton[d]));
        let ws = we.w.columns(n_int, n_skel_local);
        let target = &we.z - ws * &x_s;
        let interior = we.interior(&target);
        let rho = target - we.w.columns(0, n_int) * &interior;
        let eta_sq = rho.norm_squared();
        let bt_eps = we.w.tr_mul(&rho);
        let residual = we.gram_chol.l().tr_solve_lower_triangular(&rho).expect("Cholesky factor is invertible");
        Ok(Recovered { interior, residual, eta_sq, bt_eps })
    })?;

    let mut orth = vec![0.0; n_free];
    let mut defect: f64 = 0.0;
    for (t, rec) in recovered.iter().enumerate() {
        for i in 0..n_int {
            defect = defect.max(rec.bt_eps[i].abs());
        }
        for (i, d) in dofs.element_skeleton_dofs(mesh, t).into_iter().enumerate() {
            if let Some(fi) = dofs.free(d) {
                orth[fi] += rec.bt_eps[n_int + i];
            }
        }
    }
    defect = orth.iter().fold(defect, |m, v| m.max(v.abs()));

    let mut interior = Vec::with_capacity(recovered.len());
    let mut residual = Vec::with_capacity(recovered.len());
    let mut local_eta_sq = Vec::with_capacity(recovered.len());
    for rec in recovered {
        interior.push(rec.interior);
        residual.push(rec.residual);
        local_eta_sq.push(rec.eta_sq.max(0.0));
    }

    Ok(Solution {
        trial,
        problem,
        dofs,
        interior,
        skeleton,
        residual,
        local_eta_sq,
        diagnostics: SolverDiagnostics { linear, orthogonality_defect: defect, load_scale },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unit_square_mesh;

    #[test]
    fn zero_data_gives_zero_solution() {
        let mesh = unit_square_mesh(3).unwrap();
        let sol = assemble_solve(
            &mesh,
            TrialSpaceKind::Standard(1),
            ProblemKind::ReactionDiffusion,
            &|_| 0.0,
            None,
            &DpgOptions::default(),
        )
        .unwrap();
        assert!(sol.interior.iter().all(|c| c.amax() == 0.0));
        assert!(sol.skeleton.iter().all(|&c| c == 0.0));
        assert!(sol.residual.iter().all(|c| c.amax() == 0.0));
        assert_eq!(estimator(&sol).0, 0.0);
    }

    #[test]
    fn boundary_values_are_prescribed() {
        let mesh = unit_square_mesh(2).unwrap();
        let g = |x: [f64; 2]| x[0] * x[0] - x[1];
        let sol = assemble_solve(
            &mesh,
            TrialSpaceKind::Standard(1),
            ProblemKind::Poisson,
            &|_| -2.0,
            Some(&g),
            &DpgOptions::default(),
        )
        .unwrap();
        let boundary = mesh.boundary_vertices();
        for (v, &b) in boundary.iter().enumerate() {
            if b {
                assert_eq!(sol.skeleton[sol.dofs.vertex_dof(v)], g(mesh.vertices[v]));
            }
        }
        // x² is reproduced on each boundary edge by one quadratic bubble.
        for (e, edge) in mesh.edges.iter().enumerate().filter(|(_, e)| e.boundary) {
            let [a, b] = edge.vertices.map(|v| mesh.vertices[v]);
            let dx = b[0] - a[0];
            // g - linear interpolant = -dx² s(1-s); bubble 0 is s(1-s).
            assert!((sol.skeleton[sol.dofs.bubble_dof(e, 0)] + dx * dx).abs() < 1e-13);
        }
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let mesh = unit_square_mesh(4).unwrap();
        let f = |x: [f64; 2]| (3.0 * x[0]).sin() + x[1];
        let run = |parallel| {
            let opts = DpgOptions { parallel, ..Default::default() };
            assemble_solve(&mesh, TrialSpaceKind::Augmented(1), ProblemKind::ReactionDiffusion, &f, None, &opts)
                .unwrap()
        };
        let (a, b) = (run(false), run(true));
        assert_eq!(a.skeleton, b.skeleton);
        assert_eq!(a.local_eta_sq, b.local_eta_sq);
    }
}
