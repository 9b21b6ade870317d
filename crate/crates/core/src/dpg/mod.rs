//! The practical DPG method for the ultra-weak formulation.
//!
//! Trial space on each element: `u ∈ P^p` (or `P^{p+1}` for the augmented
//! space), `σ ∈ (P^p)²`; on the skeleton a continuous piecewise `P^{p+1}`
//! trace `û` and an edgewise `P^p` normal flux `σ̂`. The test space is
//! `P^{p+Δp}(T) × P^{p+Δp}(T)²` with the broken `H¹ × H(div)` inner product.
//!
//! Because the test space is broken, the mixed system for the solution and
//! the residual representer decouples into element blocks: each element
//! contributes `S_T = B_Tᵀ G_T⁻¹ B_T`, the interior field unknowns are
//! condensed out locally, and only the skeleton unknowns are solved for
//! globally. The residual representer `ε_T = G_T⁻¹ (F_T - B_T x_T)` and the
//! local estimator `η(T)² = ε_Tᵀ G_T ε_T` are recovered afterwards.

mod dofs;
mod local;
mod solve;

pub use dofs::{count_dofs, DofMap};
pub use local::{condense, eval_test_function, local_b, local_gram, local_load, LocalSystem, TestValue};
pub use solve::{assemble_solve, estimator, ScalarField, Solution, SolverDiagnostics};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::SolverOptions;
use crate::spaces::{dim_p, edge_quadrature, triangle_quadrature, EdgeRule, QuadratureRule, ScalarBasis};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrialSpaceKind {
    /// `U_hp`: `u ∈ P^p`.
    Standard(usize),
    /// `U_hp^+`: `u ∈ P^{p+1}`, everything else as in `Standard`.
    Augmented(usize),
}

impl TrialSpaceKind {
    pub fn order(&self) -> usize {
        match *self {
            TrialSpaceKind::Standard(p) | TrialSpaceKind::Augmented(p) => p,
        }
    }

    /// Polynomial degree of the scalar field `u_h`.
    pub fn field_degree(&self) -> usize {
        match *self {
            TrialSpaceKind::Standard(p) => p,
            TrialSpaceKind::Augmented(p) => p + 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    /// `-Δu + u = f`
    ReactionDiffusion,
    /// `-Δu = f`
    Poisson,
}

impl ProblemKind {
    fn reaction(&self) -> f64 {
        match self {
            ProblemKind::ReactionDiffusion => 1.0,
            ProblemKind::Poisson => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DpgOptions {
    /// Test degree is `p + enrichment`.
    pub enrichment: usize,
    /// Extra quadrature exactness on top of `2(p+3)`.
    pub quad_bump: usize,
    pub solver: SolverOptions,
    /// Run the elementwise stages on the rayon pool. Results are identical
    /// either way; element results are gathered in element order.
    pub parallel: bool,
}

impl Default for DpgOptions {
    fn default() -> Self {
        DpgOptions { enrichment: 2, quad_bump: 0, solver: SolverOptions::default(), parallel: true }
    }
}

/// Per-discretization reference data shared by all elements.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub trial: TrialSpaceKind,
    pub problem: ProblemKind,
    pub test_degree: usize,
    pub basis: ScalarBasis,
    pub rule: QuadratureRule,
    pub values: DMatrix<f64>,
    pub d_xi: DMatrix<f64>,
    pub d_eta: DMatrix<f64>,
    pub edge_rule: EdgeRule,
    /// Test-basis values on reference edge `k` at the edge quadrature
    /// points, parametrized from local vertex `k+1` to `k+2`.
    pub edge_values: [DMatrix<f64>; 3],
    /// Reference vector test basis: components and divergence at the
    /// quadrature points. Physical fields are its Piola images.
    pub tau_x: DMatrix<f64>,
    pub tau_y: DMatrix<f64>,
    pub tau_div: DMatrix<f64>,
    /// Reference vector test basis on the edges, as `edge_values`.
    pub edge_tau: [(DMatrix<f64>, DMatrix<f64>); 3],
    /// Coefficients of the reference vector basis in terms of
    /// `[(φ_i, 0) | (0, φ_i)]`.
    pub tau_coeffs: DMatrix<f64>,
}

/// Orthonormal eigenvectors of the reference divergence Gram on
/// `(P^k)²`, in ascending eigenvalue order; the leading ones span the
/// divergence-free fields. The scalar basis is `L²`-orthonormal, so this is
/// also an orthonormal basis of `(P^k)²`.
fn divergence_eigenbasis(d_xi: &DMatrix<f64>, d_eta: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let n = d_xi.ncols();
    let mut div = DMatrix::zeros(d_xi.nrows(), 2 * n);
    div.columns_mut(0, n).copy_from(d_xi);
    div.columns_mut(n, n).copy_from(d_eta);
    let mut wdiv = div.clone();
    for (mut row, w) in wdiv.row_iter_mut().zip(weights) {
        row *= *w;
    }
    let k = div.transpose() * wdiv;
    let k = (&k + k.transpose()) * 0.5;
    let eig = k.symmetric_eigen();
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    DMatrix::from_fn(2 * n, 2 * n, |i, j| eig.eigenvectors[(i, order[j])])
}

const REF_CORNERS: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

impl Discretization {
    pub fn new(trial: TrialSpaceKind, problem: ProblemKind, opts: &DpgOptions) -> Result<Self> {
        let p = trial.order();
        let test_degree = p + opts.enrichment;
        if test_degree < trial.field_degree() + 1 {
            return Err(Error::InvalidParameter(format!(
                "test degree {test_degree} cannot control a degree-{} field",
                trial.field_degree()
            )));
        }
        let basis = ScalarBasis::new(test_degree);
        let q = 2 * (test_degree + 1) + opts.quad_bump;
        let rule = triangle_quadrature(q)?;
        let table = basis.tabulate(&rule.points);
        let edge_rule = edge_quadrature(q)?;
        let edge_values = std::array::from_fn(|k| {
            let (a, b) = (REF_CORNERS[(k + 1) % 3], REF_CORNERS[(k + 2) % 3]);
            let pts: Vec<[f64; 2]> =
                edge_rule.points.iter().map(|&t| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]).collect();
            basis.tabulate(&pts).values
        });
        let tau_coeffs = divergence_eigenbasis(&table.d_xi, &table.d_eta, &rule.weights);
        let n = basis.dim();
        let (top, bottom) = (tau_coeffs.rows(0, n), tau_coeffs.rows(n, n));
        let mut tau_div = &table.d_xi * top + &table.d_eta * bottom;
        // Divergence-free modes are exactly divergence-free; drop the rounding.
        let div_norms: Vec<f64> = tau_div.column_iter().map(|c| c.norm()).collect();
        let max_norm = div_norms.iter().cloned().fold(0.0, f64::max);
        for (j, norm) in div_norms.iter().enumerate() {
            if *norm <= 1e-10 * max_norm {
                tau_div.column_mut(j).fill(0.0);
            }
        }
        let edge_tau = std::array::from_fn(|k| (&edge_values[k] * top, &edge_values[k] * bottom));
        Ok(Discretization {
            trial,
            problem,
            test_degree,
            rule,
            tau_x: &table.values * top,
            tau_y: &table.values * bottom,
            tau_div,
            edge_tau,
            values: table.values,
            d_xi: table.d_xi,
            d_eta: table.d_eta,
            edge_rule,
            edge_values,
            tau_coeffs,
            basis,
        })
    }

    pub fn order(&self) -> usize {
        self.trial.order()
    }

    /// Scalar test dimension; the full test space has three times this.
    pub fn n_test_scalar(&self) -> usize {
        dim_p(self.test_degree)
    }

    pub fn n_test(&self) -> usize {
        3 * self.n_test_scalar()
    }

    pub fn n_u(&self) -> usize {
        dim_p(self.trial.field_degree())
    }

    /// Per-component dimension of `σ_h`.
    pub fn n_sigma(&self) -> usize {
        dim_p(self.order())
    }

    pub fn n_interior(&self) -> usize {
        self.n_u() + 2 * self.n_sigma()
    }

    /// Local `û` dofs: three vertex values then `p` bubbles per edge.
    pub fn n_trace_local(&self) -> usize {
        3 + 3 * self.order()
    }

    pub fn n_flux_local(&self) -> usize {
        3 * (self.order() + 1)
    }

    pub fn n_skeleton_local(&self) -> usize {
        self.n_trace_local() + self.n_flux_local()
    }

    pub fn n_trial_local(&self) -> usize {
        self.n_interior() + self.n_skeleton_local()
    }
}
