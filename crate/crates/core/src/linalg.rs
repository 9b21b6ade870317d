//! Sparse symmetric positive definite systems: assembly storage, a direct
//! sparse Cholesky solve (faer, with fill-reducing ordering) and a
//! Jacobi-preconditioned conjugate-gradient fallback.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Lower triangle (diagonal included) of a symmetric matrix in CSR layout.
#[derive(Clone, Debug)]
pub struct SymmetricCsr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SymmetricCsr {
    /// Entries above the diagonal are mirrored into the lower triangle and
    /// duplicates are summed. The result does not depend on triplet order
    /// beyond floating-point summation order, which is kept stable.
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        for e in entries.iter_mut() {
            if e.1 > e.0 {
                std::mem::swap(&mut e.0, &mut e.1);
            }
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(entries.len() / 2);
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len() / 2);
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            assert!(i < n, "row index out of range");
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SymmetricCsr { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_lower(&self) -> usize {
        self.vals.len()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for (i, di) in d.iter_mut().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[k] == i {
                    *di += self.vals[k];
                }
            }
        }
        d
    }

    /// `y = A x` using both triangles.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let (j, v) = (self.cols[k], self.vals[k]);
                acc += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
            y[i] += acc;
        }
    }

    /// `S A S` with `S = diag(scale)`: the lower triangle, or both
    /// triangles if `full`.
    fn to_faer(&self, scale: &[f64], full: bool) -> Result<SparseColMat<usize, f64>> {
        let mut trips = Vec::with_capacity(if full { 2 } else { 1 } * self.vals.len());
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                let v = scale[i] * self.vals[k] * scale[j];
                trips.push(Triplet::new(i, j, v));
                if full && i != j {
                    trips.push(Triplet::new(j, i, v));
                }
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &trips)
            .map_err(|e| Error::IndefiniteSystem(format!("sparse matrix creation failed: {e:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverMethod {
    /// Sparse Cholesky with iterative refinement.
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    ConjugateGradient,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub method: SolverMethod,
    pub rel_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { method: SolverMethod::Direct, rel_tol: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolverDiagnostics {
    /// Refinement sweeps (direct) or CG iterations.
    pub iterations: usize,
    pub relative_residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(a: &SymmetricCsr, x: &[f64], b: &[f64], r: &mut [f64]) -> f64 {
    a.matvec(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    norm(r)
}

pub fn solve_spd(a: &SymmetricCsr, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolverDiagnostics)> {
    assert_eq!(a.dim(), b.len());
    let n = a.dim();
    if n == 0 {
        return Ok((Vec::new(), SolverDiagnostics::default()));
    }
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], SolverDiagnostics::default()));
    }
    match opts.method {
        SolverMethod::Direct => direct(a, b, b_norm, opts.rel_tol),
        SolverMethod::ConjugateGradient => pcg(a, b, vec![0.0; n], b_norm, opts.rel_tol),
    }
}

/// Solve with a factorization of the scaled matrix.
type Factor = Box<dyn Fn(&Mat<f64>) -> Mat<f64>>;

fn direct(a: &SymmetricCsr, b: &[f64], b_norm: f64, tol: f64) -> Result<(Vec<f64>, SolverDiagnostics)> {
    faer::set_global_parallelism(faer::Par::Seq);
    let n = a.dim();
    // Symmetric Jacobi equilibration: element sizes on adaptive meshes span
    // many orders of magnitude, and so do the diagonal entries.
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::IndefiniteSystem(format!("non-positive diagonal entry at row {i}")));
    }
    let scale: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    // On strongly graded meshes the matrix can be positive definite only up
    // to rounding; a pivoted LU still gives a usable solution then.
    let mut pivoted = false;
    let factor: Factor = match a.to_faer(&scale, false)?.sp_cholesky(Side::Lower) {
        Ok(llt) => Box::new(move |rhs| llt.solve(rhs)),
        Err(e) => {
            log::info!("sparse Cholesky failed ({e:?}); using sparse LU");
            let lu = a
                .to_faer(&scale, true)?
                .sp_lu()
                .map_err(|e| Error::IndefiniteSystem(format!("sparse factorization failed: {e:?}")))?;
            pivoted = true;
            Box::new(move |rhs| lu.solve(rhs))
        }
    };
    let solve = |rhs: &[f64]| -> Vec<f64> {
        let rhs = Mat::from_fn(n, 1, |i, _| scale[i] * rhs[i]);
        let sol = factor(&rhs);
        (0..n).map(|i| scale[i] * sol[(i, 0)]).collect()
    };
    let mut x = solve(b);
    // xᵀ A x = xᵀ b must be positive for a positive definite A.
    if pivoted && !(x.iter().zip(b).map(|(xi, bi)| xi * bi).sum::<f64>() > 0.0) {
        return Err(Error::IndefiniteSystem("negative energy in the pivoted solve".into()));
    }
    let mut r = vec![0.0; n];
    let mut rel = residual(a, &x, b, &mut r) / b_norm;
    let mut sweeps = 0;
    while rel > tol && sweeps < 3 {
        let dx = solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
        rel = residual(a, &x, b, &mut r) / b_norm;
        sweeps += 1;
    }
    if rel > tol {
        log::warn!("direct solve reached relative residual {rel:e}; switching to CG");
        return pcg(a, b, x, b_norm, tol);
    }
    Ok((x, SolverDiagnostics { iterations: sweeps, relative_residual: rel }))
}

fn pcg(a: &SymmetricCsr, b: &[f64], x: Vec<f64>, b_norm: f64, tol: f64) -> Result<(Vec<f64>, SolverDiagnostics)> {
    let cap = (50.0 * (a.dim() as f64).sqrt()).ceil() as usize;
    pcg_capped(a, b, x, b_norm, tol, cap)
}

fn pcg_capped(
    a: &SymmetricCsr,
    b: &[f64],
    mut x: Vec<f64>,
    b_norm: f64,
    tol: f64,
    cap: usize,
) -> Result<(Vec<f64>, SolverDiagnostics)> {
    let n = a.dim();
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::IndefiniteSystem(format!("non-positive diagonal entry at row {i}")));
    }
    let mut r = vec![0.0; n];
    let mut rel = residual(a, &x, b, &mut r) / b_norm;
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut it = 0;
    while rel > tol {
        if it >= cap {
            return Err(Error::SolverDiverged { iterations: it, residual: rel });
        }
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap == 0.0 {
            return Err(Error::SolverDiverged { iterations: it, residual: rel });
        }
        if !(pap > 0.0) {
            return Err(Error::IndefiniteSystem(format!("CG curvature {pap:e} at iteration {it}")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        rel = norm(&r) / b_norm;
    }
    // Guard against drift of the recursively updated residual.
    let rel_true = residual(a, &x, b, &mut r) / b_norm;
    if rel_true > 10.0 * tol {
        return Err(Error::SolverDiverged { iterations: it, residual: rel_true });
    }
    Ok((x, SolverDiagnostics { iterations: it, relative_residual: rel_true }))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1D Laplacian with Dirichlet ends, n unknowns.
    fn laplace(n: usize) -> SymmetricCsr {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i + 1, i, -1.0));
            }
        }
        SymmetricCsr::from_triplets(n, t)
    }

    #[test]
    fn duplicates_are_summed_and_mirrored() {
        let a = SymmetricCsr::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 1.0), (0, 1, -1.0), (1, 1, 3.0)]);
        assert_eq!(a.nnz_lower(), 3);
        let mut y = [0.0; 2];
        a.matvec(&[1.0, 1.0], &mut y);
        assert_eq!(y, [1.0, 2.0]);
    }

    #[test]
    fn direct_and_cg_agree() {
        let n = 200;
        let a = laplace(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let (x1, d1) = solve_spd(&a, &b, &SolverOptions::default()).unwrap();
        let (x2, d2) =
            solve_spd(&a, &b, &SolverOptions { method: SolverMethod::ConjugateGradient, rel_tol: 1e-12 }).unwrap();
        assert!(d1.relative_residual <= 1e-10 && d2.relative_residual <= 1e-11);
        let diff = x1.iter().zip(&x2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = x1.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8 * scale);
    }

    #[test]
    fn indefinite_is_reported() {
        let a = SymmetricCsr::from_triplets(2, vec![(0, 0, 1.0), (1, 0, 2.0), (1, 1, 1.0)]);
        let r = solve_spd(&a, &[1.0, 0.0], &SolverOptions::default());
        assert!(matches!(r, Err(Error::IndefiniteSystem(_))));
    }

    #[test]
    fn cg_iteration_cap() {
        let a = laplace(400);
        let b = vec![1.0; 400];
        let r = pcg_capped(&a, &b, vec![0.0; 400], norm(&b), 1e-10, 5);
        assert!(matches!(r, Err(Error::SolverDiverged { .. })));
    }
}
