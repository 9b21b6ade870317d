//! Bulk (Dörfler) marking and the `SOLVE → ESTIMATE → MARK → REFINE` loop.

use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkParams {
    /// Bulk parameter `θ ∈ (0, 1)`.
    pub theta: f64,
}

impl Default for MarkParams {
    fn default() -> Self {
        MarkParams { theta: 0.25 }
    }
}

impl MarkParams {
    pub fn new(theta: f64) -> Result<Self> {
        if theta > 0.0 && theta < 1.0 {
            Ok(MarkParams { theta })
        } else {
            Err(Error::InvalidParameter(format!("theta must lie in (0, 1), got {theta}")))
        }
    }
}

/// Smallest set `M` with `θ Σ η(T)² ≤ Σ_{T∈M} η(T)²`, chosen greedily by
/// decreasing `η(T)` with ties going to the lower index. Returned in
/// ascending index order; empty if every estimate is zero.
pub fn mark(local_eta: &[f64], theta: f64) -> Vec<usize> {
    debug_assert!(local_eta.iter().all(|&e| e >= 0.0));
    let total: f64 = local_eta.iter().map(|e| e * e).sum();
    if total == 0.0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..local_eta.len()).collect();
    order.sort_by(|&a, &b| local_eta[b].total_cmp(&local_eta[a]).then(a.cmp(&b)));
    let threshold = theta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for t in order {
        marked.push(t);
        acc += local_eta[t] * local_eta[t];
        if acc >= threshold {
            break;
        }
    }
    marked.sort_unstable();
    marked
}

/// One pass through the loop.
#[derive(Clone, Debug)]
pub struct AdaptiveStep {
    pub mesh: Mesh,
    pub dofs: usize,
    pub eta: f64,
    pub local_eta: Vec<f64>,
    pub marked: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct AdaptiveRun {
    pub steps: Vec<AdaptiveStep>,
}

impl AdaptiveRun {
    pub fn final_mesh(&self) -> Option<&Mesh> {
        self.steps.last().map(|s| &s.mesh)
    }
}

/// Runs at most `max_steps` solves, never solving on a mesh whose `D_h`
/// (as given by `count_dofs`) exceeds `max_dofs`; the first mesh is always
/// solved. `solve` receives the step index and mesh and returns `η(T)`.
/// Stops early when all estimates vanish.
pub fn adaptive_loop<C, S>(
    initial: Mesh,
    params: MarkParams,
    max_steps: usize,
    max_dofs: usize,
    count_dofs: C,
    mut solve: S,
) -> Result<AdaptiveRun>
where
    C: Fn(&Mesh) -> usize,
    S: FnMut(usize, &Mesh) -> Result<Vec<f64>>,
{
    let mut run = AdaptiveRun::default();
    let mut mesh = initial;
    for step in 0..max_steps {
        let dofs = count_dofs(&mesh);
        if step > 0 && dofs > max_dofs {
            break;
        }
        if let Some(prev) = run.steps.last() {
            assert!(dofs > prev.dofs, "D_h must grow under refinement");
        }
        let local_eta = solve(step, &mesh)?;
        let eta = local_eta.iter().map(|e| e * e).sum::<f64>().sqrt();
        let marked = mark(&local_eta, params.theta);
        assert!(eta == 0.0 || !marked.is_empty());
        let next = if marked.is_empty() || step + 1 == max_steps { None } else { Some(mesh.refine_marked(&marked)?) };
        run.steps.push(AdaptiveStep { mesh, dofs, eta, local_eta, marked });
        match next {
            Some(m) => mesh = m,
            None => break,
        }
    }
    Ok(run)
}
