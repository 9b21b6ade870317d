use super::Discretization;
use crate::mesh::Mesh;

const FIXED: usize = usize::MAX;

/// Numbering of trial unknowns.
///
/// Interior unknowns `(u, σ)` are element-local and never numbered globally.
/// Skeleton unknowns are laid out as: one `û` value per vertex, then `p` `û`
/// bubble modes per edge, then `p+1` `σ̂` modes per edge. `û` unknowns on
/// the Dirichlet boundary are fixed; everything else is free.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub order: usize,
    pub n_elements: usize,
    pub n_vertices: usize,
    pub n_edges: usize,
    /// Interior unknowns per element.
    pub n_interior: usize,
    free_index: Vec<usize>,
    n_free: usize,
}

impl DofMap {
    pub fn new(mesh: &Mesh, disc: &Discretization) -> Self {
        let p = disc.order();
        let (nv, ne) = (mesh.num_vertices(), mesh.num_edges());
        let n_skel = nv + ne * p + ne * (p + 1);
        let mut fixed = vec![false; n_skel];
        for (v, on_boundary) in mesh.boundary_vertices().into_iter().enumerate() {
            fixed[v] = on_boundary;
        }
        for (e, edge) in mesh.edges.iter().enumerate() {
            if edge.boundary {
                for j in 0..p {
                    fixed[nv + e * p + j] = true;
                }
            }
        }
        let mut n_free = 0;
        let free_index = fixed
            .iter()
            .map(|&f| {
                if f {
                    FIXED
                } else {
                    n_free += 1;
                    n_free - 1
                }
            })
            .collect();
        DofMap {
            order: p,
            n_elements: mesh.num_elements(),
            n_vertices: nv,
            n_edges: ne,
            n_interior: disc.n_interior(),
            free_index,
            n_free,
        }
    }

    pub fn n_skeleton(&self) -> usize {
        self.free_index.len()
    }

    pub fn n_free_skeleton(&self) -> usize {
        self.n_free
    }

    /// `D_h`: number of free trial unknowns (interior plus skeleton).
    pub fn total_dofs(&self) -> usize {
        self.n_elements * self.n_interior + self.n_free
    }

    pub fn vertex_dof(&self, v: usize) -> usize {
        v
    }

    pub fn bubble_dof(&self, e: usize, j: usize) -> usize {
        self.n_vertices + e * self.order + j
    }

    pub fn flux_dof(&self, e: usize, j: usize) -> usize {
        self.n_vertices + self.n_edges * self.order + e * (self.order + 1) + j
    }

    pub fn free(&self, dof: usize) -> Option<usize> {
        match self.free_index[dof] {
            FIXED => None,
            i => Some(i),
        }
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.free_index[dof] == FIXED
    }

    /// Global skeleton dofs of element `t` in local order
    /// `[3 vertices | p bubbles × 3 edges | (p+1) flux modes × 3 edges]`.
    pub fn element_skeleton_dofs(&self, mesh: &Mesh, t: usize) -> Vec<usize> {
        let p = self.order;
        let mut dofs = Vec::with_capacity(3 + 3 * p + 3 * (p + 1));
        dofs.extend(mesh.triangles[t].vertices.iter().map(|&v| self.vertex_dof(v)));
        for &e in &mesh.element_edges[t] {
            dofs.extend((0..p).map(|j| self.bubble_dof(e, j)));
        }
        for &e in &mesh.element_edges[t] {
            dofs.extend((0..=p).map(|j| self.flux_dof(e, j)));
        }
        dofs
    }
}

/// `D_h` for `trial` on `mesh` without building the full map.
pub fn count_dofs(mesh: &Mesh, trial: super::TrialSpaceKind) -> usize {
    let p = trial.order();
    let n_interior = crate::spaces::dim_p(trial.field_degree()) + 2 * crate::spaces::dim_p(p);
    let free_vertices = mesh.boundary_vertices().iter().filter(|&&b| !b).count();
    let free_edges = mesh.edges.iter().filter(|e| !e.boundary).count();
    mesh.num_elements() * n_interior + free_vertices + p * free_edges + (p + 1) * mesh.num_edges()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpg::{DpgOptions, ProblemKind, TrialSpaceKind};
    use crate::mesh::unit_square_mesh;

    #[test]
    fn counts_on_two_by_two_square() {
        let mesh = unit_square_mesh(2).unwrap();
        let disc =
            Discretization::new(TrialSpaceKind::Standard(1), ProblemKind::Poisson, &DpgOptions::default()).unwrap();
        let map = DofMap::new(&mesh, &disc);
        // 9 vertices, 16 edges (8 on the boundary), p = 1
        assert_eq!(map.n_skeleton(), 9 + 16 + 32);
        // free: 1 interior vertex, 8 interior bubbles, all 32 flux modes
        assert_eq!(map.n_free_skeleton(), 1 + 8 + 32);
        assert_eq!(map.total_dofs(), 8 * 9 + 41);
        assert_eq!(count_dofs(&mesh, TrialSpaceKind::Standard(1)), map.total_dofs());
        let dofs = map.element_skeleton_dofs(&mesh, 0);
        assert_eq!(dofs.len(), disc.n_skeleton_local());
        let mut sorted = dofs.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), dofs.len());
    }
}
