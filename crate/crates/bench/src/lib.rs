//! Shared fixtures for the criterion benchmarks.

use dpglab::mesh::Mesh;
use dpglab::problems::ManufacturedProblem;

/// The square benchmark mesh after `levels` uniform refinements.
pub fn square_mesh(levels: usize) -> Mesh {
    let mut mesh = ManufacturedProblem::square_smooth().initial_mesh();
    for _ in 0..levels {
        mesh = mesh.refine_uniform().expect("uniform refinement of a valid mesh");
    }
    mesh
}

/// The L-shape benchmark mesh after `levels` uniform refinements.
pub fn lshape_mesh(levels: usize) -> Mesh {
    let mut mesh = ManufacturedProblem::lshape_singular().initial_mesh();
    for _ in 0..levels {
        mesh = mesh.refine_uniform().expect("uniform refinement of a valid mesh");
    }
    mesh
}
