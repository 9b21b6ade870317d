//! Reference-element machinery: quadrature, orthonormal polynomial bases on
//! triangles and edges, affine element maps and local `L²` projection.

pub mod basis;
pub mod element;
pub mod quadrature;

pub use basis::{dim_p, edge_bubble, eval_scalar_basis, BasisTable, EdgeBasis, ScalarBasis};
pub use element::{eval_expansion, project_l2, ElementMap};
pub use quadrature::{edge_quadrature, gauss_legendre, triangle_quadrature, EdgeRule, QuadratureRule};
