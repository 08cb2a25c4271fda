//! Penalty-free C⁰ Hermite finite element methods for linear elliptic
//! equations in non-divergence form and Hamilton-Jacobi-Bellman equations
//! under the Cordes condition.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`]: conforming triangulations, uniform meshes and newest-vertex
//!   bisection (including the a priori graded meshes used for boundary
//!   layers).
//! * [`quadrature`]: triangle and edge quadrature rules.
//! * [`fespace`]: the global Hermite space (value and gradient at vertices,
//!   edge and interior moments) with corner-aware boundary constraints.
//! * [`problems`]: coefficient data, Cordes quantities and the four shipped
//!   experiments.
//! * [`forms`]: assembly of the jump-augmented bilinear forms and the HJB
//!   residual.
//! * [`solvers`]: sparse LU and the semismooth Newton loop.
//! * [`analysis`]: broken norms, error norms and convergence orders.
//! * [`runner`]: the experiment driver used by the command line tool.

pub mod analysis;
pub mod error;
pub mod fespace;
pub mod forms;
pub mod geometry;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod runner;
pub mod solvers;

pub use error::{Error, Result};
pub use fespace::HermiteSpace;
pub use geometry::{Point, Sym2};
pub use mesh::Mesh;
