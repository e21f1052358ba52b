//! Derivative-free fixed-point solver for continuous self-maps of a simplex.
//!
//! Vertices of a conforming triangulation are labelled by how the map moves
//! them relative to the corners; cells whose corners carry all labels
//! (Sperner cells) are refined by edge bisection until they shrink onto fixed
//! points. See the README for an overview of the command-line tool.

pub mod cli;
pub mod geometry;
pub mod labeling;
pub mod mesh;
pub mod oracle;
pub mod problems;
pub mod solver;
pub mod trace;
pub mod transform;

pub use geometry::{Barycentric, Point, Simplex};
pub use labeling::{LabelRule, LabelSet, LabelingStrategy};
pub use mesh::Mesh;
pub use problems::Problem;
pub use solver::{solve, SolveResult, Solver, SolverConfig};
