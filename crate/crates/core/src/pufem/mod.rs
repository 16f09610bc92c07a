//! Partition-of-unity finite elements in one dimension.

mod assembly;
mod basis;

pub use assembly::{
    assemble_mass, assemble_stiffness, cn_step, evaluate_pdf, functional, project_initial,
    project_with, stiffness_degree, Assembler, PROJECTION_POINTS,
};
pub use basis::{
    legendre, pu_coefficients, pu_function, pu_mother, pu_mother_derivative, shape_derivative,
    shape_eval, Cover, PuBasis,
};
