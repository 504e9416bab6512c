pub mod ccmetric;
pub mod eigen;
pub mod error;
pub mod expr;
pub mod fields;
pub mod linalg;
pub mod mesh;
pub mod operators;
pub mod semilinear;
pub mod verify;

pub use error::{Error, Result};
pub use fields::{Polynomial, PolynomialField, VectorFieldFamily};
pub use mesh::{GridDomain, GridField, NodeClass};
pub use operators::SparseOperator;
