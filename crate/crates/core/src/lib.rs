#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x <= tol)` also rejects NaN

pub mod linalg;
pub mod polyring;
pub mod semidefinite;
pub mod sos;
pub mod kkt;
pub mod certify;
pub mod densify;
