//! Independent reference implementations used only by tests.
//!
//! Each oracle recomputes a result the library also produces, by a different
//! route: exact dynamic programming instead of Lloyd iterations, a direct
//! sliding-window convolution instead of im2col + GEMM, element-by-element
//! fetch counting instead of closed-form traffic formulas.

pub mod access;
pub mod conv;
pub mod gemm;
pub mod kmeans_dp;
pub mod toy;
