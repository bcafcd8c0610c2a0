//! Time stepping: Euler splitting and cubature on Wiener space.

pub mod cubature;
pub mod euler;
pub mod ode;
pub mod signature;
pub mod weak;

pub use cubature::{
    degree3_one_dimensional, degree3_straight, verify_cubature, verify_cubature_at,
    CertificationReport, CubatureFormula,
};
pub use euler::{euler_path, euler_split_step, step_increment};
pub use ode::{ode_along_segment, OdeSettings};
pub use signature::{
    brownian_stratonovich_moment, iterated_bv_integral, multi_indices_up_to, MultiIndex,
    PiecewiseLinearPath,
};
pub use weak::{
    cubature_weak_value, euler_weak_value, full_tree_weight_sum, weak_value, BranchPolicy,
    SchemeConfig, SchemeKind, TestFunction, WeakReport,
};
