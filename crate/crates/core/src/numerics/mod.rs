//! Numerical kernels: adaptive quadrature, improper integrals, root
//! finding, memoized cumulative integrals, and ODE integration.

pub mod cumulative;
pub mod ivp;
pub mod quadrature;
pub mod root;

pub use cumulative::{RunningIntegral, TailCache};
pub use ivp::{integrate_ivp, integrate_ivp_fixed, integrate_ivp_steps, Termination, Trajectory};
pub use quadrature::{
    integrate_adaptive, integrate_to_infinity, integrate_to_infinity_with, QuadratureResult,
    TailIntegral,
};
pub use root::find_root_monotone;
