//! Special functions, log-space summation and cubature shared by the
//! statistics modules.

mod bessel;
mod gamma;
mod logsum;
mod quad;

pub use bessel::{bessel_i_scaled, log_bessel_i, log_bessel_i_reduced, SWITCH_MARGIN};
pub use gamma::{ln_factorial, ln_gamma, log_gamma};
pub use logsum::{
    log_sum_exp, signed_log_sum, signed_log_sum_with, LogSum, Neumaier, Sign, SignedLogValue,
    DEFAULT_CANCELLATION_NATS,
};
pub use quad::{quad2d, quad2d_vec, quad2d_with, QuadEstimate, QuadOptions, QuadVecEstimate, Rect};
