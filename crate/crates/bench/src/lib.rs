//! Benchmark fixtures shared by the criterion targets.

use trimode::GsnParams;

/// Photocount-level coefficients of the measured state.
pub fn photoelectron() -> GsnParams {
    GsnParams::new(87.765104, 92.861384, 90.371968, 13.3665).expect("valid parameters")
}

/// Photon-level coefficients of the measured state.
pub fn photon() -> GsnParams {
    GsnParams::new(313.447, 331.648, 322.757, 13.3665).expect("valid parameters")
}

/// A small classical state used for the quadrature and sampling benches.
pub fn classical() -> GsnParams {
    GsnParams::new(3.0, 4.0, 3.0, 5.0).expect("valid parameters")
}
