//! Shared workloads for the criterion benchmarks.

use oikf_core::{generate, wna_position_model, LinearGaussianModel, OutlierSpec, SignMode, Trajectory, WnaSpec};

/// Position-only WNA tracking with sparse large outliers (r = 3, p = 0.1,
/// β = 100), the workload used for runtime comparisons.
pub fn gps_like(steps: usize, seed: u64) -> (LinearGaussianModel, Trajectory) {
    let wna = WnaSpec {
        tau: 1.0,
        q_sq: 0.1,
        r_sq: 9.0,
        horizon: steps,
    };
    let model = wna_position_model(&wna).expect("valid WNA spec");
    let outliers = OutlierSpec {
        prob: 0.1,
        rayleigh_scale: 100.0,
        sign_mode: SignMode::RandomSign,
    };
    let traj = generate(&model, &wna, &outliers, seed).expect("valid scenario");
    (model, traj)
}
