//! Default-scenario fixtures shared by the unit tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fisher::{compute_sensing_matrices, SensingMatrices};
use crate::model::{
    rician_channel, ChannelMatrix, GaussianMixture, SystemConfig, TargetEnvironment, UserGeometry,
};
use crate::numerics::QuadratureSpec;

pub(crate) fn scenario_cfg(n_tx: usize) -> SystemConfig<f64> {
    SystemConfig {
        n_tx,
        n_rx: 12,
        n_user: 8,
        symbols: 25,
        power_w: 1.0,
        noise_comm_w: 1e-12,
        noise_sense_w: 1e-12,
        spacing_over_lambda: 0.5,
        bs_height_m: 10.0,
        target_range_m: 50.0,
    }
}

pub(crate) fn scenario_prior() -> GaussianMixture<f64> {
    GaussianMixture::from_parts(
        &[0.31, 0.24, 0.28, 0.17],
        &[-0.74, -0.54, 0.75, 0.95],
        &[10f64.powf(-2.5), 1e-2, 1e-2, 10f64.powf(-2.5)],
    )
    .unwrap()
}

/// Normalised receive SNR of −5 dB.
pub(crate) fn scenario_env(cfg: &SystemConfig<f64>) -> TargetEnvironment<f64> {
    TargetEnvironment::from_normalized_snr(10f64.powf(-0.5), cfg).unwrap()
}

pub(crate) fn scenario_geometry() -> UserGeometry<f64> {
    UserGeometry {
        rician_k: 10f64.powf(-0.8),
        ref_loss: 1e-3,
        exponent: 3.5,
        user_range_m: 400.0,
        user_height_m: 1.0,
        user_angle: 0.36,
    }
}

pub(crate) fn scenario_channel(cfg: &SystemConfig<f64>, seed: u64) -> ChannelMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rician_channel(cfg, &scenario_geometry(), &mut rng).unwrap()
}

pub(crate) fn scenario_matrices(cfg: &SystemConfig<f64>) -> SensingMatrices<f64> {
    compute_sensing_matrices(&scenario_prior(), cfg, &QuadratureSpec::default()).unwrap()
}
