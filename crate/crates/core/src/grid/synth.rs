use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{GridError, Measurement, MeasurementGrid};
use crate::lawfit::ParametricLaw;

/// Learning rate recorded on synthetic rows.
pub const SYNTH_LEARNING_RATE: f64 = 1e-3;

/// Floor applied to noisy synthetic losses.
const LOSS_FLOOR: f64 = 1e-3;

/// Raw grid sampled from `law` at every `(M, T, σ̄)` node, with `T`
/// converted to examples by the law's examples-per-step, plus Gaussian noise
/// of standard deviation `noise_sd` drawn from a ChaCha8 stream seeded by
/// `seed`. Cells are visited in `(M, T, σ̄)` order.
pub fn synth_grid(
    law: &ParametricLaw,
    axes: (&[u64], &[u64], &[f64]),
    noise_sd: f64,
    seed: u64,
) -> Result<MeasurementGrid, GridError> {
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(GridError::InvalidInput("noise standard deviation must be finite and nonnegative"));
    }
    let (ms, ts, nbrs) = axes;
    let noise = Normal::new(0.0, noise_sd).map_err(|_| GridError::InvalidInput("bad noise level"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(ms.len() * ts.len() * nbrs.len());
    for &m in ms {
        for &t in ts {
            for &nbr in nbrs {
                let clean = law.predict_at_iterations(m as f64, t as f64, nbr);
                let loss = if noise_sd > 0.0 { (clean + noise.sample(&mut rng)).max(LOSS_FLOOR) } else { clean };
                rows.push(Measurement {
                    model_params: m,
                    iterations: t,
                    noise_batch_ratio: nbr,
                    learning_rate: SYNTH_LEARNING_RATE,
                    loss,
                });
            }
        }
    }
    MeasurementGrid::load(&rows)
}
