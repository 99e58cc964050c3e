//! Dense layers, batch normalization, initialization and optimization.

mod adam;
mod layers;
mod schedule;

pub use adam::{Adam, AdamConfig};
pub use layers::{
    Activation, BatchNorm, BatchStats, Dense, Layer, Mlp, MlpOutput, Mode, BN_EPS, BN_MOMENTUM,
    DEFAULT_LEAKY_SLOPE,
};
pub use schedule::{linear_grid, lr_finder, EarlyStopping, LrSearch, LR_GRID_MAX, LR_GRID_MIN};

use crate::rng::Rng;
use crate::tensor::Matrix;

/// Kaiming (He) normal initialization for a `fan_in x fan_out` weight:
/// entries drawn from `N(0, 2 / fan_in)`.
pub fn kaiming_init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Matrix {
    assert!(fan_in >= 1, "fan_in must be positive");
    let std = (2.0 / fan_in as f64).sqrt();
    Matrix::from_fn(fan_in, fan_out, |_, _| rng.normal() * std)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kaiming_variance() {
        let mut rng = Rng::new(42);
        let w = kaiming_init(10_000, 1, &mut rng);
        let v = w.column_variances()[0];
        assert!((v - 2e-4).abs() < 0.1 * 2e-4, "{v}");
    }

    #[test]
    fn kaiming_is_deterministic() {
        let a = kaiming_init(5, 3, &mut Rng::new(9));
        let b = kaiming_init(5, 3, &mut Rng::new(9));
        assert_eq!(a, b);
    }

    #[test]
    fn biases_and_norm_params_start_canonical() {
        let mut rng = Rng::new(1);
        let net = Mlp::new(&[4, 8, 3], Activation::Softmax, &mut rng).unwrap();
        for l in &net.layers {
            assert!(l.dense.bias.as_slice().iter().all(|&b| b == 0.0));
            if let Some(bn) = &l.norm {
                assert!(bn.scale.as_slice().iter().all(|&s| s == 1.0));
                assert!(bn.shift.as_slice().iter().all(|&s| s == 0.0));
            }
        }
    }
}
