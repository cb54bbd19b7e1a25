use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Half-width of the conv-weight uniform distribution.
pub const DEFAULT_CONV_INIT_LIMIT: f64 = 0.05;

/// `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn uniform<R: Rng>(shape: &[usize], limit: f64, rng: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::from_parts_unchecked(shape.to_vec(), data)
}

pub fn glorot_uniform<R: Rng>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    uniform(shape, glorot_limit(fan_in, fan_out), rng)
}

/// A seeded `[fan_in, fan_out]` Glorot-uniform weight matrix.
pub fn glorot_uniform_init(fan_in: usize, fan_out: usize, seed: u64) -> Result<Tensor> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::invalid("fans must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(glorot_uniform(&[fan_in, fan_out], fan_in, fan_out, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limit_for_equal_fans_of_100() {
        assert!((glorot_limit(100, 100) - 0.173_205_080_756_887_7).abs() < 1e-12);
    }

    #[test]
    fn samples_are_bounded_and_centered() {
        let t = glorot_uniform_init(100, 1000, 3).unwrap();
        let limit = glorot_limit(100, 1000);
        assert!(t.data().iter().all(|v| v.abs() <= limit));
        let mean = t.sum() / t.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn same_seed_same_weights() {
        assert_eq!(glorot_uniform_init(4, 5, 9).unwrap(), glorot_uniform_init(4, 5, 9).unwrap());
    }
}
