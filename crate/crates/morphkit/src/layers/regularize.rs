//! Training-time regularizers. Both are identities at inference, keeping
//! inference deterministic.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Additive zero-centered Gaussian noise on every element.
pub fn gaussian_noise<R: Rng>(
    tape: &mut Tape,
    x: Var,
    sigma: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    if sigma < 0.0 {
        return Err(Error::invalid("gaussian_noise: sigma must be >= 0"));
    }
    if !training || sigma == 0.0 {
        return Ok(x);
    }
    let shape = tape.value(x).shape().to_vec();
    let dist = Normal::new(0.0, sigma).expect("sigma validated");
    let n: usize = shape.iter().product();
    let noise = Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect())?;
    let noise = tape.constant(noise);
    tape.add(x, noise)
}

/// Inverted dropout: zero with probability `rate`, scale survivors by
/// `1/(1-rate)` so expectations match inference.
pub fn dropout<R: Rng>(
    tape: &mut Tape,
    x: Var,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        return Ok(x);
    }
    let shape = tape.value(x).shape().to_vec();
    let keep = 1.0 - rate;
    let n: usize = shape.iter().product();
    let mask = Tensor::new(
        shape,
        (0..n)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / keep })
            .collect(),
    )?;
    let mask = tape.constant(mask);
    tape.mul(x, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(99)
    }

    #[test]
    fn zero_sigma_and_inference_are_identity() {
        let mut r = rng();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let same = gaussian_noise(&mut tape, x, 0.0, true, &mut r).unwrap();
        assert_eq!(tape.value(same).data(), &[1.0, 2.0, 3.0]);
        let same = gaussian_noise(&mut tape, x, 0.1, false, &mut r).unwrap();
        assert_eq!(tape.value(same).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn noise_sample_mean_is_near_zero() {
        let mut r = rng();
        let n = 100_000;
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[n]));
        let sigma = 0.1;
        let noised = gaussian_noise(&mut tape, x, sigma, true, &mut r).unwrap();
        let mean = tape.value(noised).data().iter().sum::<f64>() / n as f64;
        let bound = 3.0 * sigma / (n as f64).sqrt();
        assert!(mean.abs() < bound, "mean {mean} outside {bound}");
    }

    #[test]
    fn dropout_identity_cases_and_bad_rate() {
        let mut r = rng();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![4.0, 5.0]));
        let same = dropout(&mut tape, x, 0.0, true, &mut r).unwrap();
        assert_eq!(tape.value(same).data(), &[4.0, 5.0]);
        let same = dropout(&mut tape, x, 0.5, false, &mut r).unwrap();
        assert_eq!(tape.value(same).data(), &[4.0, 5.0]);
        assert!(dropout(&mut tape, x, 1.0, true, &mut r).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut r = rng();
        let n = 200_000;
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[n]));
        let dropped = dropout(&mut tape, x, 0.5, true, &mut r).unwrap();
        let mean = tape.value(dropped).data().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean} drifted from 1.0");
    }
}
