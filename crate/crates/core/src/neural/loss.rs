use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::tensor::{log_softmax, Scalar};
use super::NeuralError;

/// `-log softmax(logits)[target]` and its gradient `softmax - onehot`.
pub fn cross_entropy<T: Scalar>(logits: &[T], target: usize) -> (T, Vec<T>) {
    assert!(target < logits.len(), "target {target} out of {} classes", logits.len());
    let logp = log_softmax(logits);
    let mut grad: Vec<T> = logp.iter().map(|l| l.exp()).collect();
    grad[target] -= T::one();
    (-logp[target], grad)
}

/// Squared error and its derivative with respect to `pred`.
pub fn value_loss<T: Scalar>(pred: T, target: T) -> (T, T) {
    let d = pred - target;
    (d * d, d + d)
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax_action<T: Scalar>(logits: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Draws from `softmax(logits / temperature)`.
pub fn sample_action<T: Scalar, R: Rng + ?Sized>(
    logits: &[T],
    temperature: f64,
    rng: &mut R,
) -> Result<usize, NeuralError> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(NeuralError::Temperature(temperature));
    }
    if logits.is_empty() || logits.iter().any(|v| !v.is_finite()) {
        return Err(NeuralError::NonFinite);
    }
    let max = logits.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
    let weights = logits.iter().map(|v| ((v.f64() - max) / temperature).exp());
    let dist = WeightedIndex::new(weights).map_err(|_| NeuralError::NonFinite)?;
    Ok(dist.sample(rng))
}

/// `log softmax(logits)[index]` computed in double precision.
pub fn log_prob<T: Scalar>(logits: &[T], index: usize) -> f64 {
    let l: Vec<f64> = logits.iter().map(|v| v.f64()).collect();
    log_softmax(&l)[index]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_cross_entropy_is_log_k() {
        let (loss, grad) = cross_entropy(&vec![0.0f64; 4673], 17);
        assert!((loss - 4673f64.ln()).abs() < 1e-12);
        assert!(grad.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn confident_cross_entropy_is_near_zero() {
        let mut l = vec![0.0f32; 10];
        l[3] = 50.0;
        assert!(cross_entropy(&l, 3).0 < 1e-6);
    }

    #[test]
    fn value_loss_examples() {
        assert_eq!(value_loss(1.0f64, 1.0), (0.0, 0.0));
        assert_eq!(value_loss(0.0f64, -1.0).0, 1.0);
        assert_eq!(value_loss(0.0f64, 1.0).1, -2.0);
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_action(&[0.0f32, 0.0, 10.0]), 2);
        assert_eq!(argmax_action(&[5.0f32, 5.0]), 0);
    }

    #[test]
    fn non_positive_temperature_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for t in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                sample_action(&[0.0f32, 1.0], t, &mut rng),
                Err(NeuralError::Temperature(_))
            ));
        }
    }

    #[test]
    fn extreme_logits_still_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_action(&[-1e4f32, 1e4, 0.0], 1.0, &mut rng).unwrap(), 1);
    }
}
