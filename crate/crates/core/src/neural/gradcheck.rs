//! Central finite-difference verification of the analytic backward pass.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy, value_loss};
use super::net::{Cache, Heads, NetworkConfig, OutputGrad, PolicyValueNet, Weights};
use super::NeuralError;
use crate::encoding::{PlaneStack, FRAME_PLANES, HISTORY_LEN, MOVE_ACTIONS, SENSE_ACTIONS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckConfig {
    pub net: NetworkConfig,
    pub batch: usize,
    pub step: f64,
    /// Coordinates checked per array (all of them for smaller arrays).
    pub samples_per_tensor: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            net: NetworkConfig::tiny(),
            batch: 2,
            step: 1e-4,
            samples_per_tensor: 48,
            tolerance: 1e-4,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    /// Coordinates whose perturbation flipped a rectifier, where the loss
    /// is not differentiable.
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    /// Per array; an array whose every sampled coordinate sat on a kink
    /// has `checked == 0`.
    pub tensors: Vec<TensorCheck>,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

struct Problem {
    inputs: Vec<PlaneStack>,
    sense_targets: Vec<usize>,
    move_targets: Vec<usize>,
    value_targets: Vec<f64>,
}

impl Problem {
    fn random(batch: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut inputs = Vec::with_capacity(batch);
        for _ in 0..batch {
            let mut s = PlaneStack::zeros();
            let mut frame = [0u64; FRAME_PLANES];
            for slot in 0..HISTORY_LEN {
                for p in frame.iter_mut() {
                    // About 1.5% of squares set.
                    *p = rng.random::<u64>() & rng.random::<u64>() & rng.random::<u64>()
                        & rng.random::<u64>() & rng.random::<u64>() & rng.random::<u64>();
                }
                s.set_frame(slot, &frame);
            }
            inputs.push(s);
        }
        Self {
            inputs,
            sense_targets: (0..batch).map(|_| rng.random_range(0..SENSE_ACTIONS)).collect(),
            move_targets: (0..batch).map(|_| rng.random_range(0..MOVE_ACTIONS)).collect(),
            value_targets: (0..batch).map(|_| rng.random_range(-1..=1) as f64).collect(),
        }
    }

    /// Summed sense CE, move CE and value error over the batch.
    fn loss(&self, net: &PolicyValueNet<f64>) -> (f64, Vec<Cache<f64>>) {
        let mut total = 0.0;
        let mut caches = Vec::with_capacity(self.inputs.len());
        for (i, x) in self.inputs.iter().enumerate() {
            let (out, cache) = net.forward_one(x, Heads::ALL);
            total += cross_entropy(&out.sense_logits, self.sense_targets[i]).0;
            total += cross_entropy(&out.move_logits, self.move_targets[i]).0;
            total += value_loss(out.value, self.value_targets[i]).0;
            caches.push(cache);
        }
        (total, caches)
    }

    fn gradient(&self, net: &PolicyValueNet<f64>) -> Weights<f64> {
        let mut grads = Weights::zeros(&net.config);
        for (i, x) in self.inputs.iter().enumerate() {
            let (out, cache) = net.forward_one(x, Heads::ALL);
            let g = OutputGrad {
                sense: Some(cross_entropy(&out.sense_logits, self.sense_targets[i]).1),
                moves: Some(cross_entropy(&out.move_logits, self.move_targets[i]).1),
                value: value_loss(out.value, self.value_targets[i]).1,
            };
            net.backward(x, &cache, &g, &mut grads);
        }
        grads
    }
}

/// A net with every parameter random, including the arrays that normally
/// start at zero, so every layer carries gradient.
pub fn randomized_net(config: NetworkConfig, rng: &mut ChaCha8Rng) -> Result<PolicyValueNet<f64>, NeuralError> {
    let mut net = PolicyValueNet::<f64>::new(config)?;
    for t in net.weights.tensors_mut() {
        let shape = t.shape().to_vec();
        let std = if shape.len() >= 2 {
            1.0 / (shape[..shape.len() - 1].iter().product::<usize>() as f64).sqrt()
        } else {
            0.1
        };
        for v in t.data_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += z * std;
        }
    }
    Ok(net)
}

pub fn gradcheck(config: &GradcheckConfig) -> Result<GradcheckReport, NeuralError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = randomized_net(config.net.clone(), &mut rng)?;
    let problem = Problem::random(config.batch, &mut rng);
    let analytic = problem.gradient(&net);
    let names: Vec<String> = analytic.named().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.data().to_vec()).collect();

    let mut tensors = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let grad = &analytic[ti];
        // Mostly coordinates with signal, plus a few arbitrary ones that
        // must come out as zero.
        let nonzero: Vec<usize> = (0..grad.len()).filter(|&i| grad[i] != 0.0).collect();
        let mut coords: Vec<usize> = if nonzero.len() <= config.samples_per_tensor {
            nonzero
        } else {
            sample(&mut rng, nonzero.len(), config.samples_per_tensor)
                .into_iter()
                .map(|k| nonzero[k])
                .collect()
        };
        let extra = (config.samples_per_tensor / 4).min(grad.len());
        coords.extend(sample(&mut rng, grad.len(), extra).into_iter());
        coords.sort_unstable();
        coords.dedup();

        let mut check = TensorCheck {
            name: name.clone(),
            checked: 0,
            skipped_kinks: 0,
            max_rel_error: 0.0,
        };
        for i in coords {
            let original = net.weights.tensors_mut()[ti].data()[i];
            net.weights.tensors_mut()[ti].data_mut()[i] = original + config.step;
            let (plus, cache_plus) = problem.loss(&net);
            net.weights.tensors_mut()[ti].data_mut()[i] = original - config.step;
            let (minus, cache_minus) = problem.loss(&net);
            net.weights.tensors_mut()[ti].data_mut()[i] = original;
            if cache_plus.iter().zip(&cache_minus).any(|(a, b)| !a.same_pattern(b)) {
                check.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * config.step);
            check.checked += 1;
            check.max_rel_error = check.max_rel_error.max(relative_error(grad[i], numeric));
        }
        tensors.push(check);
    }
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    let checked = tensors.iter().map(|t| t.checked).sum();
    Ok(GradcheckReport {
        skipped_kinks: tensors.iter().map(|t| t.skipped_kinks).sum(),
        checked,
        max_rel_error,
        tolerance: config.tolerance,
        passed: checked > 0 && max_rel_error < config.tolerance,
        tensors,
    })
}
