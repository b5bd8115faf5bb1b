use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbc_core::encoding::{PlaneStack, FRAME_PLANES};
use rbc_core::neural::*;

fn random_stack(rng: &mut ChaCha8Rng) -> PlaneStack {
    let mut s = PlaneStack::zeros();
    let mut frame = [0u64; FRAME_PLANES];
    for slot in 0..20 {
        for p in frame.iter_mut() {
            *p = rng.random::<u64>() & rng.random::<u64>() & rng.random::<u64>() & rng.random::<u64>();
        }
        s.set_frame(slot, &frame);
    }
    s
}

fn random_net(seed: u64, config: NetworkConfig) -> PolicyValueNet<f64> {
    randomized_net(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Direct dense evaluation from the published weight layouts, written
/// with plain nested loops and no shared helpers.
fn naive_forward(net: &PolicyValueNet<f64>, x: &PlaneStack) -> (Vec<f64>, Vec<f64>, f64) {
    let w = &net.weights;
    let c = net.config.trunk_channels;
    let dense: Vec<f64> = x.to_dense().iter().map(|&v| v as f64).collect();
    let relu = |v: f64| if v > 0.0 { v } else { 0.0 };
    // act[ch][rank][file]
    let mut act = vec![vec![vec![0.0; 8]; 8]; c];
    for o in 0..c {
        for r in 0..8 {
            for f in 0..8 {
                let mut z = w.input_b.data()[o];
                for ch in 0..1800 {
                    z += dense[ch * 64 + r * 8 + f] * w.input_w.data()[ch * c + o];
                }
                act[o][r][f] = relu(z);
            }
        }
    }
    let conv = |inp: &Vec<Vec<Vec<f64>>>, wt: &[f64], b: &[f64]| {
        let mut out = vec![vec![vec![0.0; 8]; 8]; c];
        for o in 0..c {
            for r in 0..8i32 {
                for f in 0..8i32 {
                    let mut z = b[o];
                    for dy in -1..=1i32 {
                        for dx in -1..=1i32 {
                            let (rr, ff) = (r + dy, f + dx);
                            if !(0..8).contains(&rr) || !(0..8).contains(&ff) {
                                continue;
                            }
                            let tap = ((dy + 1) * 3 + (dx + 1)) as usize;
                            for i in 0..c {
                                z += inp[i][rr as usize][ff as usize] * wt[(tap * c + i) * c + o];
                            }
                        }
                    }
                    out[o][r as usize][f as usize] = z;
                }
            }
        }
        out
    };
    for b in &w.blocks {
        let mut h = conv(&act, b.conv1_w.data(), b.conv1_b.data());
        for plane in h.iter_mut().flatten().flatten() {
            *plane = relu(*plane);
        }
        let y = conv(&h, b.conv2_w.data(), b.conv2_b.data());
        for o in 0..c {
            for r in 0..8 {
                for f in 0..8 {
                    act[o][r][f] = relu(act[o][r][f] + y[o][r][f]);
                }
            }
        }
    }
    let head = |h: &PolicyHead<f64>| {
        let hc = h.conv_b.len();
        let actions = h.fc_b.len();
        let mut flat = vec![0.0; 64 * hc];
        for s in 0..64 {
            for j in 0..hc {
                let mut z = h.conv_b.data()[j];
                for i in 0..c {
                    z += act[i][s / 8][s % 8] * h.conv_w.data()[i * hc + j];
                }
                flat[s * hc + j] = relu(z);
            }
        }
        (0..actions)
            .map(|a| {
                h.fc_b.data()[a] + (0..64 * hc).map(|k| flat[k] * h.fc_w.data()[k * actions + a]).sum::<f64>()
            })
            .collect::<Vec<f64>>()
    };
    let v = &w.value;
    let vh: Vec<f64> = (0..64)
        .map(|s| relu(v.conv_b.data()[0] + (0..c).map(|i| act[i][s / 8][s % 8] * v.conv_w.data()[i]).sum::<f64>()))
        .collect();
    let hidden = net.config.value_hidden;
    let z: Vec<f64> = (0..hidden)
        .map(|j| relu(v.fc1_b.data()[j] + (0..64).map(|s| vh[s] * v.fc1_w.data()[s * hidden + j]).sum::<f64>()))
        .collect();
    let value = (v.fc2_b.data()[0] + (0..hidden).map(|j| z[j] * v.fc2_w.data()[j]).sum::<f64>()).tanh();
    (head(&w.sense), head(&w.moves), value)
}

#[test]
fn forward_matches_naive_dense_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = NetworkConfig { trunk_blocks: 2, ..NetworkConfig::tiny() };
    let net = random_net(2, cfg);
    for _ in 0..2 {
        let x = random_stack(&mut rng);
        let out = &net.forward(std::slice::from_ref(&x))[0];
        let (s, m, v) = naive_forward(&net, &x);
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(p, q)| (p - q).abs() < 1e-9);
        assert!(close(&out.sense_logits, &s));
        assert!(close(&out.move_logits, &m));
        assert!((out.value - v).abs() < 1e-9);
    }
}

#[test]
fn zero_weight_net_outputs_zero() {
    let net = PolicyValueNet::<f32>::zeros(NetworkConfig::tiny()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for out in net.forward(&[random_stack(&mut rng), PlaneStack::zeros()]) {
        assert!(out.sense_logits.iter().chain(&out.move_logits).all(|&v| v == 0.0));
        assert_eq!(out.value, 0.0);
        assert_eq!((out.sense_logits.len(), out.move_logits.len()), (64, 4673));
    }
}

#[test]
fn value_is_bounded_even_with_huge_weights() {
    let mut net = random_net(4, NetworkConfig::tiny());
    net.weights.scale(50.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let out = &net.forward(&[random_stack(&mut rng)])[0];
        assert!((-1.0..=1.0).contains(&out.value));
    }
}

#[test]
fn batch_rows_are_independent() {
    let net = random_net(6, NetworkConfig::tiny());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch: Vec<PlaneStack> = (0..3).map(|_| random_stack(&mut rng)).collect();
    let before = net.forward(&batch);
    let mut perturbed = batch.clone();
    perturbed[1] = random_stack(&mut rng);
    let after = net.forward(&perturbed);
    assert_eq!(before[0], after[0]);
    assert_eq!(before[2], after[2]);
    assert_ne!(before[1], after[1]);
}

#[test]
fn forward_is_bit_reproducible() {
    let a = PolicyValueNet::<f32>::new(NetworkConfig::tiny()).unwrap();
    let b = PolicyValueNet::<f32>::new(NetworkConfig::tiny()).unwrap();
    assert_eq!(a, b);
    let x = random_stack(&mut ChaCha8Rng::seed_from_u64(8));
    let (mut ra, mut rb) = (random_net(9, NetworkConfig::tiny()), random_net(9, NetworkConfig::tiny()));
    assert_eq!(ra.forward(std::slice::from_ref(&x)), rb.forward(std::slice::from_ref(&x)));
    ra.weights.scale(1.0);
    rb.weights.scale(1.0);
    assert_eq!(ra.forward(std::slice::from_ref(&x))[0].value.to_bits(), rb.forward(&[x])[0].value.to_bits());
}

#[test]
fn gradcheck_tiny_config() {
    let r = gradcheck(&GradcheckConfig::default()).unwrap();
    assert!(r.passed, "max rel error {}", r.max_rel_error);
    assert!(r.max_rel_error < 1e-4);
    assert_eq!(r.tensors.len(), 20);
    assert!(r.tensors.iter().all(|t| t.checked > 0));
}

#[test]
fn gradcheck_deeper_config_and_other_seeds() {
    for seed in [1, 2] {
        let cfg = GradcheckConfig {
            net: NetworkConfig { trunk_blocks: 2, trunk_channels: 3, ..NetworkConfig::tiny() },
            batch: 3,
            samples_per_tensor: 16,
            seed,
            ..GradcheckConfig::default()
        };
        let r = gradcheck(&cfg).unwrap();
        assert!(r.passed, "seed {seed}: {:#?}", r);
        let covered = r.tensors.iter().filter(|t| t.checked > 0).count();
        assert!(covered + 1 >= r.tensors.len(), "seed {seed}: {:#?}", r);
    }
}

fn example_grads(net: &PolicyValueNet<f64>, x: &PlaneStack, scale: f64, heads: Heads) -> Weights<f64> {
    let (out, cache) = net.forward_one(x, heads);
    let g = OutputGrad {
        sense: heads.sense.then(|| cross_entropy(&out.sense_logits, 9).1.iter().map(|v| v * scale).collect()),
        moves: heads.moves.then(|| cross_entropy(&out.move_logits, 1000).1.iter().map(|v| v * scale).collect()),
        value: value_loss(out.value, 1.0).1 * scale,
    };
    let mut grads = Weights::zeros(&net.config);
    net.backward(x, &cache, &g, &mut grads);
    grads
}

#[test]
fn doubling_the_loss_doubles_gradients() {
    let net = random_net(10, NetworkConfig::tiny());
    let x = random_stack(&mut ChaCha8Rng::seed_from_u64(11));
    let one = example_grads(&net, &x, 1.0, Heads::ALL);
    let two = example_grads(&net, &x, 2.0, Heads::ALL);
    for (a, b) in one.tensors().iter().zip(two.tensors()) {
        for (p, q) in a.data().iter().zip(b.data()) {
            assert_eq!(2.0 * p, *q);
        }
    }
    assert_eq!(one, example_grads(&net, &x, 1.0, Heads::ALL));
}

#[test]
fn skipping_a_head_matches_a_zero_gradient_on_it() {
    let net = random_net(12, NetworkConfig::tiny());
    let x = random_stack(&mut ChaCha8Rng::seed_from_u64(13));
    let sense_only = example_grads(&net, &x, 1.0, Heads::SENSE);
    let (out, cache) = net.forward_one(&x, Heads::ALL);
    let g = OutputGrad {
        sense: Some(cross_entropy(&out.sense_logits, 9).1),
        moves: Some(vec![0.0; 4673]),
        value: value_loss(out.value, 1.0).1,
    };
    let mut full = Weights::zeros(&net.config);
    net.backward(&x, &cache, &g, &mut full);
    for (a, b) in sense_only.tensors().iter().zip(full.tensors()) {
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }
    let (skipped, _) = net.forward_one(&x, Heads::SENSE);
    assert!(skipped.move_logits.is_empty());
    assert_eq!(skipped.sense_logits, out.sense_logits);
}

#[test]
fn uniform_cross_entropy_over_moves() {
    let (loss, grad) = cross_entropy(&[0.0f32; 4673], 123);
    assert!((loss as f64 - 4673f64.ln()).abs() < 1e-4);
    assert!((4673f64.ln() - 8.4497).abs() < 5e-4);
    assert!(grad.iter().map(|&v| v as f64).sum::<f64>().abs() < 1e-5);
}

#[test]
fn uniform_sampling_frequencies_within_three_sigma() {
    let k = 10;
    let n = 100_000;
    let mut counts = vec![0usize; k];
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let logits = vec![0.0f32; k];
    for _ in 0..n {
        counts[sample_action(&logits, 1.0, &mut rng).unwrap()] += 1;
    }
    let p = 1.0 / k as f64;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{c}");
    }
}

#[test]
fn temperature_sharpens_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let logits = [0.0f64, 1.0];
    let hits = (0..10_000).filter(|_| sample_action(&logits, 0.1, &mut rng).unwrap() == 1).count();
    // p = 1 / (1 + e^-10)
    assert!(hits > 9_990);
}

#[test]
fn checkpoint_file_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    let mut net = PolicyValueNet::<f32>::new(NetworkConfig::tiny()).unwrap();
    net.weights.sense.fc_b.data_mut()[3] = f32::from_bits(0x3f80_0001);
    let mut ckpt = Checkpoint::new(net);
    ckpt.meta.games_played = 7;
    save_checkpoint(&path, &ckpt).unwrap();
    let back = load_checkpoint(&path).unwrap();
    for (a, b) in back.net.weights.tensors().iter().zip(ckpt.net.weights.tensors()) {
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
    assert_eq!(back.meta.games_played, 7);

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 100]).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(NeuralError::Corrupt(_))));

    let mut future = bytes.clone();
    future[8..12].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
    std::fs::write(&path, &future).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(NeuralError::Version { .. })));

    assert!(matches!(load_checkpoint(dir.path().join("missing")), Err(NeuralError::Io(_))));
}

#[test]
fn training_steps_reduce_loss_on_a_fixed_example() {
    let mut net = PolicyValueNet::<f32>::new(NetworkConfig::tiny()).unwrap();
    let x = random_stack(&mut ChaCha8Rng::seed_from_u64(16));
    let mut opt = OptimizerState::new(&net.config, AdamConfig { lr: 0.01, ..Default::default() });
    let loss = |net: &PolicyValueNet<f32>| {
        let (out, _) = net.forward_one(&x, Heads::ALL);
        cross_entropy(&out.move_logits, 76).0 + cross_entropy(&out.sense_logits, 20).0 + value_loss(out.value, 1.0).0
    };
    let initial = loss(&net);
    for _ in 0..30 {
        let (out, cache) = net.forward_one(&x, Heads::ALL);
        let g = OutputGrad {
            sense: Some(cross_entropy(&out.sense_logits, 20).1),
            moves: Some(cross_entropy(&out.move_logits, 76).1),
            value: value_loss(out.value, 1.0).1,
        };
        let mut grads = Weights::zeros(&net.config);
        net.backward(&x, &cache, &g, &mut grads);
        opt.step(&mut net.weights, &grads).unwrap();
    }
    let fin = loss(&net);
    assert!(fin < initial * 0.5, "{initial} -> {fin}");
    let out = &net.forward(&[x])[0];
    assert_eq!(argmax_action(&out.move_logits), 76);
    assert_eq!(argmax_action(&out.sense_logits), 20);
}

proptest! {
    #[test]
    fn softmax_is_normalized_and_shift_invariant(
        logits in prop::collection::vec(-30.0f64..30.0, 1..50),
        shift in -100.0f64..100.0,
    ) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        let q = softmax(&shifted);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-6);
        }
        prop_assert_eq!(argmax_action(&logits), argmax_action(&shifted));
    }

    #[test]
    fn cross_entropy_gradient_sums_to_zero(
        logits in prop::collection::vec(-20.0f64..20.0, 2..40),
        pick in 0usize..1000,
    ) {
        let t = pick % logits.len();
        let (loss, grad) = cross_entropy(&logits, t);
        prop_assert!(loss >= 0.0);
        prop_assert!(grad.iter().sum::<f64>().abs() < 1e-9);
        prop_assert!(grad[t] <= 0.0);
    }

    #[test]
    fn argmax_picks_first_maximum(logits in prop::collection::vec(-3i32..3, 1..20)) {
        let l: Vec<f32> = logits.iter().map(|&v| v as f32).collect();
        let max = l.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        prop_assert_eq!(argmax_action(&l), l.iter().position(|&v| v == max).unwrap());
    }
}
