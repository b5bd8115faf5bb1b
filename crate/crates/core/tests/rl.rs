use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbc_core::arena::Head;
use rbc_core::encoding::{ObservationHistory, Stage, MOVE_ACTIONS, SENSE_ACTIONS};
use rbc_core::engine::Color;
use rbc_core::game::GameSetup;
use rbc_core::neural::{log_prob, randomized_net, AdamConfig, NetworkConfig, OptimizerState, PolicyValueNet};
use rbc_core::rl::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn random_net(seed: u64) -> Arc<PolicyValueNet<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Arc::new(randomized_net(NetworkConfig::tiny(), &mut rng).unwrap().cast())
}

fn step(head: Head, reward: f64, value: f64) -> TrajectoryStep {
    TrajectoryStep {
        input: rbc_core::encoding::PlaneStack::zeros(),
        head,
        action: 0,
        logprob: -1.0,
        value_pred: value,
        reward,
        advantage: 0.0,
        return_: 0.0,
    }
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
}

#[test]
fn pool_probability_examples() {
    assert!(close(&opponent_probabilities(&[0.8, 0.2]), &[0.2, 0.8]));
    assert!(close(&opponent_probabilities(&[0.5, 0.25, 0.25]), &[0.25, 0.375, 0.375]));
    assert!(close(&opponent_probabilities(&[0.3]), &[1.0]));
    assert!(close(&opponent_probabilities(&[0.0, 0.0, 0.0]), &[1.0 / 3.0; 3]));
    assert!(opponent_probabilities(&[]).is_empty());
}

proptest! {
    #[test]
    fn pool_probabilities_form_a_distribution(w in proptest::collection::vec(0.0f64..=1.0, 1..12)) {
        let p = opponent_probabilities(&w);
        prop_assert_eq!(p.len(), w.len());
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gae_matches_the_direct_sum(
        rewards in proptest::collection::vec(-1.0f64..1.0, 1..30),
        values in proptest::collection::vec(-1.0f64..1.0, 30),
        gamma in 0.5f64..=1.0,
        lambda in 0.0f64..=1.0,
    ) {
        let mut steps: Vec<_> = rewards.iter().zip(&values).map(|(&r, &v)| step(Head::Move, r, v)).collect();
        compute_gae(&mut steps, gamma, lambda);
        let n = steps.len();
        let v = |t: usize| if t < n { values[t] } else { 0.0 };
        for t in 0..n {
            let want: f64 = (t..n)
                .map(|k| (gamma * lambda).powi((k - t) as i32) * (rewards[k] + gamma * v(k + 1) - v(k)))
                .sum();
            prop_assert!((steps[t].advantage - want).abs() < 1e-9);
            prop_assert!((steps[t].return_ - (want + values[t])).abs() < 1e-9);
        }
    }
}

/// Pearson statistic against `p`, skipping zero-probability cells, which
/// must stay empty.
fn chi_square(counts: &[u64], p: &[f64]) -> (f64, usize) {
    let n: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0;
    for (&c, &pi) in counts.iter().zip(p) {
        if pi == 0.0 {
            assert_eq!(c, 0);
            continue;
        }
        let e = n as f64 * pi;
        stat += (c as f64 - e).powi(2) / e;
        cells += 1;
    }
    (stat, cells)
}

#[test]
fn pool_sampling_frequencies_pass_chi_square() {
    let cases: Vec<(Vec<Vec<f64>>, Vec<f64>)> = vec![
        (vec![vec![1.0]], vec![1.0]),
        (vec![vec![1.0, 1.0, 1.0, 1.0, 0.0], vec![1.0, 0.0, 0.0, 0.0, 0.0]], vec![0.2, 0.8]),
        (vec![vec![1.0, 0.0], vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]], vec![0.25, 0.375, 0.375]),
        (vec![vec![0.0], vec![0.0], vec![0.0]], vec![1.0 / 3.0; 3]),
        (vec![vec![0.0], vec![0.0]], vec![0.5, 0.5]),
    ];
    for (i, (results, want)) in cases.into_iter().enumerate() {
        let mut pool = OpponentPool::new(500);
        for (j, rs) in results.iter().enumerate() {
            let id = format!("s{j}");
            pool.add(id.clone()).unwrap();
            for &r in rs {
                pool.record_result(&id, r).unwrap();
            }
        }
        assert!(close(&pool.probabilities(), &want), "case {i}: {:?}", pool.probabilities());
        let ids: Vec<String> = pool.ids().map(String::from).collect();
        let mut counts = vec![0u64; ids.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        for _ in 0..100_000 {
            let id = pool.sample(&mut rng).unwrap();
            counts[ids.iter().position(|x| x == id).unwrap()] += 1;
        }
        let (stat, cells) = chi_square(&counts, &want);
        if cells > 1 {
            let critical = ChiSquared::new((cells - 1) as f64).unwrap().inverse_cdf(0.99);
            assert!(stat < critical, "case {i}: {stat} >= {critical}, {counts:?}");
        } else {
            assert_eq!(counts.iter().sum::<u64>(), 100_000);
        }
    }
}

#[test]
fn pool_results_use_a_ring_buffer() {
    let mut pool = OpponentPool::new(500);
    pool.add("a").unwrap();
    assert_eq!(pool.win_rate("a").unwrap(), 0.5);
    for _ in 0..500 {
        pool.record_result("a", 1.0).unwrap();
    }
    pool.record_result("a", 0.0).unwrap();
    assert_eq!(pool.win_rate("a").unwrap(), 499.0 / 500.0);
    let r = pool.results("a").unwrap();
    assert_eq!(r.len(), 500);
    assert_eq!(r[499], 0.0);
    assert!(pool.win_rate("b").is_err());
}

#[test]
fn rewards_touch_only_the_final_pair() {
    let mk = || vec![
        step(Head::Sense, 5.0, 0.0),
        step(Head::Move, 5.0, 0.0),
        step(Head::Sense, 5.0, 0.0),
        step(Head::Move, 5.0, 0.0),
    ];
    for (score, want) in [(1.0, [0.0, 0.0, 1.0, 1.0]), (0.0, [0.0, 0.0, -1.0, -1.0]), (0.5, [0.0; 4])] {
        let mut s = mk();
        assign_rewards(&mut s, score);
        assert_eq!(s.iter().map(|x| x.reward).collect::<Vec<_>>(), want);
        assert_eq!(s[2].head, Head::Sense);
    }
}

#[test]
fn gae_closed_forms() {
    // gamma = lambda = 1, zero values, one terminal reward: every advantage is 1.
    let mut s: Vec<_> = (0..6).map(|_| step(Head::Move, 0.0, 0.0)).collect();
    s[5].reward = 1.0;
    compute_gae(&mut s, 1.0, 1.0);
    assert!(s.iter().all(|x| (x.advantage - 1.0).abs() < 1e-12));

    // lambda = 1, zero values: discounted sum of future rewards.
    let rewards = [0.5, 0.0, -1.0, 2.0];
    let mut s: Vec<_> = rewards.iter().map(|&r| step(Head::Move, r, 0.0)).collect();
    compute_gae(&mut s, 0.9, 1.0);
    for t in 0..4 {
        let want: f64 = (t..4).map(|k| 0.9f64.powi((k - t) as i32) * rewards[k]).sum();
        assert!((s[t].advantage - want).abs() < 1e-12);
    }

    let mut s: Vec<_> = (0..5).map(|_| step(Head::Sense, 0.0, 0.0)).collect();
    compute_gae(&mut s, 0.99, 0.95);
    assert!(s.iter().all(|x| x.advantage == 0.0 && x.return_ == 0.0));
}

#[test]
fn normalized_advantages_have_zero_mean_unit_variance() {
    let mut s: Vec<_> = (0..10).map(|_| step(Head::Move, 0.0, 0.0)).collect();
    for (i, x) in s.iter_mut().enumerate() {
        x.advantage = i as f64 * 0.3 - 1.0;
    }
    normalize_advantages(&mut s);
    let mean = s.iter().map(|x| x.advantage).sum::<f64>() / 10.0;
    let var = s.iter().map(|x| x.advantage * x.advantage).sum::<f64>() / 10.0;
    assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
}

fn surrogate_step(logits: &[f64], action: usize, logprob_shift: f64, advantage: f64) -> TrajectoryStep {
    let mut s = step(Head::Sense, 0.0, 0.0);
    s.action = action;
    s.logprob = log_prob(logits, action) - logprob_shift;
    s.advantage = advantage;
    s.return_ = 0.3;
    s
}

#[test]
fn surrogate_at_ratio_one_is_the_mean_advantage() {
    let cfg = PpoConfig {
        entropy_coef: 0.0,
        value_coef: 0.0,
        ..PpoConfig::default()
    };
    let logits: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
    let advs = [0.7, -1.2, 0.1, 2.0];
    let mut total = 0.0;
    for (i, &a) in advs.iter().enumerate() {
        let s = surrogate_step(&logits, i * 7, 0.0, a);
        let (l, _, _) = surrogate(&logits, 0.0, &s, &cfg, advs.len(), advs.len());
        assert!((l.ratio - 1.0).abs() < 1e-12);
        assert!(!l.clipped);
        total += l.policy;
    }
    let mean = advs.iter().sum::<f64>() / advs.len() as f64;
    assert!((total + mean).abs() < 1e-12);
}

#[test]
fn surrogate_clips_and_bounds() {
    let cfg = PpoConfig {
        entropy_coef: 0.0,
        ..PpoConfig::default()
    };
    let logits: Vec<f64> = (0..64).map(|i| (i as f64 * 0.11).cos()).collect();
    // ratio = 1 + 2 eps with a positive advantage: capped, no policy gradient.
    let shift = (1.0 + 2.0 * cfg.clip).ln();
    let s = surrogate_step(&logits, 5, shift, 1.5);
    let (l, g, _) = surrogate(&logits, 0.3, &s, &cfg, 1, 1);
    assert!(l.clipped);
    assert!((l.policy + (1.0 + cfg.clip) * 1.5).abs() < 1e-9);
    assert!(g.iter().all(|&x| x == 0.0));
    // Any ratio: the surrogate never exceeds (1 + eps)|A| in magnitude on
    // the gain side.
    for k in -30..30 {
        for a in [-2.0, -0.5, 0.5, 2.0] {
            let s = surrogate_step(&logits, 9, k as f64 * 0.1, a);
            let (l, _, _) = surrogate(&logits, 0.0, &s, &cfg, 1, 1);
            assert!(l.policy.is_finite());
            assert!(-l.policy <= (1.0 + cfg.clip) * f64::abs(a) + 1e-12);
        }
    }
}

#[test]
fn surrogate_gradient_matches_finite_differences() {
    let cfg = PpoConfig::default();
    let logits: Vec<f64> = (0..64).map(|i| (i as f64 * 0.53).sin() * 2.0).collect();
    for (shift, adv) in [(0.05, 1.3), (-0.1, -0.8), (0.0, 0.4)] {
        let s = surrogate_step(&logits, 17, shift, adv);
        let value = 0.1;
        let (_, g, gv) = surrogate(&logits, value, &s, &cfg, 3, 5);
        let total = |z: &[f64], v: f64| {
            let (l, _, _) = surrogate(z, v, &s, &cfg, 3, 5);
            l.policy - cfg.entropy_coef * l.entropy + l.value
        };
        let h = 1e-6;
        for j in [0, 17, 40, 63] {
            let mut zp = logits.clone();
            let mut zm = logits.clone();
            zp[j] += h;
            zm[j] -= h;
            let num = (total(&zp, value) - total(&zm, value)) / (2.0 * h);
            assert!((num - g[j]).abs() < 1e-7, "logit {j}: {num} vs {}", g[j]);
        }
        let num = (total(&logits, value + h) - total(&logits, value - h)) / (2.0 * h);
        assert!((num - gv).abs() < 1e-7);
    }
}

#[test]
fn positive_advantage_raises_the_chosen_logprob() {
    let net = random_net(3);
    let setup = GameSetup::new("one", 11);
    let ep = play_episode(&net, &net, Color::White, &setup).unwrap();
    for head in [Head::Sense, Head::Move] {
        let mut s = ep.steps.iter().find(|s| s.head == head).unwrap().clone();
        s.advantage = 1.0;
        let mut trained = (*net).clone();
        let before = {
            let (out, _) = trained.forward_one(&s.input, head.heads());
            log_prob(&head.logits(out), s.action)
        };
        let cfg = PpoConfig {
            update_epochs: 1,
            entropy_coef: 0.0,
            value_coef: 0.0,
            adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
            ..PpoConfig::default()
        };
        let mut opt = OptimizerState::new(&trained.config, cfg.adam);
        ppo_update(&mut trained, &mut opt, std::slice::from_ref(&s), &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let (out, _) = trained.forward_one(&s.input, head.heads());
        let after = log_prob(&head.logits(out), s.action);
        assert!(after > before, "{head:?}: {before} -> {after}");
    }
}

#[test]
fn episodes_alternate_heads_and_come_from_the_trainers_stream() {
    let trainer = random_net(5);
    let opponent = random_net(6);
    for (i, color) in [Color::White, Color::Black].into_iter().enumerate() {
        let ep = play_episode(&trainer, &opponent, color, &GameSetup::new("e", 40 + i as u64)).unwrap();
        let turns = &ep.record.side(color).turns;
        assert_eq!(ep.steps.len(), 2 * turns.len());
        assert_eq!(ep.record.result.value_for(color) as f64, 2.0 * ep.score - 1.0);
        rbc_core::record::validate(&ep.record).unwrap();

        // Rebuild every input from the trainer's own recorded stream.
        let mut h = ObservationHistory::new(color);
        for (t, entry) in turns.iter().enumerate() {
            let (sense, mv) = (&ep.steps[2 * t], &ep.steps[2 * t + 1]);
            assert_eq!(sense.head, Head::Sense);
            assert_eq!(mv.head, Head::Move);
            assert!(sense.action < SENSE_ACTIONS && mv.action < MOVE_ACTIONS);
            assert!(sense.logprob <= 0.0 && mv.logprob <= 0.0);
            assert_eq!(sense.action, entry.sense.center().index());
            h.start_turn(entry.opp_capture).unwrap();
            assert_eq!(sense.input, h.encode(Stage::PreSense).unwrap());
            h.record_sense(entry.sense, &entry.sense_outcome()).unwrap();
            assert_eq!(mv.input, h.encode(Stage::PreMove).unwrap());
            h.record_move(&entry.move_outcome()).unwrap();
        }
    }
}

#[test]
fn eval_matchup_is_reproducible_and_symmetric() {
    let a = random_net(7);
    let b = random_net(8);
    assert!(matches!(eval_matchup(&a, &b, 0, 1), Err(RlError::NoGames)));
    let x = eval_matchup(&a, &b, 20, 3).unwrap();
    let y = eval_matchup(&a, &b, 20, 3).unwrap();
    assert_eq!(x, y);
    assert!((0.0..=1.0).contains(&x));
    // Argmax against itself: the same game with colors swapped every time.
    let s = eval_matchup(&a, &a, 40, 9).unwrap();
    assert!((s - 0.5).abs() <= 3.0 * (0.25f64 / 40.0).sqrt(), "{s}");
}

#[test]
fn trainer_iterations_are_reproducible_and_snapshot() {
    let cfg = PpoConfig {
        games_per_iteration: 4,
        minibatch_size: 64,
        update_epochs: 1,
        snapshot_threshold: 0.0,
        warmup: 4,
        seed: 21,
        ..PpoConfig::default()
    };
    let run = || {
        let mut t = RlTrainer::new((*random_net(1)).clone(), cfg.clone()).unwrap();
        let mut games = 0;
        let stats = t.run_iteration(|_| games += 1).unwrap();
        (t, stats, games)
    };
    let (t1, s1, games) = run();
    let (t2, s2, _) = run();
    assert_eq!(games, 4);
    assert_eq!(s1, s2);
    assert_eq!(t1.net().weights, t2.net().weights);
    assert!(s1.ppo.policy_loss.is_finite() && s1.ppo.value_loss.is_finite());
    assert_eq!(s1.new_snapshot.as_deref(), Some("snapshot-001"));
    assert_eq!(t1.pool().len(), 2);
    assert_eq!(t1.snapshot("snapshot-001").unwrap().weights, t1.net().weights);
    assert_ne!(t1.snapshot("snapshot-000").unwrap().weights, t1.net().weights);
}

#[test]
fn invalid_ppo_configs_are_rejected() {
    for cfg in [
        PpoConfig { clip: 0.0, ..PpoConfig::default() },
        PpoConfig { gamma: 1.5, ..PpoConfig::default() },
        PpoConfig { lambda: 0.0, ..PpoConfig::default() },
        PpoConfig { minibatch_size: 0, ..PpoConfig::default() },
    ] {
        assert!(cfg.validate().is_err());
    }
    let net = (*random_net(2)).clone();
    let mut opt = OptimizerState::new(&net.config, AdamConfig::default());
    let mut n = net.clone();
    assert!(matches!(
        ppo_update(&mut n, &mut opt, &[], &PpoConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)),
        Err(RlError::EmptyBatch)
    ));
}
