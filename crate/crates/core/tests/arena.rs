use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbc_core::arena::{
    inner_squares, relative_elo, run_match, run_spec_match, BotSpec, GreedyBot, RandomBot,
};
use rbc_core::engine::{self, Color, Move, Piece, PieceKind, SenseAction, Square};
use rbc_core::game::{play_game, rerun_side, GameSetup, Player};
use rbc_core::record::validate;

fn sq(s: &str) -> Square {
    s.parse().unwrap()
}

#[test]
fn random_bot_opens_with_a_legal_move_and_senses_inside() {
    let legal = engine::legal_moves(&engine::initial_state()).unwrap();
    assert_eq!(legal.len(), 20);
    for seed in 0..200 {
        let mut bot = RandomBot::new(0.0);
        bot.handle_game_start(Color::White, seed);
        bot.handle_opponent_move_result(None);
        let sense = bot.choose_sense();
        let c = sense.center();
        assert!((1..=6).contains(&c.file()) && (1..=6).contains(&c.rank()), "{c}");
        let state = engine::initial_state();
        bot.handle_sense_result(sense, &engine::apply_sense(&state, sense));
        let mv = bot.choose_move();
        assert!(legal.contains(&mv), "{mv}");
    }
}

#[test]
fn random_bot_sense_covers_the_inner_squares_uniformly() {
    let inner = inner_squares();
    assert_eq!(inner.len(), 36);
    let mut counts = [0u32; 64];
    let n = 36_000;
    let mut bot = RandomBot::new(0.0);
    bot.handle_game_start(Color::Black, 9);
    let state = engine::initial_state();
    for _ in 0..n {
        bot.handle_opponent_move_result(None);
        let sense = bot.choose_sense();
        counts[sense.center().index()] += 1;
        bot.handle_sense_result(sense, &engine::apply_sense(&state, sense));
        let mv = bot.choose_move();
        assert_ne!(mv, Move::Pass);
        // Pretend every request was illegal so the own board stays put.
        let (_, outcome) = engine::request_move(&state.clone().with_turn_cap(1000), Move::Pass).unwrap();
        bot.handle_move_result(mv, &outcome);
    }
    // Each cell is Binomial(n, 1/36): mean 1000, sd about 31.
    for s in &inner {
        let c = counts[s.index()] as f64;
        assert!((c - 1000.0).abs() < 5.0 * 31.0, "{s}: {c}");
    }
    assert_eq!(counts.iter().sum::<u32>(), n);
}

#[test]
fn greedy_bot_takes_a_seen_king_with_the_queen() {
    let mut bot = GreedyBot::new(0.0);
    bot.handle_game_start(Color::White, 1);
    let mut state = engine::initial_state();

    bot.handle_opponent_move_result(None);
    let s = SenseAction(sq("d6"));
    bot.handle_sense_result(s, &engine::apply_sense(&state, s));
    let _ = bot.choose_move();
    let e4 = Move::new(sq("e2"), sq("e4"));
    let (next, outcome) = engine::request_move(&state, e4).unwrap();
    bot.handle_move_result(e4, &outcome);
    state = next;
    state = engine::request_move(&state, Move::Pass).unwrap().0;

    // The only piece that reaches h5 is the queen along d1-h5.
    state.clear(sq("e8"));
    state.put(sq("h5"), Piece::new(Color::Black, PieceKind::King));
    bot.handle_opponent_move_result(None);
    let s = SenseAction(sq("g4"));
    bot.handle_sense_result(s, &engine::apply_sense(&state, s));
    assert_eq!(bot.memory(sq("h5")).unwrap().kind, Some(PieceKind::King));
    assert_eq!(bot.choose_move(), Move::new(sq("d1"), sq("h5")));
}

#[test]
fn greedy_memory_is_cleared_by_an_empty_sense() {
    let mut bot = GreedyBot::new(0.0);
    bot.handle_game_start(Color::White, 3);
    let mut state = engine::initial_state();
    state = engine::request_move(&state, Move::Pass).unwrap().0;
    state = engine::request_move(&state, Move::Pass).unwrap().0;
    state.put(sq("d4"), Piece::new(Color::Black, PieceKind::Knight));
    bot.handle_opponent_move_result(None);
    let s = SenseAction(sq("d4"));
    bot.handle_sense_result(s, &engine::apply_sense(&state, s));
    assert_eq!(bot.memory(sq("d4")).unwrap().kind, Some(PieceKind::Knight));
    let mv = bot.choose_move();
    let (_, outcome) = engine::request_move(&state, Move::Pass).unwrap();
    bot.handle_move_result(mv, &outcome);

    state.clear(sq("d4"));
    bot.handle_opponent_move_result(None);
    bot.handle_sense_result(s, &engine::apply_sense(&state, s));
    assert_eq!(bot.memory(sq("d4")), None);
}

#[test]
fn greedy_without_memory_moves_like_random() {
    // Same seed, nothing remembered: the first move is the random bot's.
    for seed in 0..50 {
        let state = engine::initial_state();
        let s = SenseAction(sq("d4"));
        let mut g = GreedyBot::new(0.0);
        let mut r = RandomBot::new(0.0);
        g.handle_game_start(Color::White, seed);
        r.handle_game_start(Color::White, seed);
        g.handle_opponent_move_result(None);
        r.handle_opponent_move_result(None);
        g.handle_sense_result(s, &engine::apply_sense(&state, s));
        r.handle_sense_result(s, &engine::apply_sense(&state, s));
        assert_eq!(g.choose_move(), r.choose_move());
    }
}

#[test]
fn greedy_senses_where_information_is_stalest() {
    let mut bot = GreedyBot::new(0.0);
    bot.handle_game_start(Color::White, 5);
    let mut state = engine::initial_state();
    let mut seen = Vec::new();
    for _ in 0..4 {
        bot.handle_opponent_move_result(None);
        let s = bot.choose_sense();
        seen.push(s.center());
        bot.handle_sense_result(s, &engine::apply_sense(&state, s));
        let _ = bot.choose_move();
        let (next, outcome) = engine::request_move(&state, Move::Pass).unwrap();
        bot.handle_move_result(Move::Pass, &outcome);
        state = engine::request_move(&next, Move::Pass).unwrap().0;
    }
    // Consecutive senses never look at overlapping windows while fresh
    // ground is available.
    for w in seen.windows(2) {
        let overlap = engine::sense_window(w[0]) & engine::sense_window(w[1]);
        assert!(overlap.is_empty(), "{:?}", seen);
    }
}

#[test]
fn generated_games_replay_through_the_referee() {
    let mut a = GreedyBot::new(1.0);
    let mut b = RandomBot::new(0.5);
    for i in 0..20 {
        let rec = play_game(&mut a, &mut b, &GameSetup::new(format!("g{i}"), i)).unwrap();
        validate(&rec).unwrap();
        assert_eq!(rec.meta.white, "greedy:bias=1");
        assert_eq!(rec.meta.black, "random:bias=0.5");
    }
}

#[test]
fn bot_decisions_follow_from_their_own_observation_stream() {
    let mut a = GreedyBot::new(0.0);
    let mut b = RandomBot::new(1.0);
    for i in 0..10 {
        let rec = play_game(&mut a, &mut b, &GameSetup::new("x", 100 + i)).unwrap();
        for (color, fresh) in [
            (Color::White, Box::new(GreedyBot::new(0.0)) as Box<dyn Player>),
            (Color::Black, Box::new(RandomBot::new(1.0))),
        ] {
            let mut fresh = fresh;
            let got = rerun_side(&mut fresh, &rec, color);
            let want: Vec<_> = rec.side(color).turns.iter().map(|t| (t.sense, t.requested_move)).collect();
            assert_eq!(got, want);
        }
    }
}

#[test]
fn matches_are_reproducible_and_color_balanced() {
    let r1 = run_spec_match(&BotSpec::greedy(), &BotSpec::random(), 20, 42).unwrap();
    let r2 = run_spec_match(&BotSpec::greedy(), &BotSpec::random(), 20, 42).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(serde_json::to_string(&r1).unwrap(), serde_json::to_string(&r2).unwrap());
    assert_eq!(r1.total.games(), 20);
    assert_eq!(r1.a_as_white.games(), 10);
    assert_eq!(r1.a_as_black.games(), 10);
    assert!(r1.wilson_low <= r1.score && r1.score <= r1.wilson_high);
    assert!(r1.table().contains("total"));
    let r3 = run_spec_match(&BotSpec::greedy(), &BotSpec::random(), 20, 43).unwrap();
    assert_ne!(r1.mean_plies, r3.mean_plies);
}

#[test]
fn random_vs_random_is_even() {
    let mut a = RandomBot::new(0.0);
    let mut b = RandomBot::new(0.0);
    let r = run_match(&mut a, &mut b, 1000, 2024).unwrap();
    assert!((0.45..=0.55).contains(&r.score), "{}", r.table());
}

#[test]
fn greedy_beats_random() {
    let r = run_spec_match(&BotSpec::greedy(), &BotSpec::random(), 100, 7).unwrap();
    assert!(r.score > 0.7, "{}", r.table());
}

#[test]
fn elo_is_antisymmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..1000 {
        let w: f64 = rng.random_range(0.001..0.999);
        let (x, y) = (relative_elo(w).unwrap(), relative_elo(1.0 - w).unwrap());
        assert!((x + y).abs() < 1e-9);
    }
}
