mod common;

use std::collections::HashSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rbc_core::engine::{
    self, apply_sense, capture_notice, initial_state, is_terminal, legal_moves, request_move,
    Color, EndReason, GroundState, Move, MoveOutcome, Piece, PieceKind, SenseAction, Square,
};

fn sq(s: &str) -> Square {
    s.parse().unwrap()
}

fn mv(s: &str) -> Move {
    s.parse().unwrap()
}

#[test]
fn initial_setup() {
    let state = initial_state();
    assert_eq!(state.piece_count(), 32);
    assert_eq!(state.occupancy(Color::White).len(), 16);
    assert_eq!(state.occupancy(Color::Black).len(), 16);
    assert_eq!(state.side_to_move(), Color::White);
    let rank2: Vec<Square> = (0..8).map(|f| Square::from_coords(f, 1)).collect();
    assert_eq!(
        state.pieces(Color::White, PieceKind::Pawn).iter().collect::<Vec<_>>(),
        rank2
    );
    assert_eq!(is_terminal(&state), None);
}

#[test]
fn initial_position_has_twenty_moves() {
    let moves = legal_moves(&initial_state()).unwrap();
    assert_eq!(moves.len(), 20);
    let naive: HashSet<Move> = common::naive::legal_moves(&initial_state()).into_iter().collect();
    assert_eq!(moves.into_iter().collect::<HashSet<_>>(), naive);
}

#[test]
fn legal_moves_match_naive_generator_on_playouts() {
    for state in common::playout_positions(1000, 7) {
        let fast: HashSet<Move> = legal_moves(&state).unwrap().into_iter().collect();
        let slow: HashSet<Move> = common::naive::legal_moves(&state).into_iter().collect();
        assert_eq!(fast, slow, "mismatch at {}", state.to_fen());
    }
}

#[test]
fn king_may_step_into_attack() {
    let state = GroundState::from_fen("k3r3/8/8/8/8/8/8/4K3 w - - 0 1").unwrap();
    assert!(legal_moves(&state).unwrap().contains(&mv("e1e2")));
}

#[test]
fn castling_through_attacked_squares_is_legal() {
    let state = GroundState::from_fen("k4q2/8/8/8/8/8/8/4K2R w K - 0 1").unwrap();
    assert!(legal_moves(&state).unwrap().contains(&mv("e1g1")));
}

#[test]
fn queen_slide_truncates_onto_blocking_pawn() {
    let state = GroundState::from_fen("rnbqkbnr/ppp1pppp/8/8/8/5p2/PPP1PPPP/RNBQKBNR w KQkq - 0 1")
        .unwrap();
    // d1-e2-f3-g4-h5 with e2 occupied by our own pawn: illegal.
    assert!(request_move(&state, mv("d1h5")).unwrap().1.was_illegal);

    let state = GroundState::from_fen("rnbqkbnr/ppp1pppp/8/8/8/5p2/PPP2PPP/RNBQKBNR w KQkq - 0 1")
        .unwrap();
    let (_, out) = request_move(&state, mv("d1h5")).unwrap();
    assert_eq!(out.taken_move, Some(mv("d1f3")));
    assert_eq!(out.capture_square, Some(sq("f3")));
}

#[test]
fn pawn_cannot_push_through_a_piece() {
    let state = GroundState::from_fen("rnbqkbnr/pppppppp/8/8/8/4b3/PPPPPPPP/RNBQKBNR w KQkq - 0 1")
        .unwrap();
    let (next, out) = request_move(&state, mv("e2e4")).unwrap();
    assert!(out.was_illegal);
    assert_eq!(out.taken_move, None);
    assert_eq!(next.occupied(), state.occupied());
}

#[test]
fn capturing_the_king_wins() {
    let state = GroundState::from_fen("3k4/8/8/8/8/8/8/3QK3 w - - 0 1").unwrap();
    let (next, out) = request_move(&state, mv("d1d8")).unwrap();
    assert_eq!(out.capture_square, Some(sq("d8")));
    let result = next.result().unwrap();
    assert_eq!(result.winner, Some(Color::White));
    assert_eq!(result.reason, EndReason::KingCaptured);
}

#[test]
fn capture_notices() {
    let state = GroundState::from_fen("4k3/8/8/8/8/5p2/8/3QK3 w - - 0 1").unwrap();
    let (_, out) = request_move(&state, mv("d1h5")).unwrap();
    assert_eq!(capture_notice(&out, Color::Black), Some(sq("f3")));
    let (_, quiet) = request_move(&initial_state(), mv("g1f3")).unwrap();
    assert_eq!(capture_notice(&quiet, Color::Black), None);
}

#[test]
fn missing_king_is_terminal() {
    let state = GroundState::from_fen("8/8/8/8/8/8/8/4K3 b - - 0 1").unwrap();
    let result = is_terminal(&state).unwrap();
    assert_eq!(result.winner, Some(Color::White));
    assert_eq!(result.reason, EndReason::KingCaptured);
}

#[test]
fn fullmove_beyond_cap_is_a_draw() {
    let state = initial_state().with_fullmove(201);
    let result = is_terminal(&state).unwrap();
    assert_eq!(result.winner, None);
    assert_eq!(result.reason, EndReason::TurnCapDraw);
}

#[test]
fn sense_geometry_over_every_center() {
    let state = initial_state();
    for center in Square::all() {
        let before = state.clone();
        let out = apply_sense(&state, SenseAction(center));
        assert_eq!(state, before);
        let edge_file = center.file() == 0 || center.file() == 7;
        let edge_rank = center.rank() == 0 || center.rank() == 7;
        let expected = match (edge_file, edge_rank) {
            (true, true) => 4,
            (true, false) | (false, true) => 6,
            (false, false) => 9,
        };
        assert_eq!(out.revealed.len(), expected, "center {center}");
        for (s, piece) in &out.revealed {
            assert!(s.file().abs_diff(center.file()) <= 1 && s.rank().abs_diff(center.rank()) <= 1);
            assert_eq!(*piece, state.piece_at(*s));
        }
    }
    assert_eq!(apply_sense(&state, SenseAction(sq("g7"))).revealed.len(), 9);
    assert_eq!(apply_sense(&state, SenseAction(sq("h8"))).revealed.len(), 4);
}

fn check_invariants(state: &GroundState) {
    let mut seen = 0u64;
    for color in Color::ALL {
        for kind in PieceKind::ALL {
            let set = state.pieces(color, kind).0;
            assert_eq!(seen & set, 0, "overlapping piece sets in {}", state.to_fen());
            seen |= set;
        }
        assert!(state.pieces(color, PieceKind::King).len() <= 1);
        if state.pieces(color, PieceKind::King).is_empty() {
            assert!(state.result().is_some());
        }
    }
    if let Some(ep) = state.en_passant() {
        assert!(ep.rank() == 2 || ep.rank() == 5);
    }
}

#[test]
fn random_playouts_preserve_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut state = initial_state();
    let mut steps = 0;
    let mut games = 0;
    let mut plies_this_game = 0u32;
    while steps < 100_000 {
        if state.result().is_some() {
            state = initial_state();
            games += 1;
            plies_this_game = 0;
            continue;
        }
        let request = if rng.random_bool(0.3) {
            let from = Square::new(rng.random_range(0..64)).unwrap();
            let to = Square::new(rng.random_range(0..64)).unwrap();
            if from == to { Move::Pass } else { Move::new(from, to) }
        } else {
            let moves = legal_moves(&state).unwrap();
            *moves.choose(&mut rng).unwrap_or(&Move::Pass)
        };
        let before = state.piece_count();
        let (next, out) = request_move(&state, request).unwrap();
        check_invariants(&next);
        let after = next.piece_count();
        if out.capture_square.is_some() {
            assert_eq!(after + 1, before);
            assert!(out.taken_move.is_some());
        } else {
            assert_eq!(after, before);
        }
        if out.was_illegal {
            assert_eq!(out.taken_move, None);
            assert_eq!(next.side(Color::White), state.side(Color::White));
            assert_eq!(next.side(Color::Black), state.side(Color::Black));
        }
        assert_eq!(next.side_to_move(), state.side_to_move().other());
        state = next;
        steps += 1;
        plies_this_game += 1;
        assert!(plies_this_game <= 2 * engine::DEFAULT_TURN_CAP);
    }
    assert!(games > 0);
}

#[test]
fn illegal_request_changes_nothing_but_the_turn() {
    let state = initial_state();
    let (next, out) = request_move(&state, mv("e1e3")).unwrap();
    assert_eq!(
        out,
        MoveOutcome {
            taken_move: None,
            capture_square: None,
            was_illegal: true
        }
    );
    assert_eq!(next.occupied(), state.occupied());
    assert_eq!(next.side_to_move(), Color::Black);
}

#[test]
fn fen_round_trips_playout_positions() {
    for state in common::playout_positions(300, 3) {
        let fen = state.to_fen();
        let back = GroundState::from_fen(&fen).unwrap();
        assert_eq!(back.to_fen(), fen);
        assert_eq!(back.occupied(), state.occupied());
        for s in Square::all() {
            assert_eq!(back.piece_at(s), state.piece_at(s));
        }
    }
}

#[test]
fn pieces_are_placed_where_requested() {
    let mut state = GroundState::empty(Color::White);
    state.put(sq("e1"), Piece::new(Color::White, PieceKind::King));
    state.put(sq("e8"), Piece::new(Color::Black, PieceKind::King));
    assert_eq!(state.result(), None);
    assert_eq!(state.piece_count(), 2);
}
