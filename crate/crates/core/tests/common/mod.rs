//! Test-only oracles. Nothing here calls into the bitboard move generator.
#![allow(dead_code)]

pub mod naive;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rbc_core::engine::{self, GroundState, Move, Square};

/// Positions visited by seeded random playouts. Mostly legal moves, with
/// the occasional arbitrary request so truncation and illegal requests
/// also shape the sampled positions.
pub fn playout_positions(count: usize, seed: u64) -> Vec<GroundState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut state = engine::initial_state();
    while out.len() < count {
        if state.result().is_some() {
            state = engine::initial_state();
            continue;
        }
        out.push(state.clone());
        let request = if rng.random_bool(0.2) {
            let from = Square::new(rng.random_range(0..64)).unwrap();
            let to = Square::new(rng.random_range(0..64)).unwrap();
            if from == to { Move::Pass } else { Move::new(from, to) }
        } else {
            let moves = engine::legal_moves(&state).unwrap();
            *moves.choose(&mut rng).unwrap_or(&Move::Pass)
        };
        state = engine::request_move(&state, request).unwrap().0;
    }
    out
}
