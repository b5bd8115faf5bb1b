use super::bitboard::{line_direction, DIRECTIONS};
use super::movegen::generate;
use super::{
    Color, EngineError, GameResult, GroundState, Move, MoveOutcome, Piece, PieceKind,
    SenseAction, SenseOutcome, Square, SquareSet,
};

/// The 3x3 window around `center`, clipped to the board.
pub fn sense_window(center: Square) -> SquareSet {
    let mut set = SquareSet::EMPTY;
    for dr in -1..=1 {
        for df in -1..=1 {
            if let Some(sq) = center.offset(df, dr) {
                set.insert(sq);
            }
        }
    }
    set
}

pub(crate) fn apply_sense(state: &GroundState, sense: SenseAction) -> SenseOutcome {
    let revealed = sense_window(sense.center())
        .iter()
        .map(|sq| (sq, state.piece_at(sq)))
        .collect();
    SenseOutcome { revealed }
}

/// What the non-moving side learns from the opponent's move: only the
/// square where one of its pieces was taken.
pub fn capture_notice(outcome: &MoveOutcome, _observer: Color) -> Option<Square> {
    outcome.capture_square
}

pub(crate) fn request_move(
    state: &GroundState,
    requested: Move,
) -> Result<(GroundState, MoveOutcome), EngineError> {
    if state.result().is_some() {
        return Err(EngineError::GameOver);
    }
    let mut next = state.clone();
    let outcome = match resolve(state, requested)? {
        Resolution::Pass => MoveOutcome::default(),
        Resolution::Illegal => MoveOutcome {
            was_illegal: true,
            ..MoveOutcome::default()
        },
        Resolution::Play(mv) => {
            let capture_square = next.execute(mv);
            MoveOutcome {
                taken_move: Some(mv),
                capture_square,
                was_illegal: false,
            }
        }
    };
    if outcome.taken_move.is_none() {
        next.en_passant = None;
    }
    next.end_turn();
    Ok((next, outcome))
}

enum Resolution {
    Pass,
    Illegal,
    Play(Move),
}

/// Maps a request onto the move the referee actually executes.
///
/// Sliders stopped by an enemy piece capture it. A pawn double push whose
/// destination is occupied but whose middle square is empty becomes a
/// single push. Everything else that is not legal outright is illegal.
fn resolve(state: &GroundState, requested: Move) -> Result<Resolution, EngineError> {
    let (from, to, promotion) = match requested {
        Move::Pass => return Ok(Resolution::Pass),
        Move::Normal {
            from,
            to,
            promotion,
        } => (from, to, promotion),
    };
    if from == to {
        return Err(EngineError::Malformed(format!(
            "{requested}: source equals destination"
        )));
    }
    if matches!(promotion, Some(PieceKind::Pawn | PieceKind::King)) {
        return Err(EngineError::Malformed(format!(
            "{requested}: invalid promotion piece"
        )));
    }
    let us = state.side_to_move();
    let kind = match state.piece_at(from) {
        Some(p) if p.color == us => p.kind,
        _ => return Ok(Resolution::Illegal),
    };
    let reaches_last_rank = kind == PieceKind::Pawn && to.rank() == us.promotion_rank();
    let promotion = match (promotion, reaches_last_rank) {
        (None, true) => Some(PieceKind::Queen),
        (Some(_), false) => return Ok(Resolution::Illegal),
        (p, true) => p,
        (None, false) => None,
    };
    let normalized = Move::Normal {
        from,
        to,
        promotion,
    };
    if generate(state).contains(&normalized) {
        return Ok(Resolution::Play(normalized));
    }

    let occupied = state.occupied();
    let enemy = state.occupancy(us.other());
    match kind {
        PieceKind::Bishop | PieceKind::Rook | PieceKind::Queen => {
            let Some(dir) = line_direction(from, to) else {
                return Ok(Resolution::Illegal);
            };
            let diagonal = DIRECTIONS[dir].0 != 0 && DIRECTIONS[dir].1 != 0;
            let fits = match kind {
                PieceKind::Bishop => diagonal,
                PieceKind::Rook => !diagonal,
                _ => true,
            };
            if !fits {
                return Ok(Resolution::Illegal);
            }
            let (df, dr) = DIRECTIONS[dir];
            let mut cur = from;
            while let Some(sq) = cur.offset(df, dr) {
                if occupied.contains(sq) {
                    if enemy.contains(sq) && sq != to {
                        return Ok(Resolution::Play(Move::new(from, sq)));
                    }
                    return Ok(Resolution::Illegal);
                }
                if sq == to {
                    break;
                }
                cur = sq;
            }
            Ok(Resolution::Illegal)
        }
        PieceKind::Pawn => {
            let fwd = us.forward();
            let start_rank = if us == Color::White { 1 } else { 6 };
            let double = from.rank() == start_rank && from.offset(0, 2 * fwd) == Some(to);
            if double {
                let mid = from.offset(0, fwd).expect("on board");
                if !occupied.contains(mid) && occupied.contains(to) {
                    return Ok(Resolution::Play(Move::new(from, mid)));
                }
            }
            Ok(Resolution::Illegal)
        }
        PieceKind::Knight | PieceKind::King => Ok(Resolution::Illegal),
    }
}

impl GroundState {
    /// Plays a move already known to be legal. Returns the square of the
    /// captured piece, if any.
    fn execute(&mut self, mv: Move) -> Option<Square> {
        let Move::Normal {
            from,
            to,
            promotion,
        } = mv
        else {
            return None;
        };
        let us = self.side_to_move;
        let them = us.other();
        let kind = self
            .piece_at(from)
            .expect("executed move starts on an own piece")
            .kind;

        let mut capture_square = None;
        if let Some(victim) = self.piece_at(to) {
            debug_assert_eq!(victim.color, them);
            capture_square = Some(to);
        } else if kind == PieceKind::Pawn && Some(to) == self.en_passant && from.file() != to.file()
        {
            capture_square = Some(Square::from_coords(to.file(), from.rank()));
        }
        if let Some(cap) = capture_square {
            if let Some(victim) = self.piece_at(cap) {
                self.pieces[them.index()][victim.kind.index()].remove(cap);
                if victim.kind == PieceKind::King {
                    self.result = Some(GameResult::win(us));
                }
            }
            // A rook taken on its home square takes its castling right along.
            let home = them.back_rank();
            if cap == Square::from_coords(7, home) {
                self.castling.set(them, true, false);
            } else if cap == Square::from_coords(0, home) {
                self.castling.set(them, false, false);
            }
        }

        self.pieces[us.index()][kind.index()].remove(from);
        let placed = promotion.unwrap_or(kind);
        self.put(to, Piece::new(us, placed));

        let home = us.back_rank();
        match kind {
            PieceKind::King => {
                self.castling.clear_color(us);
                if from.file() == 4 && from.rank() == home && to.rank() == home {
                    let (rook_from, rook_to) = match to.file() {
                        6 => (7, 5),
                        2 => (0, 3),
                        _ => (8, 8),
                    };
                    if rook_from < 8 {
                        let rf = Square::from_coords(rook_from, home);
                        let rt = Square::from_coords(rook_to, home);
                        self.pieces[us.index()][PieceKind::Rook.index()].remove(rf);
                        self.put(rt, Piece::new(us, PieceKind::Rook));
                    }
                }
            }
            PieceKind::Rook => {
                if from == Square::from_coords(7, home) {
                    self.castling.set(us, true, false);
                } else if from == Square::from_coords(0, home) {
                    self.castling.set(us, false, false);
                }
            }
            _ => {}
        }

        self.en_passant = if kind == PieceKind::Pawn && from.rank().abs_diff(to.rank()) == 2 {
            from.offset(0, us.forward())
        } else {
            None
        };
        capture_square
    }

    fn end_turn(&mut self) {
        if self.side_to_move == Color::Black {
            self.fullmove += 1;
        }
        self.side_to_move = self.side_to_move.other();
        if self.result.is_none() && self.fullmove > self.turn_cap {
            self.result = Some(GameResult::draw());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{initial_state, legal_moves, EndReason};

    fn sq(s: &str) -> Square {
        s.parse().unwrap()
    }

    fn mv(s: &str) -> Move {
        s.parse().unwrap()
    }

    fn fen(s: &str) -> GroundState {
        GroundState::from_fen(s).unwrap()
    }

    #[test]
    fn slider_truncates_to_first_enemy_blocker() {
        let state = fen("rnbqkbnr/pppppppp/8/8/8/5p2/PPPPPPPP/RNBQKBNR w KQkq - 0 1");
        // d1-h5 runs through e2, which is our own pawn: illegal.
        let (_, out) = request_move(&state, mv("d1h5")).unwrap();
        assert!(out.was_illegal);

        let state = fen("4k3/8/8/8/8/5p2/8/3QK3 w - - 0 1");
        let (next, out) = request_move(&state, mv("d1h5")).unwrap();
        assert_eq!(out.taken_move, Some(mv("d1f3")));
        assert_eq!(out.capture_square, Some(sq("f3")));
        assert!(!out.was_illegal);
        assert_eq!(next.piece_at(sq("f3")), Some(Piece::new(Color::White, PieceKind::Queen)));
    }

    #[test]
    fn slider_blocked_by_own_piece_is_illegal() {
        let state = fen("4k3/8/8/8/8/5P2/8/3QK3 w - - 0 1");
        let (next, out) = request_move(&state, mv("d1h5")).unwrap();
        assert!(out.was_illegal);
        assert_eq!(out.taken_move, None);
        assert_eq!(next.side_to_move(), Color::Black);
        assert_eq!(next.occupied(), state.occupied());
    }

    #[test]
    fn pass_flips_turn_only() {
        let state = initial_state();
        let (next, out) = request_move(&state, Move::Pass).unwrap();
        assert_eq!(out, MoveOutcome::default());
        assert_eq!(next.occupied(), state.occupied());
        assert_eq!(next.side_to_move(), Color::Black);
    }

    #[test]
    fn pawn_double_push_blocked_in_the_middle_is_illegal() {
        let state = fen("4k3/8/8/8/8/4n3/4P3/4K3 w - - 0 1");
        let (_, out) = request_move(&state, mv("e2e4")).unwrap();
        assert!(out.was_illegal);
    }

    #[test]
    fn pawn_double_push_truncates_to_single_push() {
        let state = fen("4k3/8/8/8/4n3/8/4P3/4K3 w - - 0 1");
        let (next, out) = request_move(&state, mv("e2e4")).unwrap();
        assert_eq!(out.taken_move, Some(mv("e2e3")));
        assert_eq!(out.capture_square, None);
        assert_eq!(next.en_passant(), None);
    }

    #[test]
    fn pawn_diagonal_to_empty_square_is_illegal() {
        let state = initial_state();
        let (_, out) = request_move(&state, mv("e2d3")).unwrap();
        assert!(out.was_illegal);
    }

    #[test]
    fn king_capture_ends_the_game() {
        let state = fen("4k3/8/8/8/8/8/8/4RK2 w - - 0 1");
        let (next, out) = request_move(&state, mv("e1e8")).unwrap();
        assert_eq!(out.capture_square, Some(sq("e8")));
        assert_eq!(next.result(), Some(GameResult::win(Color::White)));
        assert_eq!(request_move(&next, Move::Pass), Err(EngineError::GameOver));
        assert_eq!(legal_moves(&next), Err(EngineError::GameOver));
    }

    #[test]
    fn truncated_slide_onto_king_also_wins() {
        let state = fen("8/8/8/8/8/5k2/8/3QK3 w - - 0 1");
        let (next, out) = request_move(&state, mv("d1h5")).unwrap();
        assert_eq!(out.capture_square, Some(sq("f3")));
        assert_eq!(next.result().and_then(|r| r.winner), Some(Color::White));
    }

    #[test]
    fn en_passant_capture_reports_the_pawn_square() {
        let state = fen("4k3/3p4/8/4P3/8/8/8/4K3 b - - 0 1");
        let (state, _) = request_move(&state, mv("d7d5")).unwrap();
        assert_eq!(state.en_passant(), Some(sq("d6")));
        let (next, out) = request_move(&state, mv("e5d6")).unwrap();
        assert_eq!(out.capture_square, Some(sq("d5")));
        assert_eq!(capture_notice(&out, Color::Black), Some(sq("d5")));
        assert_eq!(next.piece_at(sq("d5")), None);
    }

    #[test]
    fn castling_moves_the_rook_and_clears_rights() {
        let state = fen("4k3/8/8/8/8/8/8/4K2R w K - 0 1");
        let (next, out) = request_move(&state, mv("e1g1")).unwrap();
        assert_eq!(out.taken_move, Some(mv("e1g1")));
        assert_eq!(next.piece_at(sq("f1")), Some(Piece::new(Color::White, PieceKind::Rook)));
        assert_eq!(next.piece_at(sq("h1")), None);
        assert!(!next.castling().has(Color::White, true));
    }

    #[test]
    fn blocked_castling_is_illegal() {
        let state = fen("4k3/8/8/8/8/8/8/4KN1R w K - 0 1");
        let (_, out) = request_move(&state, mv("e1g1")).unwrap();
        assert!(out.was_illegal);
    }

    #[test]
    fn pawn_to_last_rank_defaults_to_queen() {
        let state = fen("7k/P7/8/8/8/8/8/4K3 w - - 0 1");
        let (next, out) = request_move(&state, mv("a7a8")).unwrap();
        assert_eq!(out.taken_move, Some(mv("a7a8q")));
        assert_eq!(next.piece_at(sq("a8")), Some(Piece::new(Color::White, PieceKind::Queen)));
        let (next, _) = request_move(&state, mv("a7a8n")).unwrap();
        assert_eq!(next.piece_at(sq("a8")), Some(Piece::new(Color::White, PieceKind::Knight)));
    }

    #[test]
    fn malformed_requests_are_errors_not_illegal_moves() {
        let state = initial_state();
        let same = Move::new(sq("e2"), sq("e2"));
        assert!(matches!(request_move(&state, same), Err(EngineError::Malformed(_))));
        let bad_promo = Move::promoting(sq("e2"), sq("e4"), PieceKind::King);
        assert!(matches!(request_move(&state, bad_promo), Err(EngineError::Malformed(_))));
    }

    #[test]
    fn turn_cap_draws() {
        let state = initial_state().with_turn_cap(1);
        let (state, _) = request_move(&state, Move::Pass).unwrap();
        assert_eq!(state.result(), None);
        let (state, _) = request_move(&state, Move::Pass).unwrap();
        assert_eq!(
            state.result(),
            Some(GameResult {
                winner: None,
                reason: EndReason::TurnCapDraw
            })
        );
        assert_eq!(
            initial_state().with_fullmove(201).result(),
            Some(GameResult::draw())
        );
    }

    #[test]
    fn sense_window_sizes() {
        assert_eq!(sense_window(sq("g7")).len(), 9);
        assert_eq!(sense_window(sq("h8")).len(), 4);
        assert_eq!(sense_window(sq("a4")).len(), 6);
        let out = apply_sense(&initial_state(), SenseAction(sq("e4")));
        assert_eq!(out.revealed.len(), 9);
        assert_eq!(out.revealed.first().unwrap().0, sq("d3"));
        assert_eq!(out.revealed.last().unwrap().0, sq("f5"));
        assert!(out.revealed.iter().all(|(_, p)| p.is_none()));
    }
}
