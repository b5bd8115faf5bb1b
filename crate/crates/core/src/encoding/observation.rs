use serde::{Deserialize, Serialize};

use crate::engine::{
    bishop_attacks, king_attacks, knight_attacks, pawn_attacks, rook_attacks, sense_window,
    CastlingRights, Color, GroundState, Move, PieceKind, SenseAction, SenseOutcome, Square,
    SquareSet,
};

/// Everything one player legitimately learns during one turn.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub color: Color,
    /// Where the opponent captured one of our pieces on their last move.
    pub opp_capture_square: Option<Square>,
    /// Our own move as actually executed. Unset for passes and illegal
    /// requests.
    pub my_last_move: Option<Move>,
    pub my_capture_square: Option<Square>,
    pub last_was_illegal: bool,
    /// Own piece sets, indexed by piece kind (P, N, B, R, Q, K).
    pub own_pieces: [SquareSet; 6],
    pub last_sense: Option<SenseAction>,
    /// Every square revealed by `last_sense`.
    pub sense_window: SquareSet,
    /// Opponent pieces seen inside the window, indexed by piece kind.
    pub sense_pieces: [SquareSet; 6],
}

impl Observation {
    pub fn empty(color: Color) -> Self {
        Self {
            color,
            opp_capture_square: None,
            my_last_move: None,
            my_capture_square: None,
            last_was_illegal: false,
            own_pieces: [SquareSet::EMPTY; 6],
            last_sense: None,
            sense_window: SquareSet::EMPTY,
            sense_pieces: [SquareSet::EMPTY; 6],
        }
    }

    /// The frame as it looks before this turn's sense: everything but the
    /// opponent capture notice, own pieces and color cleared.
    pub fn pre_sense(&self) -> Observation {
        Observation {
            opp_capture_square: self.opp_capture_square,
            own_pieces: self.own_pieces,
            ..Observation::empty(self.color)
        }
    }

    /// The frame as it looks before this turn's move.
    pub fn pre_move(&self) -> Observation {
        Observation {
            last_sense: self.last_sense,
            sense_window: self.sense_window,
            sense_pieces: self.sense_pieces,
            ..self.pre_sense()
        }
    }

    pub(crate) fn set_sense(&mut self, sense: SenseAction, outcome: &SenseOutcome) {
        self.last_sense = Some(sense);
        self.sense_window = sense_window(sense.center());
        self.sense_pieces = [SquareSet::EMPTY; 6];
        for (sq, piece) in &outcome.revealed {
            if let Some(p) = piece {
                if p.color != self.color {
                    self.sense_pieces[p.kind.index()].insert(*sq);
                }
            }
        }
    }
}

/// A player's own pieces and castling rights, tracked purely from its own
/// taken moves and the capture notices it receives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnBoard {
    color: Color,
    pieces: [SquareSet; 6],
    castling: CastlingRights,
}

impl OwnBoard {
    pub fn new(color: Color) -> Self {
        let start = GroundState::initial();
        let mut castling = CastlingRights::NONE;
        castling.set(color, true, true);
        castling.set(color, false, true);
        Self {
            color,
            pieces: start.side(color),
            castling,
        }
    }

    pub fn color(&self) -> Color {
        self.color
    }

    pub fn pieces(&self) -> [SquareSet; 6] {
        self.pieces
    }

    pub fn occupancy(&self) -> SquareSet {
        self.pieces.iter().fold(SquareSet::EMPTY, |a, &b| a | b)
    }

    pub fn kind_at(&self, square: Square) -> Option<PieceKind> {
        PieceKind::ALL
            .into_iter()
            .find(|k| self.pieces[k.index()].contains(square))
    }

    pub fn can_castle(&self, kingside: bool) -> bool {
        self.castling.has(self.color, kingside)
    }

    /// Moves that are legal as far as this player can verify: geometry and
    /// own occupancy, with unknown squares treated as empty. Pawn captures
    /// are generated only onto `known_enemy`, which also blocks pushes and
    /// stops slides. Never includes a pass.
    pub fn candidate_moves(&self, known_enemy: SquareSet) -> Vec<Move> {
        let own = self.occupancy();
        let enemy = known_enemy & !own;
        let blockers = own | enemy;
        let mut out = Vec::with_capacity(48);
        let last = self.color.promotion_rank();
        let mut push = |from: Square, to: Square, pawn: bool| {
            if pawn && to.rank() == last {
                for kind in PieceKind::PROMOTIONS {
                    out.push(Move::promoting(from, to, kind));
                }
            } else {
                out.push(Move::new(from, to));
            }
        };
        let fwd = self.color.forward();
        for from in self.pieces[PieceKind::Pawn.index()].iter() {
            if let Some(one) = from.offset(0, fwd).filter(|s| !blockers.contains(*s)) {
                push(from, one, true);
                let start = if self.color == Color::White { 1 } else { 6 };
                if from.rank() == start {
                    if let Some(two) = one.offset(0, fwd).filter(|s| !blockers.contains(*s)) {
                        push(from, two, true);
                    }
                }
            }
            for to in (pawn_attacks(from, self.color) & enemy).iter() {
                push(from, to, true);
            }
        }
        let steps = [
            (PieceKind::Knight, 0),
            (PieceKind::Bishop, 1),
            (PieceKind::Rook, 2),
            (PieceKind::Queen, 3),
            (PieceKind::King, 4),
        ];
        for (kind, how) in steps {
            for from in self.pieces[kind.index()].iter() {
                let targets = match how {
                    0 => knight_attacks(from),
                    1 => bishop_attacks(from, blockers),
                    2 => rook_attacks(from, blockers),
                    3 => bishop_attacks(from, blockers) | rook_attacks(from, blockers),
                    _ => king_attacks(from),
                };
                for to in (targets & !own).iter() {
                    push(from, to, false);
                }
            }
        }
        let home = self.color.back_rank();
        let king = Square::from_coords(4, home);
        if self.pieces[PieceKind::King.index()].contains(king) {
            let rooks = self.pieces[PieceKind::Rook.index()];
            for (kingside, rook_file, between, to_file) in
                [(true, 7, &[5u8, 6][..], 6), (false, 0, &[1u8, 2, 3][..], 2)]
            {
                let clear = between
                    .iter()
                    .all(|&f| !blockers.contains(Square::from_coords(f, home)));
                if self.can_castle(kingside) && rooks.contains(Square::from_coords(rook_file, home)) && clear {
                    out.push(Move::new(king, Square::from_coords(to_file, home)));
                }
            }
        }
        out
    }

    pub(crate) fn lose_piece(&mut self, square: Square) {
        for set in &mut self.pieces {
            set.remove(square);
        }
        let home = self.color.back_rank();
        if square == Square::from_coords(7, home) {
            self.castling.set(self.color, true, false);
        } else if square == Square::from_coords(0, home) {
            self.castling.set(self.color, false, false);
        }
    }

    pub(crate) fn apply_own_move(&mut self, mv: Move) {
        let Move::Normal {
            from,
            to,
            promotion,
        } = mv
        else {
            return;
        };
        let Some(kind) = self.kind_at(from) else {
            return;
        };
        self.pieces[kind.index()].remove(from);
        self.pieces[promotion.unwrap_or(kind).index()].insert(to);
        let home = self.color.back_rank();
        match kind {
            PieceKind::King => {
                self.castling.clear_color(self.color);
                if from == Square::from_coords(4, home) && to.rank() == home {
                    let rook = match to.file() {
                        6 => Some((7, 5)),
                        2 => Some((0, 3)),
                        _ => None,
                    };
                    if let Some((rf, rt)) = rook {
                        let rooks = &mut self.pieces[PieceKind::Rook.index()];
                        rooks.remove(Square::from_coords(rf, home));
                        rooks.insert(Square::from_coords(rt, home));
                    }
                }
            }
            PieceKind::Rook => {
                if from == Square::from_coords(7, home) {
                    self.castling.set(self.color, true, false);
                } else if from == Square::from_coords(0, home) {
                    self.castling.set(self.color, false, false);
                }
            }
            _ => {}
        }
    }
}
