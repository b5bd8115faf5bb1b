//! The referee: full ground-truth state, RBC move resolution (including
//! slide truncation), sensing and termination.
//!
//! Check rules do not exist in RBC. A king may move into attack, castle
//! through or out of attack, and the game ends when a king is captured.

mod bitboard;
mod fen;
mod movegen;
mod referee;
mod types;

pub use bitboard::{bishop_attacks, king_attacks, knight_attacks, pawn_attacks, rook_attacks, SquareSet};
pub use fen::FenError;
pub use referee::{capture_notice, sense_window};
pub use types::{
    CastlingRights, Color, EndReason, GameResult, Move, MoveOutcome, Piece, PieceKind,
    SenseAction, SenseOutcome, Square,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Games that reach this many full moves without a king capture are drawn.
pub const DEFAULT_TURN_CAP: u32 = 200;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("the game is already over")]
    GameOver,
    #[error("malformed move {0}")]
    Malformed(String),
}

/// The referee's complete, hidden view of a game.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroundState {
    pieces: [[SquareSet; 6]; 2],
    side_to_move: Color,
    castling: CastlingRights,
    en_passant: Option<Square>,
    fullmove: u32,
    result: Option<GameResult>,
    turn_cap: u32,
}

impl Default for GroundState {
    fn default() -> Self {
        Self::initial()
    }
}

impl GroundState {
    /// Standard chess starting position, white to move.
    pub fn initial() -> Self {
        let mut pieces = [[SquareSet::EMPTY; 6]; 2];
        let back = [
            PieceKind::Rook,
            PieceKind::Knight,
            PieceKind::Bishop,
            PieceKind::Queen,
            PieceKind::King,
            PieceKind::Bishop,
            PieceKind::Knight,
            PieceKind::Rook,
        ];
        for (file, kind) in back.into_iter().enumerate() {
            let file = file as u8;
            pieces[0][kind.index()].insert(Square::from_coords(file, 0));
            pieces[1][kind.index()].insert(Square::from_coords(file, 7));
            pieces[0][PieceKind::Pawn.index()].insert(Square::from_coords(file, 1));
            pieces[1][PieceKind::Pawn.index()].insert(Square::from_coords(file, 6));
        }
        Self {
            pieces,
            side_to_move: Color::White,
            castling: CastlingRights::ALL,
            en_passant: None,
            fullmove: 1,
            result: None,
            turn_cap: DEFAULT_TURN_CAP,
        }
    }

    /// An empty board; used to build positions piece by piece.
    pub fn empty(side_to_move: Color) -> Self {
        Self {
            pieces: [[SquareSet::EMPTY; 6]; 2],
            side_to_move,
            castling: CastlingRights::NONE,
            en_passant: None,
            fullmove: 1,
            result: None,
            turn_cap: DEFAULT_TURN_CAP,
        }
    }

    pub fn with_turn_cap(mut self, cap: u32) -> Self {
        self.turn_cap = cap;
        self
    }

    pub fn with_castling(mut self, rights: CastlingRights) -> Self {
        self.castling = rights;
        self
    }

    pub fn with_en_passant(mut self, square: Option<Square>) -> Self {
        self.en_passant = square;
        self
    }

    pub fn with_fullmove(mut self, fullmove: u32) -> Self {
        self.fullmove = fullmove.max(1);
        self
    }

    /// Places a piece, replacing anything on the square.
    pub fn put(&mut self, square: Square, piece: Piece) {
        self.clear(square);
        self.pieces[piece.color.index()][piece.kind.index()].insert(square);
    }

    pub fn clear(&mut self, square: Square) {
        for side in &mut self.pieces {
            for set in side.iter_mut() {
                set.remove(square);
            }
        }
    }

    pub fn side_to_move(&self) -> Color {
        self.side_to_move
    }

    pub fn castling(&self) -> CastlingRights {
        self.castling
    }

    pub fn en_passant(&self) -> Option<Square> {
        self.en_passant
    }

    pub fn fullmove(&self) -> u32 {
        self.fullmove
    }

    pub fn turn_cap(&self) -> u32 {
        self.turn_cap
    }

    /// The game result, if the game is over.
    pub fn result(&self) -> Option<GameResult> {
        self.result.or_else(|| self.board_result())
    }

    pub fn pieces(&self, color: Color, kind: PieceKind) -> SquareSet {
        self.pieces[color.index()][kind.index()]
    }

    /// All six piece sets of one side, indexed by [`PieceKind::index`].
    pub fn side(&self, color: Color) -> [SquareSet; 6] {
        self.pieces[color.index()]
    }

    pub fn occupancy(&self, color: Color) -> SquareSet {
        self.pieces[color.index()]
            .iter()
            .fold(SquareSet::EMPTY, |acc, &s| acc | s)
    }

    pub fn occupied(&self) -> SquareSet {
        self.occupancy(Color::White) | self.occupancy(Color::Black)
    }

    pub fn piece_at(&self, square: Square) -> Option<Piece> {
        for color in Color::ALL {
            for kind in PieceKind::ALL {
                if self.pieces[color.index()][kind.index()].contains(square) {
                    return Some(Piece { color, kind });
                }
            }
        }
        None
    }

    pub fn piece_count(&self) -> u32 {
        self.occupied().len()
    }

    /// A missing king ends the game, as does exceeding the turn cap.
    fn board_result(&self) -> Option<GameResult> {
        let white_king = !self.pieces(Color::White, PieceKind::King).is_empty();
        let black_king = !self.pieces(Color::Black, PieceKind::King).is_empty();
        match (white_king, black_king) {
            (true, false) => Some(GameResult::win(Color::White)),
            (false, true) => Some(GameResult::win(Color::Black)),
            (false, false) => Some(GameResult::win(self.side_to_move.other())),
            (true, true) if self.fullmove > self.turn_cap => Some(GameResult::draw()),
            _ => None,
        }
    }
}

/// Returns the game result if the game is over.
pub fn is_terminal(state: &GroundState) -> Option<GameResult> {
    state.result()
}

pub fn initial_state() -> GroundState {
    GroundState::initial()
}

pub fn legal_moves(state: &GroundState) -> Result<Vec<Move>, EngineError> {
    if is_terminal(state).is_some() {
        return Err(EngineError::GameOver);
    }
    Ok(movegen::generate(state))
}

/// Submits a move for the side to move. Illegal requests consume the turn.
pub fn request_move(
    state: &GroundState,
    requested: Move,
) -> Result<(GroundState, MoveOutcome), EngineError> {
    referee::request_move(state, requested)
}

pub fn apply_sense(state: &GroundState, sense: SenseAction) -> SenseOutcome {
    referee::apply_sense(state, sense)
}
