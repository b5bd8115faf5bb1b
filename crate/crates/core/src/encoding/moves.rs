//! The 4673-way move index: 73 planes of 64 source squares plus a pass.
//!
//! Planes 0-55 are queen-style moves, `direction * 7 + (distance - 1)` with
//! directions N, NE, E, SE, S, SW, W, NW. Planes 56-63 are knight jumps.
//! Planes 64-72 are underpromotions to knight, bishop or rook, each split
//! into capture-left, push and capture-right as seen by the mover. Queen
//! promotions use the queen-style planes. The board is never flipped.

use serde::{Deserialize, Serialize};

use super::EncodeError;
use crate::engine::{Color, Move, PieceKind, Square, SquareSet};

pub const MOVE_PLANES: usize = 73;
pub const PASS_INDEX: usize = MOVE_PLANES * 64;
pub const MOVE_ACTIONS: usize = PASS_INDEX + 1;
pub const SENSE_ACTIONS: usize = 64;

const QUEEN_DIRS: [(i8, i8); 8] = [
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

const KNIGHT_DELTAS: [(i8, i8); 8] = [
    (1, 2),
    (2, 1),
    (2, -1),
    (1, -2),
    (-1, -2),
    (-2, -1),
    (-2, 1),
    (-1, 2),
];

const UNDERPROMOTIONS: [PieceKind; 3] = [PieceKind::Knight, PieceKind::Bishop, PieceKind::Rook];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MoveIndex(u16);

impl MoveIndex {
    pub const PASS: MoveIndex = MoveIndex(PASS_INDEX as u16);

    pub fn new(index: usize) -> Option<MoveIndex> {
        (index < MOVE_ACTIONS).then_some(MoveIndex(index as u16))
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    pub fn is_pass(self) -> bool {
        self == Self::PASS
    }

    /// `(plane, from-square)` for non-pass indices.
    pub fn plane_and_square(self) -> Option<(usize, Square)> {
        (!self.is_pass()).then(|| (self.get() / 64, Square::new((self.get() % 64) as u8).unwrap()))
    }
}

/// Sense head index, identical to the square index of the window center.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SenseIndex(u8);

impl SenseIndex {
    pub fn new(index: usize) -> Option<SenseIndex> {
        (index < SENSE_ACTIONS).then_some(SenseIndex(index as u8))
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    pub fn square(self) -> Square {
        Square::new(self.0).unwrap()
    }
}

impl From<Square> for SenseIndex {
    fn from(square: Square) -> Self {
        SenseIndex(square.index() as u8)
    }
}

pub fn encode_move_index(mv: Move) -> Result<MoveIndex, EncodeError> {
    let Move::Normal {
        from,
        to,
        promotion,
    } = mv
    else {
        return Ok(MoveIndex::PASS);
    };
    let df = to.file() as i8 - from.file() as i8;
    let dr = to.rank() as i8 - from.rank() as i8;
    let bad = || EncodeError::Unencodable(mv);
    if df == 0 && dr == 0 {
        return Err(bad());
    }

    let plane = match promotion {
        Some(kind) if kind != PieceKind::Queen => {
            let mover = match (from.rank(), to.rank()) {
                (6, 7) => Color::White,
                (1, 0) => Color::Black,
                _ => return Err(bad()),
            };
            let piece = UNDERPROMOTIONS
                .iter()
                .position(|&k| k == kind)
                .ok_or_else(bad)?;
            // The mover's left is the a-file side for white, the h-file
            // side for black.
            let side = match mover {
                Color::White => df,
                Color::Black => -df,
            };
            let direction = match side {
                -1 => 0,
                0 => 1,
                1 => 2,
                _ => return Err(bad()),
            };
            64 + piece * 3 + direction
        }
        _ => {
            if let Some(k) = KNIGHT_DELTAS.iter().position(|&d| d == (df, dr)) {
                if promotion.is_some() {
                    return Err(bad());
                }
                56 + k
            } else {
                let dist = df.abs().max(dr.abs());
                if !(df == 0 || dr == 0 || df.abs() == dr.abs()) {
                    return Err(bad());
                }
                let dir = QUEEN_DIRS
                    .iter()
                    .position(|&d| d == (df.signum(), dr.signum()))
                    .expect("straight line has a direction");
                dir * 7 + (dist as usize - 1)
            }
        }
    };
    Ok(MoveIndex((plane * 64 + from.index()) as u16))
}

/// Inverse of [`encode_move_index`]. With `pawns` (the mover's pawn set), a
/// queen-plane pawn move onto the last rank decodes as a queen promotion.
pub fn decode_move_index(index: MoveIndex, pawns: Option<SquareSet>) -> Result<Move, EncodeError> {
    let Some((plane, from)) = index.plane_and_square() else {
        return Ok(Move::Pass);
    };
    let off = || EncodeError::OffBoard(index);
    match plane {
        0..=55 => {
            let (df, dr) = QUEEN_DIRS[plane / 7];
            let dist = (plane % 7 + 1) as i8;
            let to = from.offset(df * dist, dr * dist).ok_or_else(off)?;
            let pawn = pawns.is_some_and(|p| p.contains(from));
            let promotes = pawn
                && dist == 1
                && ((dr == 1 && to.rank() == 7) || (dr == -1 && to.rank() == 0));
            Ok(if promotes {
                Move::promoting(from, to, PieceKind::Queen)
            } else {
                Move::new(from, to)
            })
        }
        56..=63 => {
            let (df, dr) = KNIGHT_DELTAS[plane - 56];
            Ok(Move::new(from, from.offset(df, dr).ok_or_else(off)?))
        }
        _ => {
            let piece = UNDERPROMOTIONS[(plane - 64) / 3];
            let side = ((plane - 64) % 3) as i8 - 1;
            let (df, dr) = match from.rank() {
                6 => (side, 1),
                1 => (-side, -1),
                _ => return Err(off()),
            };
            let to = from.offset(df, dr).ok_or_else(off)?;
            Ok(Move::promoting(from, to, piece))
        }
    }
}
