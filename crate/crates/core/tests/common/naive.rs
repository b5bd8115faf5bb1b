//! Mailbox move generator that walks rays square by square.

use rbc_core::engine::{Color, GroundState, Move, PieceKind, Square};

const KNIGHT: [(i8, i8); 8] = [(1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)];
const ORTHO: [(i8, i8); 4] = [(0, 1), (1, 0), (0, -1), (-1, 0)];
const DIAG: [(i8, i8); 4] = [(1, 1), (1, -1), (-1, -1), (-1, 1)];

fn at(f: i8, r: i8) -> Option<Square> {
    if (0..8).contains(&f) && (0..8).contains(&r) {
        Some(Square::from_coords(f as u8, r as u8))
    } else {
        None
    }
}

fn push_pawn(out: &mut Vec<Move>, from: Square, to: Square, last_rank: u8) {
    if to.rank() == last_rank {
        for k in [PieceKind::Knight, PieceKind::Bishop, PieceKind::Rook, PieceKind::Queen] {
            out.push(Move::promoting(from, to, k));
        }
    } else {
        out.push(Move::new(from, to));
    }
}

pub fn legal_moves(state: &GroundState) -> Vec<Move> {
    let us = state.side_to_move();
    let mut out = Vec::new();
    let own = |sq: Square| state.piece_at(sq).is_some_and(|p| p.color == us);
    let enemy = |sq: Square| state.piece_at(sq).is_some_and(|p| p.color != us);
    let empty = |sq: Square| state.piece_at(sq).is_none();

    for from in Square::all() {
        let Some(piece) = state.piece_at(from) else { continue };
        if piece.color != us {
            continue;
        }
        let (f, r) = (from.file() as i8, from.rank() as i8);
        match piece.kind {
            PieceKind::Pawn => {
                let dir: i8 = if us == Color::White { 1 } else { -1 };
                let last = if us == Color::White { 7 } else { 0 };
                let start = if us == Color::White { 1 } else { 6 };
                if let Some(one) = at(f, r + dir) {
                    if empty(one) {
                        push_pawn(&mut out, from, one, last);
                        if r == start {
                            if let Some(two) = at(f, r + 2 * dir) {
                                if empty(two) {
                                    out.push(Move::new(from, two));
                                }
                            }
                        }
                    }
                }
                for df in [-1, 1] {
                    if let Some(to) = at(f + df, r + dir) {
                        if enemy(to) || state.en_passant() == Some(to) {
                            push_pawn(&mut out, from, to, last);
                        }
                    }
                }
            }
            PieceKind::Knight | PieceKind::King => {
                let deltas: Vec<(i8, i8)> = if piece.kind == PieceKind::Knight {
                    KNIGHT.to_vec()
                } else {
                    ORTHO.iter().chain(DIAG.iter()).copied().collect()
                };
                for (df, dr) in deltas {
                    if let Some(to) = at(f + df, r + dr) {
                        if !own(to) {
                            out.push(Move::new(from, to));
                        }
                    }
                }
                if piece.kind == PieceKind::King {
                    let home = if us == Color::White { 0 } else { 7 };
                    if f == 4 && r == home {
                        let rook_on = |file: u8| {
                            state.piece_at(Square::from_coords(file, home as u8))
                                == Some(rbc_core::engine::Piece::new(us, PieceKind::Rook))
                        };
                        let clear = |files: &[u8]| {
                            files.iter().all(|&x| empty(Square::from_coords(x, home as u8)))
                        };
                        if state.castling().has(us, true) && rook_on(7) && clear(&[5, 6]) {
                            out.push(Move::new(from, Square::from_coords(6, home as u8)));
                        }
                        if state.castling().has(us, false) && rook_on(0) && clear(&[1, 2, 3]) {
                            out.push(Move::new(from, Square::from_coords(2, home as u8)));
                        }
                    }
                }
            }
            PieceKind::Bishop | PieceKind::Rook | PieceKind::Queen => {
                let dirs: Vec<(i8, i8)> = match piece.kind {
                    PieceKind::Bishop => DIAG.to_vec(),
                    PieceKind::Rook => ORTHO.to_vec(),
                    _ => ORTHO.iter().chain(DIAG.iter()).copied().collect(),
                };
                for (df, dr) in dirs {
                    let (mut cf, mut cr) = (f + df, r + dr);
                    while let Some(to) = at(cf, cr) {
                        if own(to) {
                            break;
                        }
                        out.push(Move::new(from, to));
                        if enemy(to) {
                            break;
                        }
                        cf += df;
                        cr += dr;
                    }
                }
            }
        }
    }
    out
}
