use super::bitboard::{bishop_attacks, king_attacks, knight_attacks, pawn_attacks, rook_attacks};
use super::{Color, GroundState, Move, PieceKind, Square, SquareSet};

/// Geometry-legal moves for the side to move against the full board. No
/// check rules apply and passes are not listed.
pub(crate) fn generate(state: &GroundState) -> Vec<Move> {
    let us = state.side_to_move();
    let own = state.occupancy(us);
    let enemy = state.occupancy(us.other());
    let occupied = own | enemy;
    let mut moves = Vec::with_capacity(48);

    for from in state.pieces(us, PieceKind::Pawn) {
        pawn_moves(state, us, from, occupied, enemy, &mut moves);
    }
    for from in state.pieces(us, PieceKind::Knight) {
        push_all(&mut moves, from, knight_attacks(from) & !own);
    }
    for from in state.pieces(us, PieceKind::Bishop) {
        push_all(&mut moves, from, bishop_attacks(from, occupied) & !own);
    }
    for from in state.pieces(us, PieceKind::Rook) {
        push_all(&mut moves, from, rook_attacks(from, occupied) & !own);
    }
    for from in state.pieces(us, PieceKind::Queen) {
        let targets = bishop_attacks(from, occupied) | rook_attacks(from, occupied);
        push_all(&mut moves, from, targets & !own);
    }
    for from in state.pieces(us, PieceKind::King) {
        push_all(&mut moves, from, king_attacks(from) & !own);
        castling_moves(state, us, from, occupied, &mut moves);
    }
    moves
}

fn push_all(moves: &mut Vec<Move>, from: Square, targets: SquareSet) {
    moves.extend(targets.iter().map(|to| Move::new(from, to)));
}

fn push_pawn(moves: &mut Vec<Move>, us: Color, from: Square, to: Square) {
    if to.rank() == us.promotion_rank() {
        moves.extend(
            PieceKind::PROMOTIONS
                .iter()
                .map(|&k| Move::promoting(from, to, k)),
        );
    } else {
        moves.push(Move::new(from, to));
    }
}

fn pawn_moves(
    state: &GroundState,
    us: Color,
    from: Square,
    occupied: SquareSet,
    enemy: SquareSet,
    moves: &mut Vec<Move>,
) {
    let fwd = us.forward();
    if let Some(one) = from.offset(0, fwd) {
        if !occupied.contains(one) {
            push_pawn(moves, us, from, one);
            let start_rank = if us == Color::White { 1 } else { 6 };
            if from.rank() == start_rank {
                let two = one.offset(0, fwd).expect("double push stays on board");
                if !occupied.contains(two) {
                    moves.push(Move::new(from, two));
                }
            }
        }
    }
    let mut targets = enemy;
    if let Some(ep) = state.en_passant() {
        targets.insert(ep);
    }
    for to in pawn_attacks(from, us) & targets {
        push_pawn(moves, us, from, to);
    }
}

/// King and rook must stand on their home squares with the squares between
/// them empty. Attacked squares are irrelevant.
fn castling_moves(
    state: &GroundState,
    us: Color,
    king: Square,
    occupied: SquareSet,
    moves: &mut Vec<Move>,
) {
    let rank = us.back_rank();
    if king != Square::from_coords(4, rank) {
        return;
    }
    let rooks = state.pieces(us, PieceKind::Rook);
    for (kingside, rook_file, between, king_to) in [
        (true, 7u8, &[5u8, 6][..], 6u8),
        (false, 0u8, &[1u8, 2, 3][..], 2u8),
    ] {
        if !state.castling().has(us, kingside)
            || !rooks.contains(Square::from_coords(rook_file, rank))
        {
            continue;
        }
        if between
            .iter()
            .all(|&f| !occupied.contains(Square::from_coords(f, rank)))
        {
            moves.push(Move::new(king, Square::from_coords(king_to, rank)));
        }
    }
}
