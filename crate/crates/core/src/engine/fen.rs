//! Extended FEN: the six standard fields followed by a result tag
//! (`*`, `1-0`, `0-1` or `1/2-1/2`). The halfmove clock is written as 0 and
//! ignored on read since RBC has no fifty-move rule.

use thiserror::Error;

use super::{
    CastlingRights, Color, EndReason, GameResult, GroundState, Piece, Square,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid FEN ({reason}): {fen:?}")]
pub struct FenError {
    pub fen: String,
    pub reason: &'static str,
}

impl GroundState {
    pub fn from_fen(fen: &str) -> Result<GroundState, FenError> {
        let err = |reason| FenError {
            fen: fen.to_owned(),
            reason,
        };
        let fields: Vec<&str> = fen.split_whitespace().collect();
        if fields.len() < 4 || fields.len() > 7 {
            return Err(err("expected 4 to 7 fields"));
        }
        let side = match fields[1] {
            "w" => Color::White,
            "b" => Color::Black,
            _ => return Err(err("side to move")),
        };
        let mut state = GroundState::empty(side);

        let rows: Vec<&str> = fields[0].split('/').collect();
        if rows.len() != 8 {
            return Err(err("expected 8 ranks"));
        }
        for (i, row) in rows.iter().enumerate() {
            let rank = 7 - i as u8;
            let mut file = 0u8;
            for c in row.chars() {
                if let Some(n) = c.to_digit(10) {
                    if !(1..=8).contains(&n) {
                        return Err(err("empty-run digit"));
                    }
                    file += n as u8;
                } else {
                    let piece = Piece::from_fen_char(c).ok_or_else(|| err("piece letter"))?;
                    if file >= 8 {
                        return Err(err("rank too long"));
                    }
                    state.put(Square::from_coords(file, rank), piece);
                    file += 1;
                }
                if file > 8 {
                    return Err(err("rank too long"));
                }
            }
            if file != 8 {
                return Err(err("rank too short"));
            }
        }

        let mut rights = CastlingRights::NONE;
        if fields[2] != "-" {
            for c in fields[2].chars() {
                match c {
                    'K' => rights.set(Color::White, true, true),
                    'Q' => rights.set(Color::White, false, true),
                    'k' => rights.set(Color::Black, true, true),
                    'q' => rights.set(Color::Black, false, true),
                    _ => return Err(err("castling field")),
                }
            }
        }
        state = state.with_castling(rights);

        if fields[3] != "-" {
            let ep: Square = fields[3].parse().map_err(|_| err("en passant square"))?;
            if ep.rank() != 2 && ep.rank() != 5 {
                return Err(err("en passant rank"));
            }
            state = state.with_en_passant(Some(ep));
        }
        if let Some(full) = fields.get(5) {
            let n: u32 = full.parse().map_err(|_| err("fullmove number"))?;
            state = state.with_fullmove(n);
        }
        if let Some(tag) = fields.get(6) {
            state.result = match *tag {
                "*" => None,
                "1-0" => Some(GameResult::win(Color::White)),
                "0-1" => Some(GameResult::win(Color::Black)),
                "1/2-1/2" => Some(GameResult {
                    winner: None,
                    reason: EndReason::TurnCapDraw,
                }),
                _ => return Err(err("result tag")),
            };
        }
        Ok(state)
    }

    pub fn to_fen(&self) -> String {
        let mut board = String::new();
        for rank in (0..8).rev() {
            let mut empty = 0;
            for file in 0..8 {
                match self.piece_at(Square::from_coords(file, rank)) {
                    Some(p) => {
                        if empty > 0 {
                            board.push_str(&empty.to_string());
                            empty = 0;
                        }
                        board.push(p.fen_char());
                    }
                    None => empty += 1,
                }
            }
            if empty > 0 {
                board.push_str(&empty.to_string());
            }
            if rank > 0 {
                board.push('/');
            }
        }
        let mut castling = String::new();
        for (color, kingside, c) in [
            (Color::White, true, 'K'),
            (Color::White, false, 'Q'),
            (Color::Black, true, 'k'),
            (Color::Black, false, 'q'),
        ] {
            if self.castling.has(color, kingside) {
                castling.push(c);
            }
        }
        if castling.is_empty() {
            castling.push('-');
        }
        let side = match self.side_to_move {
            Color::White => "w",
            Color::Black => "b",
        };
        let ep = self.en_passant.map_or("-".to_owned(), |s| s.name());
        let tag = match self.result() {
            None => "*",
            Some(GameResult {
                winner: Some(Color::White),
                ..
            }) => "1-0",
            Some(GameResult {
                winner: Some(Color::Black),
                ..
            }) => "0-1",
            Some(_) => "1/2-1/2",
        };
        format!("{board} {side} {castling} {ep} 0 {} {tag}", self.fullmove)
    }
}
