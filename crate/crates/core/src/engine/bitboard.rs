use std::ops::{BitAnd, BitAndAssign, BitOr, BitOrAssign, Not};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Square;

/// A set of squares as a 64-bit board, bit `i` for square index `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct SquareSet(pub u64);

impl SquareSet {
    pub const EMPTY: SquareSet = SquareSet(0);
    pub const FULL: SquareSet = SquareSet(!0);

    pub fn single(square: Square) -> SquareSet {
        SquareSet(1 << square.index())
    }

    pub fn contains(self, square: Square) -> bool {
        self.0 >> square.index() & 1 != 0
    }

    pub fn insert(&mut self, square: Square) {
        self.0 |= 1 << square.index();
    }

    pub fn remove(&mut self, square: Square) {
        self.0 &= !(1 << square.index());
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn first(self) -> Option<Square> {
        (self.0 != 0).then(|| Square::new(self.0.trailing_zeros() as u8).unwrap())
    }

    pub fn iter(self) -> SquareIter {
        SquareIter(self.0)
    }
}

pub struct SquareIter(u64);

impl Iterator for SquareIter {
    type Item = Square;

    fn next(&mut self) -> Option<Square> {
        if self.0 == 0 {
            return None;
        }
        let sq = self.0.trailing_zeros() as u8;
        self.0 &= self.0 - 1;
        Square::new(sq)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl IntoIterator for SquareSet {
    type Item = Square;
    type IntoIter = SquareIter;

    fn into_iter(self) -> SquareIter {
        self.iter()
    }
}

impl FromIterator<Square> for SquareSet {
    fn from_iter<I: IntoIterator<Item = Square>>(iter: I) -> Self {
        let mut set = SquareSet::EMPTY;
        for sq in iter {
            set.insert(sq);
        }
        set
    }
}

impl BitOr for SquareSet {
    type Output = SquareSet;
    fn bitor(self, rhs: SquareSet) -> SquareSet {
        SquareSet(self.0 | rhs.0)
    }
}

impl BitOrAssign for SquareSet {
    fn bitor_assign(&mut self, rhs: SquareSet) {
        self.0 |= rhs.0;
    }
}

impl BitAnd for SquareSet {
    type Output = SquareSet;
    fn bitand(self, rhs: SquareSet) -> SquareSet {
        SquareSet(self.0 & rhs.0)
    }
}

impl BitAndAssign for SquareSet {
    fn bitand_assign(&mut self, rhs: SquareSet) {
        self.0 &= rhs.0;
    }
}

impl Not for SquareSet {
    type Output = SquareSet;
    fn not(self) -> SquareSet {
        SquareSet(!self.0)
    }
}

// Serialized as a list of square names so JSON consumers never see 64-bit
// integers.
impl Serialize for SquareSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for SquareSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let squares = Vec::<Square>::deserialize(d)?;
        Ok(squares.into_iter().collect())
    }
}

/// Ray directions as (file, rank) steps: N, NE, E, SE, S, SW, W, NW.
pub(crate) const DIRECTIONS: [(i8, i8); 8] = [
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

pub(crate) const KNIGHT_DELTAS: [(i8, i8); 8] = [
    (1, 2),
    (2, 1),
    (2, -1),
    (1, -2),
    (-1, -2),
    (-2, -1),
    (-2, 1),
    (-1, 2),
];

const fn step(sq: usize, df: i8, dr: i8) -> Option<usize> {
    let f = (sq % 8) as i8 + df;
    let r = (sq / 8) as i8 + dr;
    if f < 0 || f > 7 || r < 0 || r > 7 {
        None
    } else {
        Some((r * 8 + f) as usize)
    }
}

const fn leaper_table(deltas: &[(i8, i8); 8]) -> [u64; 64] {
    let mut table = [0u64; 64];
    let mut sq = 0;
    while sq < 64 {
        let mut i = 0;
        while i < 8 {
            if let Some(t) = step(sq, deltas[i].0, deltas[i].1) {
                table[sq] |= 1 << t;
            }
            i += 1;
        }
        sq += 1;
    }
    table
}

const fn ray_table() -> [[u64; 64]; 8] {
    let mut table = [[0u64; 64]; 8];
    let mut dir = 0;
    while dir < 8 {
        let mut sq = 0;
        while sq < 64 {
            let mut cur = sq;
            while let Some(next) = step(cur, DIRECTIONS[dir].0, DIRECTIONS[dir].1) {
                table[dir][sq] |= 1 << next;
                cur = next;
            }
            sq += 1;
        }
        dir += 1;
    }
    table
}

static KNIGHT: [u64; 64] = leaper_table(&KNIGHT_DELTAS);
static KING: [u64; 64] = leaper_table(&DIRECTIONS);
static RAYS: [[u64; 64]; 8] = ray_table();

pub fn knight_attacks(sq: Square) -> SquareSet {
    SquareSet(KNIGHT[sq.index()])
}

pub fn king_attacks(sq: Square) -> SquareSet {
    SquareSet(KING[sq.index()])
}

/// Squares reached along direction `dir` up to and including the first
/// occupied square.
fn ray_attacks(sq: Square, dir: usize, occupied: u64) -> u64 {
    let ray = RAYS[dir][sq.index()];
    let blockers = ray & occupied;
    if blockers == 0 {
        return ray;
    }
    // N, NE, E and NW increase the square index; the rest decrease it.
    let first = if matches!(dir, 0 | 1 | 2 | 7) {
        blockers.trailing_zeros()
    } else {
        63 - blockers.leading_zeros()
    };
    ray & !RAYS[dir][first as usize]
}

pub fn bishop_attacks(sq: Square, occupied: SquareSet) -> SquareSet {
    SquareSet([1, 3, 5, 7].iter().fold(0, |acc, &d| acc | ray_attacks(sq, d, occupied.0)))
}

pub fn rook_attacks(sq: Square, occupied: SquareSet) -> SquareSet {
    SquareSet([0, 2, 4, 6].iter().fold(0, |acc, &d| acc | ray_attacks(sq, d, occupied.0)))
}

pub fn pawn_attacks(sq: Square, color: super::Color) -> SquareSet {
    let dr = color.forward();
    [-1, 1]
        .into_iter()
        .filter_map(|df| sq.offset(df, dr))
        .collect()
}

/// Direction index of the straight line from `from` to `to`, if any.
pub(crate) fn line_direction(from: Square, to: Square) -> Option<usize> {
    (0..8).find(|&d| RAYS[d][from.index()] >> to.index() & 1 != 0)
}
