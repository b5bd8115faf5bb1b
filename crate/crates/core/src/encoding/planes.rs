use serde::{Deserialize, Serialize};

use super::moves::encode_move_index;
use super::observation::Observation;
use crate::engine::{Color, Square};

pub const FRAME_PLANES: usize = 90;
pub const HISTORY_LEN: usize = 20;
pub const STACK_CHANNELS: usize = FRAME_PLANES * HISTORY_LEN;

/// Plane offsets within one 90-plane frame.
pub mod plane {
    pub const OPP_CAPTURE: usize = 0;
    pub const MOVE: usize = 1;
    pub const MY_CAPTURE: usize = 74;
    pub const ILLEGAL: usize = 75;
    pub const OWN_PIECES: usize = 76;
    pub const SENSE_WINDOW: usize = 82;
    pub const SENSE_PIECES: usize = 83;
    pub const COLOR: usize = 89;
}

const _: () = assert!(plane::COLOR + 1 == FRAME_PLANES);
const _: () = assert!(1 + 73 + 1 + 1 + 6 + 1 + 6 + 1 == FRAME_PLANES);

/// One observation as 90 binary 8x8 planes, one bitboard per plane.
pub type FramePlanes = [u64; FRAME_PLANES];

fn bit(sq: Square) -> u64 {
    1 << sq.index()
}

pub fn encode_frame(obs: &Observation) -> FramePlanes {
    let mut planes = [0u64; FRAME_PLANES];
    if let Some(sq) = obs.opp_capture_square {
        planes[plane::OPP_CAPTURE] = bit(sq);
    }
    if let Some(mv) = obs.my_last_move {
        // Taken moves come from the referee and always encode.
        if let Some((p, from)) = encode_move_index(mv).ok().and_then(|i| i.plane_and_square()) {
            planes[plane::MOVE + p] = bit(from);
        }
    }
    if let Some(sq) = obs.my_capture_square {
        planes[plane::MY_CAPTURE] = bit(sq);
    }
    if obs.last_was_illegal {
        planes[plane::ILLEGAL] = !0;
    }
    for (i, set) in obs.own_pieces.iter().enumerate() {
        planes[plane::OWN_PIECES + i] = set.0;
    }
    planes[plane::SENSE_WINDOW] = obs.sense_window.0;
    for (i, set) in obs.sense_pieces.iter().enumerate() {
        planes[plane::SENSE_PIECES + i] = set.0 & obs.sense_window.0;
    }
    if obs.color == Color::White {
        planes[plane::COLOR] = !0;
    }
    planes
}

/// The 1800x8x8 binary network input: 20 frames of 90 planes, oldest
/// first. Stored as one bitboard per channel.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlaneStack {
    planes: Vec<u64>,
}

impl PlaneStack {
    pub const SHAPE: [usize; 3] = [STACK_CHANNELS, 8, 8];

    pub fn zeros() -> Self {
        Self {
            planes: vec![0; STACK_CHANNELS],
        }
    }

    /// Builds a stack from up to 19 completed frames (oldest first) and the
    /// current, possibly partial, frame. Missing history is zero-filled.
    pub fn from_frames<'a, I>(past: I, current: &'a Observation) -> Self
    where
        I: IntoIterator<Item = &'a Observation>,
        I::IntoIter: ExactSizeIterator,
    {
        let past = past.into_iter();
        let skip = past.len().saturating_sub(HISTORY_LEN - 1);
        let first = HISTORY_LEN - 1 - (past.len() - skip);
        let mut stack = Self::zeros();
        for (slot, obs) in (first..).zip(past.skip(skip).chain(std::iter::once(current))) {
            stack.set_frame(slot, &encode_frame(obs));
        }
        stack
    }

    /// Same layout as [`PlaneStack::from_frames`], from frames already
    /// encoded.
    pub fn from_encoded(past: &[FramePlanes], current: &FramePlanes) -> Self {
        let past = &past[past.len().saturating_sub(HISTORY_LEN - 1)..];
        let first = HISTORY_LEN - 1 - past.len();
        let mut stack = Self::zeros();
        for (slot, frame) in (first..).zip(past.iter().chain(std::iter::once(current))) {
            stack.set_frame(slot, frame);
        }
        stack
    }

    pub fn shape(&self) -> [usize; 3] {
        Self::SHAPE
    }

    pub fn set_frame(&mut self, slot: usize, frame: &FramePlanes) {
        self.planes[slot * FRAME_PLANES..(slot + 1) * FRAME_PLANES].copy_from_slice(frame);
    }

    pub fn frame(&self, slot: usize) -> &[u64] {
        &self.planes[slot * FRAME_PLANES..(slot + 1) * FRAME_PLANES]
    }

    /// Channel bitboards, `STACK_CHANNELS` of them.
    pub fn channels(&self) -> &[u64] {
        &self.planes
    }

    pub fn get(&self, channel: usize, square: Square) -> bool {
        self.planes[channel] >> square.index() & 1 != 0
    }

    pub fn count_ones(&self) -> u32 {
        self.planes.iter().map(|p| p.count_ones()).sum()
    }

    /// Dense values in (channel, rank, file) order.
    pub fn to_dense(&self) -> Vec<f32> {
        let mut out = vec![0.0; STACK_CHANNELS * 64];
        for (c, &p) in self.planes.iter().enumerate() {
            let mut bits = p;
            while bits != 0 {
                let s = bits.trailing_zeros() as usize;
                out[c * 64 + s] = 1.0;
                bits &= bits - 1;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::OwnBoard;
    use crate::engine::{Move, PieceKind};

    #[test]
    fn first_white_frame() {
        let mut obs = Observation::empty(Color::White);
        obs.own_pieces = OwnBoard::new(Color::White).pieces();
        let f = encode_frame(&obs);
        let counts: Vec<u32> = (0..6).map(|i| f[plane::OWN_PIECES + i].count_ones()).collect();
        assert_eq!(counts, vec![8, 2, 2, 2, 1, 1]);
        assert_eq!(f[plane::COLOR], !0);
        let others: u32 = f
            .iter()
            .enumerate()
            .filter(|(i, _)| !(plane::OWN_PIECES..plane::OWN_PIECES + 6).contains(i) && *i != plane::COLOR)
            .map(|(_, p)| p.count_ones())
            .sum();
        assert_eq!(others, 0);
    }

    #[test]
    fn black_color_plane_is_zero() {
        let f = encode_frame(&Observation::empty(Color::Black));
        assert_eq!(f[plane::COLOR], 0);
    }

    #[test]
    fn illegal_frame() {
        let mut obs = Observation::empty(Color::White);
        obs.last_was_illegal = true;
        let f = encode_frame(&obs);
        assert_eq!(f[plane::ILLEGAL], !0);
        assert!(f[plane::MOVE..plane::MOVE + 73].iter().all(|&p| p == 0));
    }

    #[test]
    fn capture_frame_has_one_move_bit() {
        let mut obs = Observation::empty(Color::White);
        obs.my_last_move = Some("d1f3".parse::<Move>().unwrap());
        let f3: Square = "f3".parse().unwrap();
        obs.my_capture_square = Some(f3);
        obs.own_pieces[PieceKind::Queen.index()].insert(f3);
        let f = encode_frame(&obs);
        let move_bits: u32 = f[plane::MOVE..plane::MOVE + 73].iter().map(|p| p.count_ones()).sum();
        assert_eq!(move_bits, 1);
        assert_eq!(f[plane::MY_CAPTURE], 1 << f3.index());
        // d1 -> f3 is NE distance 2: plane 1 * 7 + 1 = 8, from d1.
        assert_eq!(f[plane::MOVE + 8], 1 << 3);
    }

    #[test]
    fn stack_layout_puts_current_frame_last() {
        let mut current = Observation::empty(Color::White);
        current.own_pieces = OwnBoard::new(Color::White).pieces();
        let stack = PlaneStack::from_frames(&[], &current);
        assert_eq!(stack.shape(), [1800, 8, 8]);
        for slot in 0..19 {
            assert!(stack.frame(slot).iter().all(|&p| p == 0));
        }
        assert_eq!(stack.frame(19), &encode_frame(&current)[..]);
        assert_eq!(stack.to_dense().len(), 1800 * 64);
        assert_eq!(stack.to_dense().iter().filter(|&&v| v == 1.0).count() as u32, stack.count_ones());
    }
}
