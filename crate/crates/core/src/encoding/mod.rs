//! Per-turn observations, the 20-frame history, the 1800x8x8 network input
//! and the move/sense action codecs.

mod history;
mod moves;
mod observation;
mod planes;

pub use history::{record_turn, ObservationHistory, Stage, TurnPhase};
pub use moves::{
    decode_move_index, encode_move_index, MoveIndex, SenseIndex, MOVE_ACTIONS, MOVE_PLANES,
    PASS_INDEX, SENSE_ACTIONS,
};
pub use observation::{Observation, OwnBoard};
pub use planes::{encode_frame, plane, FramePlanes, PlaneStack, FRAME_PLANES, HISTORY_LEN, STACK_CHANNELS};

use thiserror::Error;

use crate::engine::Move;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("move {0} has no index")]
    Unencodable(Move),
    #[error("move index {0:?} leaves the board")]
    OffBoard(MoveIndex),
    #[error("{event} is out of order in phase {phase:?}")]
    OutOfOrder { event: &'static str, phase: TurnPhase },
}
