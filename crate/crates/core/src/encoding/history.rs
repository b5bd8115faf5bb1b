use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::observation::{Observation, OwnBoard};
use super::planes::{PlaneStack, HISTORY_LEN};
use super::EncodeError;
use crate::engine::{Color, MoveOutcome, SenseAction, SenseOutcome, Square};

/// Which decision a stack is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PreSense,
    PreMove,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnPhase {
    BetweenTurns,
    AwaitingSense,
    AwaitingMove,
}

/// One player's last 20 observation frames. The newest slot is the
/// current turn's frame, filled in as the turn's events arrive:
/// capture notice, then sense result, then move result.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObservationHistory {
    completed: VecDeque<Observation>,
    current: Observation,
    phase: TurnPhase,
    own: OwnBoard,
    turns: u32,
}

impl ObservationHistory {
    pub fn new(color: Color) -> Self {
        Self {
            completed: VecDeque::with_capacity(HISTORY_LEN),
            current: Observation::empty(color),
            phase: TurnPhase::BetweenTurns,
            own: OwnBoard::new(color),
            turns: 0,
        }
    }

    pub fn color(&self) -> Color {
        self.own.color()
    }

    pub fn phase(&self) -> TurnPhase {
        self.phase
    }

    /// Turns started so far, including the current one.
    pub fn turns(&self) -> u32 {
        self.turns
    }

    pub fn own_board(&self) -> &OwnBoard {
        &self.own
    }

    /// The frame of the turn in progress (or the last one, between turns).
    pub fn current(&self) -> &Observation {
        &self.current
    }

    /// Completed frames kept for the stack, oldest first.
    pub fn completed(&self) -> impl ExactSizeIterator<Item = &Observation> {
        self.completed.iter()
    }

    pub fn last_completed(&self) -> Option<&Observation> {
        self.completed.back()
    }

    fn expect(&self, phase: TurnPhase, event: &'static str) -> Result<(), EncodeError> {
        if self.phase == phase {
            Ok(())
        } else {
            Err(EncodeError::OutOfOrder {
                event,
                phase: self.phase,
            })
        }
    }

    /// Starts a turn with the opponent's capture notice, if any.
    pub fn start_turn(&mut self, opp_capture: Option<Square>) -> Result<(), EncodeError> {
        self.expect(TurnPhase::BetweenTurns, "start_turn")?;
        if let Some(sq) = opp_capture {
            self.own.lose_piece(sq);
        }
        self.current = Observation {
            opp_capture_square: opp_capture,
            own_pieces: self.own.pieces(),
            ..Observation::empty(self.color())
        };
        self.phase = TurnPhase::AwaitingSense;
        self.turns += 1;
        Ok(())
    }

    pub fn record_sense(
        &mut self,
        sense: SenseAction,
        outcome: &SenseOutcome,
    ) -> Result<(), EncodeError> {
        self.expect(TurnPhase::AwaitingSense, "record_sense")?;
        self.current.set_sense(sense, outcome);
        self.phase = TurnPhase::AwaitingMove;
        Ok(())
    }

    /// Completes the current frame with the move result and pushes it.
    pub fn record_move(&mut self, outcome: &MoveOutcome) -> Result<(), EncodeError> {
        self.expect(TurnPhase::AwaitingMove, "record_move")?;
        if let Some(mv) = outcome.taken_move {
            self.own.apply_own_move(mv);
        }
        self.current.my_last_move = outcome.taken_move.filter(|m| !m.is_pass());
        self.current.my_capture_square = outcome.capture_square;
        self.current.last_was_illegal = outcome.was_illegal;
        self.current.own_pieces = self.own.pieces();
        if self.completed.len() == HISTORY_LEN - 1 {
            self.completed.pop_front();
        }
        self.completed.push_back(self.current.clone());
        self.phase = TurnPhase::BetweenTurns;
        Ok(())
    }

    /// The current turn's frame as seen at `stage`.
    pub fn partial(&self, stage: Stage) -> Result<Observation, EncodeError> {
        match (self.phase, stage) {
            (TurnPhase::AwaitingSense, Stage::PreSense) => Ok(self.current.clone()),
            (TurnPhase::AwaitingMove, Stage::PreSense) => Ok(self.current.pre_sense()),
            (TurnPhase::AwaitingMove, Stage::PreMove) => Ok(self.current.clone()),
            (phase, _) => Err(EncodeError::OutOfOrder {
                event: "encode",
                phase,
            }),
        }
    }

    /// The 1800-channel network input for the decision at `stage`.
    pub fn encode(&self, stage: Stage) -> Result<PlaneStack, EncodeError> {
        let current = self.partial(stage)?;
        Ok(PlaneStack::from_frames(self.completed.iter(), &current))
    }
}

/// Convenience for the common request-and-record pair.
pub fn record_turn(
    history: &mut ObservationHistory,
    opp_capture: Option<Square>,
    sense: SenseAction,
    sense_outcome: &SenseOutcome,
    move_outcome: &MoveOutcome,
) -> Result<(), EncodeError> {
    history.start_turn(opp_capture)?;
    history.record_sense(sense, sense_outcome)?;
    history.record_move(move_outcome)
}
