//! Reconnaissance Blind Chess: a referee, observation-history encoding, a
//! policy-value network with hand-written gradients, supervised and PPO
//! self-play training, scripted baseline bots and a game service.
//!
//! Agents only ever see their own observation stream. The referee's
//! [`GroundState`](engine::GroundState) stays inside [`engine`], the match
//! runners and the [`service`] layer.

pub mod arena;
pub mod config;
pub mod encoding;
pub mod game;
pub mod engine;
pub mod neural;
pub mod pipeline;
pub mod record;
pub mod rl;
pub mod service;
pub mod sl;
