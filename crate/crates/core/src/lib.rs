//! Skill-conditioned human move prediction for chess.

pub mod chess;
pub mod encoding;
pub mod engine;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod probes;
pub mod trainer;
