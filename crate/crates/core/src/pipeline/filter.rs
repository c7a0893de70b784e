use std::fmt;

use serde::{Deserialize, Serialize};

use super::GameRecord;

/// Game and position filtering thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_ply: u32,
    pub max_ply: u32,
    pub min_clock_seconds: u32,
    pub require_rapid: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_ply: 10,
            max_ply: 300,
            min_clock_seconds: 30,
            require_rapid: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_ply >= self.max_ply {
            return Err(format!(
                "min_ply ({}) must be below max_ply ({})",
                self.min_ply, self.max_ply
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    NotRapid,
    NoClock,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::NotRapid => "not_rapid",
            RejectReason::NoClock => "no_clock",
        })
    }
}

const RAPID_MIN_SECONDS: u32 = 480;
const RAPID_MAX_SECONDS: u32 = 1500;
const OTHER_SPEEDS: [&str; 5] = ["Bullet", "Blitz", "Classical", "Correspondence", "UltraBullet"];

/// Rapid detection: the Event header wins when it names a speed, otherwise
/// the estimated duration (base + 40 * increment) must fall in [480, 1500).
pub fn is_rapid(game: &GameRecord) -> bool {
    if game.event.contains("Rapid") {
        return true;
    }
    if OTHER_SPEEDS.iter().any(|s| game.event.contains(s)) {
        return false;
    }
    game.time_control
        .map(|tc| (RAPID_MIN_SECONDS..RAPID_MAX_SECONDS).contains(&tc.estimated_seconds()))
        .unwrap_or(false)
}

pub fn filter_game(game: &GameRecord, cfg: &FilterConfig) -> Result<(), RejectReason> {
    if cfg.require_rapid && !is_rapid(game) {
        return Err(RejectReason::NotRapid);
    }
    if game.no_clock() {
        return Err(RejectReason::NoClock);
    }
    Ok(())
}
