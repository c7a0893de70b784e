use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

/// Commutative counters collected while ingesting. Tallies from independent
/// workers merge with `+=`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub games_read: u64,
    pub malformed: u64,
    pub accepted: u64,
    pub rejected_not_rapid: u64,
    pub rejected_no_clock: u64,
    pub balanced_out: u64,
    pub illegal_moves: u64,
    pub examples: u64,
    pub corrupt_lines: u64,
}

impl AddAssign for Diagnostics {
    fn add_assign(&mut self, o: Diagnostics) {
        self.games_read += o.games_read;
        self.malformed += o.malformed;
        self.accepted += o.accepted;
        self.rejected_not_rapid += o.rejected_not_rapid;
        self.rejected_no_clock += o.rejected_no_clock;
        self.balanced_out += o.balanced_out;
        self.illegal_moves += o.illegal_moves;
        self.examples += o.examples;
        self.corrupt_lines += o.corrupt_lines;
    }
}
