//! A deliberately broken analysis. Its transfer function is not monotone
//! (`0 -> 3` but `1 -> 2`) and always moves upwards, so facts grow forever
//! around any reachable loop and no solver can converge.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cfg::Stmts;
use crate::lattice::{Analysis, AnalysisError, Direction, Fact};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Level(pub u64);

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "level{}", self.0)
    }
}

impl Fact for Level {
    fn leq(&self, other: &Self) -> bool {
        self.0 <= other.0
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Diverge;

impl Analysis for Diverge {
    type Fact = Level;

    fn name(&self) -> &str {
        "diverge"
    }

    fn direction(&self) -> Direction {
        Direction::Increasing
    }

    fn initial(&self) -> Level {
        Level(0)
    }

    fn combine(&self, a: &Level, b: &Level) -> Level {
        Level(a.0.max(b.0))
    }

    fn transfer(&self, _stmts: &Stmts, input: &Level) -> Result<Level, AnalysisError> {
        let step = if input.0.is_multiple_of(2) { 3 } else { 1 };
        Ok(Level(input.0.saturating_add(step)))
    }
}
