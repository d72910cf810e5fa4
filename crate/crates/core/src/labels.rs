use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
}

/// How much external guidance an episode receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Assistance {
    /// Ground-truth next waypoint every step.
    L1,
    /// Ground-truth waypoint only after straying from the oracle path.
    L2,
    /// No guidance.
    L3,
}

impl Assistance {
    pub const ALL: [Assistance; 3] = [Assistance::L1, Assistance::L2, Assistance::L3];
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "easy",
            Difficulty::Hard => "hard",
        })
    }
}

impl FromStr for Difficulty {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "easy" => Ok(Difficulty::Easy),
            "hard" => Ok(Difficulty::Hard),
            o => Err(Error::Config(format!("unknown difficulty `{o}`"))),
        }
    }
}

impl fmt::Display for Assistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Assistance::L1 => "L1",
            Assistance::L2 => "L2",
            Assistance::L3 => "L3",
        })
    }
}

impl FromStr for Assistance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L1" | "1" => Ok(Assistance::L1),
            "L2" | "2" => Ok(Assistance::L2),
            "L3" | "3" => Ok(Assistance::L3),
            o => Err(Error::Config(format!("unknown assistance level `{o}`"))),
        }
    }
}
