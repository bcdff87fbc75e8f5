use serde::{Deserialize, Serialize};

use crate::prompt::PrimitiveSet;
use crate::{Error, Result};

/// Answer quality on a 1..=5 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RubricScore(u8);

impl RubricScore {
    pub const MIN: RubricScore = RubricScore(1);
    pub const MAX: RubricScore = RubricScore(5);

    pub fn new(value: u8) -> Result<Self> {
        if (1..=5).contains(&value) {
            Ok(RubricScore(value))
        } else {
            Err(Error::InvalidArgument(format!("rubric score {value} outside 1..=5")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for RubricScore {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        RubricScore::new(v)
    }
}

impl From<RubricScore> for u8 {
    fn from(s: RubricScore) -> u8 {
        s.0
    }
}

/// Scores a predicted term set against the true one.
///
/// The base grade counts how many true terms were found: all of them is a
/// 5, two of three a 4, one of two a 3, one of three a 2, none a 1. Naming
/// the opposite of a true term and naming more terms than the truth holds
/// each cost one point, down to a floor of 1.
pub fn rubric_score(predicted: PrimitiveSet, truth: PrimitiveSet) -> Result<RubricScore> {
    let n = truth.len();
    if !(1..=3).contains(&n) {
        return Err(Error::InvalidArgument(format!("truth must hold 1 to 3 terms, got {n}")));
    }
    let hits = predicted.intersection(truth).len();
    let base: i32 = match (hits, n) {
        (h, n) if h == n => 5,
        (2, 3) => 4,
        (1, 2) => 3,
        (1, 3) => 2,
        _ => 1,
    };
    let opposite = truth.iter().any(|t| predicted.contains(t.opposite()));
    let too_many = predicted.len() > n;
    let score = (base - i32::from(opposite) - i32::from(too_many)).max(1);
    Ok(RubricScore(score as u8))
}
