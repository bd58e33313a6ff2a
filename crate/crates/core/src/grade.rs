use std::fmt;
use std::str::FromStr;

use crate::Scalar;

/// GRBAS grade value, 0 (normal) to 3 (severe).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Grade(u8);

impl Grade {
    pub const COUNT: usize = 4;
    pub const ALL: [Grade; 4] = [Grade(0), Grade(1), Grade(2), Grade(3)];

    pub fn new(value: u8) -> Option<Self> {
        (value < 4).then_some(Self(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn one_hot<T: Scalar>(self) -> [T; 4] {
        let mut t = [T::zero(); 4];
        t[self.index()] = T::one();
        t
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseGradeError(pub String);

impl fmt::Display for ParseGradeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid grade {:?} (expected 0-3)", self.0)
    }
}

impl std::error::Error for ParseGradeError {}

impl FromStr for Grade {
    type Err = ParseGradeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse::<u8>().ok().and_then(Grade::new).ok_or_else(|| ParseGradeError(s.to_string()))
    }
}
